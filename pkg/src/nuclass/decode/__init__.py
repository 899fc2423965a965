"""Constrained decoding, first-token class scoring and temperature-scaled confidence."""
from .core import (
    LABEL_TOKENS,
    PREFIX_TEXT,
    ClassConfidence,
    ConstraintSpec,
    GenerationResult,
    InterfaceError,
    LogProbProvider,
    Vocabulary,
    checked_log_probs,
    class_confidence,
    constrained_generate,
    default_constraint,
    default_prompt,
    default_vocabulary,
    enumerate_continuations,
    first_token_class_logprobs,
    sequence_class_logprobs,
)
from .provider import (
    EPSILON,
    SCORE_COLUMNS,
    DecodeRecord,
    ModelBackedProvider,
    decode_dataset,
    decode_event,
    format_scores,
    parse_scores,
)


def model_backed_provider(model, vocab=None, constraint=None):
    return ModelBackedProvider(model, vocab, constraint)


__all__ = [
    "EPSILON", "LABEL_TOKENS", "PREFIX_TEXT", "SCORE_COLUMNS", "ClassConfidence",
    "ConstraintSpec", "DecodeRecord", "GenerationResult", "InterfaceError", "LogProbProvider",
    "ModelBackedProvider", "Vocabulary", "checked_log_probs", "class_confidence",
    "constrained_generate", "decode_dataset", "decode_event", "default_constraint",
    "default_prompt", "default_vocabulary", "enumerate_continuations",
    "first_token_class_logprobs", "format_scores", "model_backed_provider", "parse_scores",
    "sequence_class_logprobs",
]
