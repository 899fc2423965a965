"""Log-probability provider backed by the trained classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ConfigError, softmax
from .core import (
    ClassConfidence,
    ConstraintSpec,
    class_confidence,
    constrained_generate,
    default_constraint,
    default_prompt,
    default_vocabulary,
    first_token_class_logprobs,
)

EPSILON = 1e-6
TINY = 1e-300


class ModelBackedProvider:
    """Turns CNN class probabilities into next-token distributions.

    The generated part of a context is everything after the last ``<resp>``
    token. On the forced prefix the expected token gets 1 - eps; at the
    branch the class probabilities (times 1 - eps) go to the first label
    tokens; inside a label its next token gets 1 - eps, and ``<eos>`` once
    the label is complete. The eps residual is spread evenly over all other
    tokens.
    """

    def __init__(self, model, vocab=None, constraint: ConstraintSpec | None = None,
                 epsilon=EPSILON):
        self.model = model
        self.vocab = vocab or default_vocabulary()
        self.constraint = constraint or default_constraint(self.vocab)
        self.constraint.check_first_tokens()
        if len(self.constraint.labels) != model.config.n_classes:
            raise ConfigError(f"constraint has {len(self.constraint.labels)} labels, "
                              f"model has {model.config.n_classes} classes")
        if not 0 < epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
        self.epsilon = epsilon
        self.vocab_size = len(self.vocab)
        self.marker = self.vocab.id("<resp>")
        self.eos = self.vocab.id("<eos>")

    def class_probabilities(self, images):
        X = np.asarray(images)
        return softmax(self.model.forward(X[None] if X.ndim == 3 else X).data)[0]

    def _spread(self, targets, masses):
        V = self.vocab_size
        probs = np.full(V, self.epsilon / (V - len(targets)))
        probs[list(targets)] = (1.0 - self.epsilon) * np.maximum(masses, TINY)
        return np.log(probs)

    def next_log_probs(self, context, images=None):
        context = list(context)
        hits = [i for i, t in enumerate(context) if t == self.marker]
        if not hits:
            raise ConfigError("context has no <resp> marker")
        generated = tuple(context[hits[-1] + 1:])
        c = self.constraint
        n = len(c.prefix)
        if len(generated) == n and generated == c.prefix:
            if images is None:
                raise ConfigError("the branch position needs the event images")
            return self._spread(c.first_tokens, self.class_probabilities(images))
        allowed = c.allowed_next(generated)
        if allowed:
            return self._spread(allowed[:1], np.ones(1))
        if c.completed_label(generated) is not None:
            return self._spread([self.eos], np.ones(1))
        return np.full(self.vocab_size, -np.log(self.vocab_size))


@dataclass
class DecodeRecord:
    event_id: int
    truth: str
    predicted: str
    confidence: ClassConfidence
    generated: str

    @property
    def probabilities(self):
        return self.confidence.probabilities

    @property
    def logprobs(self):
        return self.confidence.logprobs


def decode_event(provider: ModelBackedProvider, images, temperature=5.0, beam=3,
                 event_id=0, truth=""):
    prompt = default_prompt(provider.vocab)
    result = constrained_generate(provider, prompt, provider.constraint, beam, images)
    context = prompt + list(provider.constraint.prefix)
    lp = first_token_class_logprobs(provider, context, provider.constraint, images)
    conf = class_confidence(lp, temperature, provider.constraint.classes)
    return DecodeRecord(int(event_id), truth, result.class_name, conf,
                        provider.vocab.decode(result.tokens))


def decode_dataset(model, X, y=None, event_ids=None, temperature=5.0, beam=3):
    provider = ModelBackedProvider(model)
    names = provider.constraint.classes
    ids = range(len(X)) if event_ids is None else event_ids
    truths = [names[int(t)] for t in y] if y is not None else [""] * len(X)
    return [decode_event(provider, X[i], temperature, beam, eid, truths[i])
            for i, eid in enumerate(ids)]


SCORE_COLUMNS = ("event_id", "truth", "predicted",
                 "P_NuE_CC", "P_NuMu_CC", "P_NC", "logp_NuE_CC", "logp_NuMu_CC", "logp_NC")


def format_scores(records):
    """Tab-separated score table with a header line; floats use repr precision."""
    lines = ["\t".join(SCORE_COLUMNS)]
    for r in records:
        vals = [str(r.event_id), r.truth, r.predicted]
        vals += [repr(float(p)) for p in r.probabilities]
        vals += [repr(float(v)) for v in r.logprobs]
        lines.append("\t".join(vals))
    return "\n".join(lines) + "\n"


def parse_scores(text):
    rows = text.strip("\n").split("\n")
    header = rows[0].split("\t")
    if tuple(header) != SCORE_COLUMNS:
        raise ValueError(f"unexpected score header {header}")
    out = []
    for line in rows[1:]:
        v = line.split("\t")
        out.append({"event_id": int(v[0]), "truth": v[1], "predicted": v[2],
                    "P": [float(x) for x in v[3:6]], "logp": [float(x) for x in v[6:9]]})
    return out
