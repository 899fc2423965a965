"""Prefix-constrained decoding and first-token class scoring.

A provider maps a token context to a full-vocabulary log-probability
vector. Generation is forced through a fixed prefix and then into exactly
one of the allowed label sequences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from ..autodiff import ConfigError
from ..detsim.events import CLASSES
from ..detsim.geometry import DomainError

PREFIX_TEXT = "I classify the pixel maps as"
SYSTEM_TEXT = ("You are an expert in neutrino physics reading liquid argon detector images . "
               "Classify the interaction shown in the two projections .")
USER_TEXT = "Here are the XZ and YZ pixel maps of one event . Which class is it ?"
LABEL_TOKENS = {"NuE_CC": ("NuE", "_CC"), "NuMu_CC": ("NuMu", "_CC"), "NC": ("NC",)}
SPECIALS = ("<bos>", "<eos>", "<img>", "<resp>")


class InterfaceError(ValueError):
    """A provider returned something other than a full-vocabulary vector."""


class Vocabulary:
    """Dense bijective token <-> id table."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            dup = sorted({t for t in tokens if tokens.count(t) > 1})
            raise ConfigError(f"duplicate vocabulary tokens: {dup}")
        self.tokens = tokens
        self.ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def id(self, token):
        try:
            return self.ids[token]
        except KeyError:
            raise ConfigError(f"token {token!r} is not in the vocabulary") from None

    def encode(self, text):
        words = text.split() if isinstance(text, str) else list(text)
        return [self.id(w) for w in words]

    def decode(self, ids):
        return " ".join(self.tokens[i] for i in ids)

    @classmethod
    def from_texts(cls, *texts, extra=()):
        seen = dict.fromkeys(SPECIALS)
        for t in texts:
            seen.update(dict.fromkeys(t.split() if isinstance(t, str) else t))
        seen.update(dict.fromkeys(extra))
        return cls(seen)


def default_vocabulary():
    labels = [tok for seq in LABEL_TOKENS.values() for tok in seq]
    return Vocabulary.from_texts(SYSTEM_TEXT, USER_TEXT, PREFIX_TEXT, extra=labels)


@dataclass(frozen=True)
class ConstraintSpec:
    """Forced prefix ids plus (class name, label ids) continuations."""

    prefix: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(t) for t in self.prefix))
        object.__setattr__(self, "labels", tuple((str(c), tuple(int(t) for t in seq))
                                                 for c, seq in self.labels))
        if not self.labels:
            raise ConfigError("at least one label continuation is required")
        for cls_name, seq in self.labels:
            if not seq:
                raise ConfigError(f"label sequence for {cls_name} is empty")
        names = [c for c, _ in self.labels]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate class names in constraint: {names}")

    @property
    def classes(self):
        return tuple(c for c, _ in self.labels)

    @property
    def first_tokens(self):
        return tuple(seq[0] for _, seq in self.labels)

    def check_first_tokens(self):
        firsts = self.first_tokens
        if len(set(firsts)) != len(firsts):
            raise ConfigError(f"label first tokens are not distinct ({firsts}); "
                              "first-token scoring is undefined")
        return firsts

    def allowed_next(self, generated):
        """Token ids that keep ``generated`` on a constraint path; empty when complete."""
        g = tuple(generated)
        n = len(self.prefix)
        if len(g) < n:
            return [self.prefix[len(g)]] if g == self.prefix[:len(g)] else []
        if g[:n] != self.prefix:
            return []
        tail = g[n:]
        out = []
        for _, seq in self.labels:
            if len(tail) < len(seq) and seq[:len(tail)] == tail and seq[len(tail)] not in out:
                out.append(seq[len(tail)])
        return out

    def completed_label(self, generated):
        """Index of the label that ``generated`` ends in exactly, or None."""
        g = tuple(generated)
        n = len(self.prefix)
        if g[:n] != self.prefix:
            return None
        for i, (_, seq) in enumerate(self.labels):
            if g[n:] == seq:
                return i
        return None


def default_constraint(vocab=None):
    vocab = vocab or default_vocabulary()
    spec = ConstraintSpec(tuple(vocab.encode(PREFIX_TEXT)),
                          tuple((c, tuple(vocab.encode(LABEL_TOKENS[c]))) for c in CLASSES))
    spec.check_first_tokens()
    return spec


def default_prompt(vocab=None):
    """Opaque prompt ids: <bos> system <img> user <resp>."""
    vocab = vocab or default_vocabulary()
    return ([vocab.id("<bos>")] + vocab.encode(SYSTEM_TEXT) + [vocab.id("<img>")]
            + vocab.encode(USER_TEXT) + [vocab.id("<resp>")])


class LogProbProvider(Protocol):
    vocab_size: int

    def next_log_probs(self, context, images=None) -> np.ndarray: ...


def checked_log_probs(provider, context, images=None, tol=1e-6):
    lp = np.asarray(provider.next_log_probs(list(context), images), dtype=np.float64)
    if lp.shape != (provider.vocab_size,):
        raise InterfaceError(f"provider returned shape {lp.shape}, vocabulary has "
                             f"{provider.vocab_size} tokens")
    total = logsumexp(lp)
    if not abs(total) <= tol:
        raise InterfaceError(f"provider log-probabilities log-sum-exp to {total:.3g}, not 0")
    return lp


@dataclass
class GenerationResult:
    class_index: int
    class_name: str
    tokens: list  # generated ids, prefix first
    score: float  # total log-probability of the generated ids
    label_scores: dict  # class name -> total log-probability of each completed path explored


def constrained_generate(provider, prompt, constraint: ConstraintSpec, beam_width=3,
                         images=None):
    """Beam search restricted to prefix + one allowed label.

    Hypotheses are ranked by cumulative log-probability (ties broken by
    label order). Only constraint-consistent tokens are ever expanded, so
    every finished hypothesis is the prefix followed by a full label.
    """
    if isinstance(beam_width, bool) or not isinstance(beam_width, (int, np.integer)) or beam_width < 1:
        raise ConfigError(f"beam width must be an integer >= 1, got {beam_width!r}")
    prompt = list(prompt)
    rank = {seq: i for i, (_, seq) in enumerate(constraint.labels)}
    n = len(constraint.prefix)

    def order_key(item):
        toks, score = item
        tail = toks[n:]
        first = min((i for seq, i in rank.items() if seq[:len(tail)] == tail), default=len(rank))
        return (-score, first)

    active = [([], 0.0)]
    finished = []
    while active:
        candidates = []
        for toks, score in active:
            allowed = constraint.allowed_next(toks)
            lp = checked_log_probs(provider, prompt + toks, images)
            for t in allowed:
                candidates.append((toks + [t], score + float(lp[t])))
        candidates.sort(key=order_key)
        active = []
        for toks, score in candidates[:beam_width]:
            (finished if constraint.completed_label(toks) is not None else active).append(
                (toks, score))
    if not finished:
        raise ConfigError("constraint admits no complete continuation")  # defensive
    finished.sort(key=order_key)
    best_toks, best_score = finished[0]
    idx = constraint.completed_label(best_toks)
    scores = {constraint.labels[constraint.completed_label(t)][0]: s for t, s in finished}
    return GenerationResult(idx, constraint.labels[idx][0], best_toks, best_score, scores)


def enumerate_continuations(provider, prompt, constraint: ConstraintSpec, images=None):
    """Exhaustive total log-probability of every allowed completion, keyed by class."""
    prompt = list(prompt)
    out = {}
    for name, seq in constraint.labels:
        toks = list(constraint.prefix) + list(seq)
        total = 0.0
        for i, t in enumerate(toks):
            total += float(checked_log_probs(provider, prompt + toks[:i], images)[t])
        out[name] = total
    return out


def first_token_class_logprobs(provider, context, constraint: ConstraintSpec, images=None):
    """Log-probabilities of each class's first label token at the branch position."""
    firsts = constraint.check_first_tokens()
    lp = checked_log_probs(provider, context, images)
    return np.array([lp[t] for t in firsts])


def sequence_class_logprobs(provider, context, constraint: ConstraintSpec, images=None):
    """Full label-sequence log-probabilities (diagnostic; the scoring rule uses first tokens)."""
    context = list(context)
    out = []
    for _, seq in constraint.labels:
        total = 0.0
        for i, t in enumerate(seq):
            total += float(checked_log_probs(provider, context + list(seq[:i]), images)[t])
        out.append(total)
    return np.array(out)


@dataclass
class ClassConfidence:
    probabilities: np.ndarray
    temperature: float
    logprobs: np.ndarray
    classes: tuple = CLASSES

    @property
    def argmax(self):
        return int(np.argmax(self.probabilities))


def class_confidence(logprobs, T=5.0, classes=CLASSES):
    """softmax(T * log p), evaluated with max subtraction."""
    lp = np.asarray(logprobs, dtype=np.float64)
    if not np.isfinite(T) or T <= 0:
        raise DomainError(f"temperature must be positive and finite, got {T}")
    if lp.ndim != 1 or not np.all(np.isfinite(lp)):
        raise DomainError("log-probabilities must be a finite 1-D vector")
    z = T * lp
    z = z - z.max()
    e = np.exp(z)
    return ClassConfidence(e / e.sum(), float(T), lp, tuple(classes))
