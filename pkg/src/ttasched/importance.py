"""Backpropagation-free layer importance.

Each layer's output distribution is summarized by an interleaved vector of
channel-wise means and population variances. Importance is the divergence of
the current batch's embedding from an exponentially tracked history
embedding: large divergence marks a layer whose behaviour the new
environment has drifted away from, i.e. a layer worth updating.

Two divergence modes exist. The default ``gaussian`` mode treats each
channel's (mean, variance) pair as a Gaussian and sums closed-form Gaussian
KL over channels; it is well-defined for arbitrary real means. The
``elementwise`` mode softmax-normalizes both embedding vectors and applies
the discrete KL sum, kept for comparison.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .network import Network

KL_MODES = ("gaussian", "elementwise")

# additive floor on every variance before a KL evaluation, so constant
# channels cannot divide by zero
VARIANCE_FLOOR = 1e-6

DEFAULT_ALPHA = 0.1

# analytic op-count model for the assessment overhead: extracting mean and
# population variance costs ~4 ops per sample per channel plus the two
# divisions; one channel's Gaussian KL costs a dozen more
_EXTRACT_OPS_PER_SAMPLE = 4
_EXTRACT_OPS_PER_CHANNEL = 2
_KL_OPS_PER_CHANNEL = 12


@dataclass(frozen=True)
class FeatureStats:
    """Channel-wise first and second moments of one layer's output batch."""

    means: np.ndarray
    variances: np.ndarray
    sample_count: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        if means.ndim != 1 or means.shape != variances.shape:
            raise InputError("means and variances must be 1-D and equal length")
        if means.size == 0:
            raise InputError("stats must cover at least one channel")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise InputError("stats must be finite")
        if np.any(variances < 0):
            raise InputError("variances must be non-negative")
        if self.sample_count < 1:
            raise InputError("sample_count must be >= 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def channels(self) -> int:
        return self.means.size


@dataclass(frozen=True)
class Embedding:
    """Interleaved [mean, variance] pairs, one pair per channel."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0 or values.size % 2 != 0:
            raise InputError("embedding must be a non-empty even-length vector")
        if not np.all(np.isfinite(values)):
            raise InputError("embedding must be finite")
        if np.any(values[1::2] < 0):
            raise InputError("variance slots must be non-negative")
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.size // 2

    @property
    def means(self) -> np.ndarray:
        return self.values[0::2]

    @property
    def variances(self) -> np.ndarray:
        return self.values[1::2]

    @classmethod
    def from_stats(cls, stats: FeatureStats) -> "Embedding":
        values = np.empty(2 * stats.channels)
        values[0::2] = stats.means
        values[1::2] = stats.variances
        return cls(values)


def embed(source) -> Embedding:
    """Embed raw per-channel samples, or precomputed FeatureStats.

    Raw input is a 2-D array-like of shape (channels, samples) or a sequence
    of per-channel sample vectors. Variances are population variances
    (divide by N, not N-1).
    """
    if isinstance(source, FeatureStats):
        return Embedding.from_stats(source)
    if isinstance(source, Embedding):
        return source
    rows = [np.asarray(row, dtype=float) for row in source]
    if not rows:
        raise InputError("no channels to embed")
    values = np.empty(2 * len(rows))
    for c, row in enumerate(rows):
        if row.size == 0:
            raise InputError(f"channel {c} has no samples")
        if not np.all(np.isfinite(row)):
            raise InputError(f"channel {c} contains non-finite samples")
        mu = float(np.mean(row))
        values[2 * c] = mu
        values[2 * c + 1] = float(np.mean((row - mu) ** 2))
    return Embedding(values)


def _gaussian_kl(history: Embedding, current: Embedding) -> float:
    sh2 = history.variances + VARIANCE_FLOOR
    se2 = current.variances + VARIANCE_FLOOR
    dmu = history.means - current.means
    terms = 0.5 * np.log(se2 / sh2) + (sh2 + dmu * dmu) / (2.0 * se2) - 0.5
    return float(np.sum(terms))


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / np.sum(e)


def _elementwise_kl(history: Embedding, current: Embedding) -> float:
    p = _softmax(history.values)
    q = _softmax(current.values)
    return float(np.sum(p * np.log(p / q)))


def layer_importance(history: Embedding, current: Embedding, mode: str = "gaussian") -> float:
    """Divergence of the current embedding from the history embedding."""
    if mode not in KL_MODES:
        raise InputError(f"unknown divergence mode {mode!r}")
    if history.values.shape != current.values.shape:
        raise InputError(
            f"embedding length mismatch: history {history.values.size}, "
            f"current {current.values.size}"
        )
    if mode == "gaussian":
        value = _gaussian_kl(history, current)
    else:
        value = _elementwise_kl(history, current)
    # divergences are non-negative; clip float dust from the sums
    return value if value > 0.0 else 0.0


@dataclass(frozen=True)
class EmbeddingHistory:
    """Tracked per-layer history embeddings with their blending rate."""

    embeddings: tuple[Embedding, ...]
    alpha: float = DEFAULT_ALPHA
    batches_seen: int = 1

    def __post_init__(self):
        if not self.embeddings:
            raise InputError("history must cover at least one layer")
        if not (0.0 <= self.alpha <= 1.0):
            raise InputError("alpha must lie in [0, 1]")
        if self.batches_seen < 1:
            raise InputError("batches_seen must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.embeddings)

    @classmethod
    def seed(cls, currents: Iterable, alpha: float = DEFAULT_ALPHA) -> "EmbeddingHistory":
        """Start a history from the first observed batch, taken verbatim."""
        return cls(embeddings=tuple(embed(c) for c in currents), alpha=alpha)

    def storage_bytes(self, scalar_width: int = 4) -> int:
        return sum(e.values.size for e in self.embeddings) * scalar_width


def update_history(history: EmbeddingHistory, currents: Sequence) -> EmbeddingHistory:
    """Blend the current batch into the history, weight ``alpha`` on the new
    environment."""
    currents = [embed(c) for c in currents]
    if len(currents) != history.n_layers:
        raise InputError(
            f"history covers {history.n_layers} layers, got {len(currents)}"
        )
    a = history.alpha
    blended = []
    for h, e in zip(history.embeddings, currents):
        if h.values.shape != e.values.shape:
            raise InputError("embedding shape changed between batches")
        blended.append(Embedding(a * e.values + (1.0 - a) * h.values))
    return EmbeddingHistory(
        embeddings=tuple(blended),
        alpha=a,
        batches_seen=history.batches_seen + 1,
    )


def adaptation_loss(histories: Sequence, currents: Sequence, mode: str = "gaussian") -> float:
    """Sum of per-layer divergences over all layers, the adaptation objective."""
    histories = [embed(h) for h in histories]
    currents = [embed(c) for c in currents]
    if len(histories) != len(currents):
        raise InputError(
            f"layer count mismatch: {len(histories)} history vs "
            f"{len(currents)} current"
        )
    return sum(layer_importance(h, c, mode) for h, c in zip(histories, currents))


@dataclass(frozen=True)
class ImportanceVector:
    """Per-layer importance, backward-indexed 1..N (slot 0 is 0).

    Parameter-free layers carry importance 0 by convention; they can never
    be selected, so any drift they register is unusable by the scheduler.
    """

    a: np.ndarray
    mode: str = "gaussian"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise InputError("importance vector must be 1-D with slot 0 padding")
        if a[0] != 0.0:
            raise InputError("slot 0 of the importance vector is padding")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise InputError("importances must be finite and non-negative")
        if self.mode not in KL_MODES:
            raise InputError(f"unknown divergence mode {self.mode!r}")
        object.__setattr__(self, "a", a)

    @property
    def n_layers(self) -> int:
        return self.a.size - 1

    @property
    def total(self) -> float:
        return float(np.sum(self.a))


def assessment_flops(network: Network, stats: Sequence[FeatureStats]) -> float:
    """Analytic op count of one assessment pass (moment extraction + KL)."""
    total = 0.0
    for layer, st in zip(network.layers, stats):
        n_c = st.channels
        total += n_c * (
            _EXTRACT_OPS_PER_SAMPLE * st.sample_count
            + _EXTRACT_OPS_PER_CHANNEL
            + _KL_OPS_PER_CHANNEL
        )
    return total


def assess(
    network: Network,
    history: EmbeddingHistory,
    current_stats: Sequence[FeatureStats],
    mode: str = "gaussian",
) -> tuple[ImportanceVector, float]:
    """Score every layer of the network against the history.

    Returns the backward-indexed importance vector (parameter-free layers
    forced to 0) and the analytic op count of the assessment.
    """
    n = network.n_layers
    if history.n_layers != n:
        raise InputError(
            f"history covers {history.n_layers} layers, network has {n}"
        )
    if len(current_stats) != n:
        raise InputError(
            f"stats cover {len(current_stats)} layers, network has {n}"
        )
    a = np.zeros(n + 1)
    for layer_id in range(n):
        layer = network.layers[layer_id]
        st = current_stats[layer_id]
        if st.channels != layer.channels:
            raise InputError(
                f"layer {layer_id}: stats cover {st.channels} channels, "
                f"layer has {layer.channels}"
            )
        if not layer.has_params:
            continue
        b = network.backward_index(layer_id)
        a[b] = layer_importance(history.embeddings[layer_id], embed(st), mode)
    flops = assessment_flops(network, current_stats)
    return ImportanceVector(a=a, mode=mode), flops


def load_stats_lines(text: str) -> list[FeatureStats]:
    """Parse JSON-lines feature stats (one record per layer) into a
    forward-ordered list."""
    records = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            layer_id = int(rec["layer_id"])
            stats = FeatureStats(
                means=np.asarray(rec["means"], dtype=float),
                variances=np.asarray(rec["vars"], dtype=float),
                sample_count=int(rec["samples"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"stats line {lineno} malformed: {exc}") from None
        if layer_id in records:
            raise InputError(f"stats line {lineno}: duplicate layer {layer_id}")
        records[layer_id] = stats
    if not records:
        raise InputError("stats file contains no records")
    n = len(records)
    if set(records) != set(range(n)):
        raise InputError("stats layer ids must be contiguous from 0")
    return [records[i] for i in range(n)]


def load_stats_file(path) -> list[FeatureStats]:
    with open(path) as fh:
        return load_stats_lines(fh.read())


def stats_to_lines(stats: Sequence[FeatureStats]) -> str:
    lines = []
    for layer_id, st in enumerate(stats):
        lines.append(
            json.dumps(
                {
                    "layer_id": layer_id,
                    "means": [float(x) for x in st.means],
                    "vars": [float(x) for x in st.variances],
                    "samples": st.sample_count,
                }
            )
        )
    return "\n".join(lines) + "\n"
