"""Synthetic fixtures and label alignment for desk-scale verification.

The real recordings and embedding extractor behind the original experiment
are not available, so sessions are exercised against sampled chains and
Gaussian cluster embeddings with known ground truth.
"""

from __future__ import annotations

import itertools
from typing import Iterator, Sequence

import numpy as np

from . import markov
from .clustering import EmbeddingSet
from .errors import ValidationError
from .markov import StateSequence, TransitionModel, _as_labels


def generate_synthetic_sequence(
    truth_chain: TransitionModel, length: int, initial: int, seed: int
) -> StateSequence:
    """Sample a label sequence from a chain, deterministically per seed."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    if not 0 <= initial < truth_chain.n_states:
        raise ValidationError(
            f"initial {initial} outside 0..{truth_chain.n_states - 1}"
        )
    rng = np.random.default_rng(seed)
    labels = [initial]
    for _ in range(length - 1):
        labels.append(markov.sample_next(truth_chain, labels[-1], rng))
    return StateSequence(labels=tuple(labels), n_states=truth_chain.n_states)


def chain_oracle(
    truth_chain: TransitionModel,
    length: int,
    initial: int,
    seed: int,
    iterations: int | None = None,
) -> Iterator[StateSequence]:
    """Yield sequences that continue one sampled trajectory of the chain.

    The first sequence starts at `initial`; each later one picks up from
    the state following the previous sequence's last label. One generator
    is threaded across the whole trajectory.
    """
    rng = np.random.default_rng(seed)
    current = initial
    count = 0
    while iterations is None or count < iterations:
        labels = [current] if count == 0 else [
            markov.sample_next(truth_chain, current, rng)
        ]
        while len(labels) < length:
            labels.append(markov.sample_next(truth_chain, labels[-1], rng))
        current = labels[-1]
        count += 1
        yield StateSequence(labels=tuple(labels), n_states=truth_chain.n_states)


def matched_chain_oracle(
    truth_chain: TransitionModel,
    length: int,
    initial: int,
    seed: int,
    iterations: int | None = None,
    bootstrap: StateSequence | None = None,
) -> Iterator[StateSequence]:
    """Chain oracle whose draws replay the session's candidate-0 stream.

    Iteration ``i`` samples with ``default_rng([seed, i, 0])``, the same
    derivation ``run_session`` uses for its first candidate, so a session
    run with the same seed predicts this oracle exactly whenever its
    estimated matrix agrees with the truth chain. Useful for verifying the
    whole loop is self-consistent; the residual TPE measures estimation
    error only.

    An explicit `bootstrap` sequence (for example one built by
    sequence_with_exact_counts, which makes the session's initial estimate
    equal the truth chain) replaces the sampled first sequence; the chain
    then continues from its last label.
    """
    count = 0
    if bootstrap is not None:
        if bootstrap.n_states != truth_chain.n_states:
            raise ValidationError("bootstrap alphabet does not match the chain")
        current = bootstrap.labels[-1]
        count = 1
        yield bootstrap
    else:
        current = initial
    while iterations is None or count < iterations:
        rng = np.random.default_rng([seed, count, 0])
        labels = [current] if count == 0 else [
            markov.sample_next(truth_chain, current, rng)
        ]
        while len(labels) < length:
            labels.append(markov.sample_next(truth_chain, labels[-1], rng))
        current = labels[-1]
        count += 1
        yield StateSequence(labels=tuple(labels), n_states=truth_chain.n_states)


def sequence_with_exact_counts(counts: np.ndarray) -> StateSequence:
    """Build a sequence whose bigram counts equal `counts` exactly.

    Walks an Eulerian circuit of the bigram multigraph (Hierholzer), so the
    maximum-likelihood estimate of the result reproduces
    ``counts / row_sums`` with no sampling error. Requires every state's
    in-count to equal its out-count and the graph to be connected.
    """
    matrix = np.asarray(counts, dtype=np.int64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"counts must be square, got shape {matrix.shape}")
    if (matrix < 0).any():
        raise ValidationError("counts must be non-negative")
    out_deg = matrix.sum(axis=1)
    in_deg = matrix.sum(axis=0)
    if (out_deg != in_deg).any():
        raise ValidationError(
            "in-counts must equal out-counts for every state to close a circuit"
        )
    if matrix.sum() == 0:
        raise ValidationError("counts are all zero; nothing to traverse")
    remaining = matrix.copy()
    start = int(np.flatnonzero(out_deg)[0])
    stack = [start]
    circuit: list[int] = []
    while stack:
        node = stack[-1]
        successors = np.flatnonzero(remaining[node])
        if successors.size:
            nxt = int(successors[0])
            remaining[node, nxt] -= 1
            stack.append(nxt)
        else:
            circuit.append(stack.pop())
    if remaining.sum() != 0:
        raise ValidationError("bigram graph is not connected; no single circuit")
    circuit.reverse()
    return StateSequence(labels=tuple(circuit), n_states=matrix.shape[0])


def generate_synthetic_embeddings(
    n_clusters: int,
    per_cluster: int,
    dim: int,
    separation: float,
    noise_sigma: float,
    seed: int,
) -> tuple[EmbeddingSet, list[int]]:
    """Gaussian blobs at simplex corners with the given pairwise separation.

    Cluster means sit at ``(separation / sqrt(2)) * e_i``, which makes every
    pair of means exactly `separation` apart. Labels come back grouped:
    ``[0] * per_cluster + [1] * per_cluster + ...``.
    """
    if n_clusters < 1 or per_cluster < 1:
        raise ValidationError("n_clusters and per_cluster must be >= 1")
    if separation <= 0 or noise_sigma <= 0:
        raise ValidationError("separation and noise_sigma must be positive")
    if dim < n_clusters:
        raise ValidationError(
            f"dim {dim} too small to place {n_clusters} simplex corners"
        )
    rng = np.random.default_rng(seed)
    means = np.zeros((n_clusters, dim))
    scale = separation / np.sqrt(2.0)
    for i in range(n_clusters):
        means[i, i] = scale
    labels = [c for c in range(n_clusters) for _ in range(per_cluster)]
    points = means[labels] + rng.normal(0.0, noise_sigma, (len(labels), dim))
    return EmbeddingSet(vectors=points), labels


def align_labels(
    pred: StateSequence | Sequence[int], truth: StateSequence | Sequence[int]
) -> tuple[tuple[int, ...], list[int]]:
    """Best relabeling of `pred` onto `truth`'s label ids.

    Cluster ids are arbitrary, so a brute-force search over permutations of
    the label alphabet finds the one minimizing mismatches (ties break to
    the lexicographically smallest permutation). Returns the permutation
    and the relabeled sequence. Alphabets above 8 states are rejected;
    the factorial search is the point, not a bottleneck to engineer around.
    """
    p = _as_labels(pred)
    t = _as_labels(truth)
    if p.size != t.size:
        raise ValidationError(f"length mismatch: {p.size} vs {t.size}")
    n_states = int(max(p.max(initial=0), t.max(initial=0))) + 1
    if isinstance(pred, StateSequence):
        n_states = max(n_states, pred.n_states)
    if isinstance(truth, StateSequence):
        n_states = max(n_states, truth.n_states)
    if n_states > 8:
        raise ValidationError(
            f"alignment supports at most 8 states, got {n_states}"
        )
    best_perm: tuple[int, ...] | None = None
    best_mismatches = p.size + 1
    for perm in itertools.permutations(range(n_states)):
        table = np.asarray(perm)
        mismatches = int(np.count_nonzero(table[p] != t))
        if mismatches < best_mismatches:
            best_mismatches = mismatches
            best_perm = perm
    assert best_perm is not None
    aligned = [int(best_perm[x]) for x in p]
    return best_perm, aligned
