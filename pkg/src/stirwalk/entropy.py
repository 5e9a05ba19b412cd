"""Plug-in entropy estimation for occupancy blocks and trajectory symbols.

Blocks are packed into integer ids (newest row or symbol in the lowest
bits, so dropping it is a shift), counted with numpy, and fed to plug-in
Shannon entropy in nats with an optional Miller-Madow style additive bias
correction of (support - 1) / (2 N).  Error bars come from bootstrap
resampling: over independent replicas when the data is replicated, over
contiguous segments for single long sequences.  All resampling randomness
is counter-based off an explicit seed, so estimates are reproducible and
independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng

_TAG_BOOT = rng.tag_hash("bootstrap")


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    std_error: float | None
    estimator: str
    samples: int

    def as_bits(self) -> float:
        return self.value / np.log(2.0)


@dataclass(frozen=True)
class EmpiricalBlockDistribution:
    """Counted block frequencies: ids -> counts, with the block shape kept
    for alphabet bookkeeping."""

    shape: tuple[int, ...]
    ids: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> int:
        return len(self.ids)

    @classmethod
    def from_ids(cls, shape, id_stream) -> "EmpiricalBlockDistribution":
        ids, counts = np.unique(np.asarray(id_stream, dtype=np.int64), return_counts=True)
        return cls(tuple(shape), ids, counts)

    def probability(self, block_id: int) -> float:
        i = np.searchsorted(self.ids, block_id)
        if i < len(self.ids) and self.ids[i] == block_id:
            return float(self.counts[i]) / self.total
        return 0.0


def plugin_entropy_nats(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty sample")
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def _entropy_of_ids(ids: np.ndarray) -> tuple[float, int, int]:
    u, c = np.unique(ids, return_counts=True)
    return plugin_entropy_nats(c), len(u), int(c.sum())


def _pooled(replica_ids: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(r, dtype=np.int64) for r in replica_ids])


def _bootstrap_over_replicas(replica_ids, stat, n_boot: int, seed: int) -> float | None:
    R = len(replica_ids)
    if R < 2 or n_boot < 2:
        return None
    vals = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.mix64_array(seed, _TAG_BOOT, b, np.arange(R)) % np.uint64(R)
        vals[b] = stat(_pooled([replica_ids[int(i)] for i in pick]))
    return float(vals.std(ddof=1))


def block_entropy(
    replica_ids: Sequence[np.ndarray],
    shape: tuple[int, ...],
    bias_correction: bool = True,
    n_boot: int = 40,
    seed: int = 0,
) -> EntropyEstimate:
    """Plug-in block entropy (nats) from per-replica block-id streams.

    The point estimate pools all replicas; the standard error is a
    bootstrap over whole replicas, which respects within-run dependence.
    """

    def stat(ids: np.ndarray) -> float:
        h, support, total = _entropy_of_ids(ids)
        if bias_correction:
            h += (support - 1) / (2.0 * total)
        return h

    pooled = _pooled(replica_ids)
    se = _bootstrap_over_replicas(replica_ids, stat, n_boot, seed)
    return EntropyEstimate(
        value=stat(pooled),
        std_error=se,
        estimator="bias-corrected" if bias_correction else "plug-in",
        samples=len(pooled),
    )


def conditional_entropy(
    replica_joint_ids: Sequence[np.ndarray],
    drop_bits: int,
    shape: tuple[int, ...],
    bias_correction: bool = True,
    n_boot: int = 40,
    seed: int = 0,
) -> EntropyEstimate:
    """H(extended block | base block) = H(joint) - H(base) on shared counts.

    Joint ids carry the extension in their lowest ``drop_bits`` bits, so
    the base block id is ``joint >> drop_bits``; computing both entropies
    from the same counts makes the chain rule an identity.
    """

    def stat(ids: np.ndarray) -> float:
        h_joint, s_joint, total = _entropy_of_ids(ids)
        h_base, s_base, _ = _entropy_of_ids(ids >> np.int64(drop_bits))
        h = h_joint - h_base
        if bias_correction:
            h += (s_joint - s_base) / (2.0 * total)
        return h

    pooled = _pooled(replica_joint_ids)
    se = _bootstrap_over_replicas(replica_joint_ids, stat, n_boot, seed)
    return EntropyEstimate(
        value=stat(pooled),
        std_error=se,
        estimator="bias-corrected" if bias_correction else "plug-in",
        samples=len(pooled),
    )


def aep_fraction(ids, n_sites: int, h_ref: float, epsilon: float) -> float:
    """Mass fraction of samples whose empirical block probability falls in
    the band exp(-(h_ref + eps) * sites) < p < exp(-(h_ref - eps) * sites)."""
    if h_ref < 0 or epsilon <= 0:
        raise ValueError("need h_ref >= 0 and epsilon > 0")
    ids = np.asarray(ids, dtype=np.int64)
    _u, counts = np.unique(ids, return_counts=True)
    total = counts.sum()
    p = counts / total
    lo = np.exp(-(h_ref + epsilon) * n_sites)
    hi = np.exp(-(h_ref - epsilon) * n_sites)
    in_band = (p > lo) & (p < hi)
    return float(counts[in_band].sum() / total)


# ---------------------------------------------------------------------------
# Block extraction from occupancy rows


def pack_rows(window: np.ndarray) -> np.ndarray:
    """Pack (..., n_rows, m) binary windows into ids; the last row lands in
    the lowest m bits and within a row the left site is the high bit."""
    window = np.asarray(window, dtype=np.int64)
    m = window.shape[-1]
    n_rows = window.shape[-2]
    col_w = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    row_ids = (window * col_w).sum(axis=-1)
    row_w = 1 << (np.int64(m) * np.arange(n_rows - 1, -1, -1, dtype=np.int64))
    return (row_ids * row_w).sum(axis=-1)


def block_ids_from_history(
    rows: np.ndarray, m: int, n_rows: int, x_stride: int, t_stride: int
) -> np.ndarray:
    """Decorrelated block samples from one run's row history.

    rows has shape (T, W); blocks are n_rows x m windows ending at times
    n_rows - 1, n_rows - 1 + t_stride, ... with horizontal offsets
    0, x_stride, ... (never wrapping).  Strides of at least m + 4 and
    n_rows + 4 keep samples weakly dependent.
    """
    rows = np.asarray(rows)
    T, W = rows.shape
    t_ends = np.arange(n_rows - 1, T, t_stride)
    x_starts = np.arange(0, W - m + 1, x_stride)
    out = []
    for te in t_ends:
        window = rows[te - n_rows + 1 : te + 1]
        slabs = np.stack([window[:, x0 : x0 + m] for x0 in x_starts])
        out.append(pack_rows(slabs))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# Free sites


@dataclass(frozen=True)
class FreeSiteStats:
    positions: list[np.ndarray]
    q_hat: float


def free_positions_in_row(row: np.ndarray, torus: bool = True) -> np.ndarray:
    """Sites that hold a particle with three empty sites on each side.

    On a torus all positions qualify via wraparound; in plane mode only
    interior positions (both 3-neighborhoods in range) are considered.
    """
    row = np.asarray(row, dtype=np.uint8)
    W = row.shape[0]
    if W < 7:
        raise ValueError("row must have width at least 7")
    occupied = row == 1
    ok = occupied.copy()
    for d in (1, 2, 3):
        ok &= np.roll(row, d) == 0
        ok &= np.roll(row, -d) == 0
    if torus:
        return np.nonzero(ok)[0]
    pos = np.nonzero(ok)[0]
    return pos[(pos >= 3) & (pos <= W - 4)]


def free_site_stats(rows: np.ndarray, torus: bool = True) -> FreeSiteStats:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
    positions = [free_positions_in_row(r, torus) for r in rows]
    W = rows.shape[1] if torus else rows.shape[1] - 6
    q = float(np.mean([len(p) / W for p in positions]))
    return FreeSiteStats(positions, q)


# ---------------------------------------------------------------------------
# Trajectory symbols


def symbol_window_ids(symbols: np.ndarray, block_len: int) -> np.ndarray:
    """Sliding windows of a -1/0/+1 symbol sequence packed base 3, newest
    symbol in the least significant trit."""
    s = np.asarray(symbols, dtype=np.int64) + 1
    if s.min() < 0 or s.max() > 2:
        raise ValueError("symbols must be in {-1, 0, 1}")
    n = len(s) - block_len + 1
    if n <= 0:
        raise ValueError("sequence shorter than the block length")
    weights = 3 ** np.arange(block_len - 1, -1, -1, dtype=np.int64)
    idx = np.arange(block_len)[None, :] + np.arange(n)[:, None]
    return (s[idx] * weights).sum(axis=1)


def trajectory_entropy_rate(
    symbols: np.ndarray,
    block_len: int,
    bias_correction: bool = True,
    n_segments: int = 50,
    n_boot: int = 40,
    seed: int = 0,
) -> EntropyEstimate:
    """Per-step entropy rate of one symbol sequence (nats).

    Estimated as H(length-L windows) - H(length-(L-1) windows) on the same
    sliding-window counts (the L-1 windows are the L windows' prefixes, so
    the difference is the plug-in conditional entropy of a symbol given the
    previous L-1).  The standard error is a block bootstrap over contiguous
    segments of the window stream.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    if len(symbols) < block_len * 3**block_len // 8:
        raise ValueError(
            f"sequence of length {len(symbols)} is too short for "
            f"block_len {block_len}"
        )
    ids = symbol_window_ids(symbols, block_len)

    def stat(win_ids: np.ndarray) -> float:
        h_joint, s_joint, total = _entropy_of_ids(win_ids)
        h_base, s_base, _ = _entropy_of_ids(win_ids // 3)
        h = h_joint - h_base
        if bias_correction:
            h += (s_joint - s_base) / (2.0 * total)
        return h

    n = len(ids)
    seg = max(1, n // n_segments)
    starts = np.arange(0, n - seg + 1, seg)
    se = None
    if len(starts) >= 2 and n_boot >= 2:
        vals = np.empty(n_boot)
        for b in range(n_boot):
            pick = rng.mix64_array(seed, _TAG_BOOT, b, np.arange(len(starts))) % np.uint64(
                len(starts)
            )
            sample = np.concatenate([ids[starts[int(i)] : starts[int(i)] + seg] for i in pick])
            vals[b] = stat(sample)
        se = float(vals.std(ddof=1))
    return EntropyEstimate(
        value=stat(ids),
        std_error=se,
        estimator="bias-corrected" if bias_correction else "plug-in",
        samples=n,
    )


def predictable_fraction(ids, m: int, epsilon: float) -> tuple[int, float, float]:
    """Smallest set of length-m blocks covering 1 - epsilon of the mass.

    Returns (set size, mass actually covered, budget (1 + epsilon)^m).
    A source is 'predictable' at this scale when the set size stays within
    the budget.
    """
    if m > 24:
        raise ValueError("m capped at 24")
    ids = np.asarray(ids, dtype=np.int64)
    _u, counts = np.unique(ids, return_counts=True)
    order = np.sort(counts)[::-1]
    total = counts.sum()
    need = (1.0 - epsilon) * total
    cum = np.cumsum(order)
    k = int(np.searchsorted(cum, need, side="left")) + 1
    k = min(k, len(order))
    return k, float(cum[k - 1] / total), float((1.0 + epsilon) ** m)
