"""Discrete-time symmetric simple exclusion via the stirring construction.

Every horizontal space-time edge carries a seed-derived firing bit
(Bernoulli(p)) and a 64-bit tie-break key.  Within each maximal run of
consecutive fired edges, exactly one edge stirs: the one with the smallest
key (key ties, probability ~2^-64, break to the smaller edge index).  A
stirred edge exchanges the occupancies of its two endpoint sites, so each
time step is a permutation of sites and particle number is conserved.

Default topology is a torus of width W (edge x joins sites x and x+1 mod W;
an all-fired ring is a single cyclic run).  A plane mode addresses edges on
all of Z lazily, which is what particle tracking and the two-particle
coupling use: whether an edge stirs is decided by exploring its run outward
until an unfired edge, an O(1) expected amount of work for p < 1.

There are two implementations of the stir decision: a scalar reference
(run exploration) and a replica-batched numpy path (iterative doubling of
run prefix minima).  They agree bit for bit; tests enforce this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import rng

DEFAULT_P = 0.3
DEFAULT_RHO = 0.5

_TAG_FIRE = rng.tag_hash("fire")
_TAG_TIE = rng.tag_hash("tie")
_TAG_XSTAR = rng.tag_hash("xstar")
_TAG_INIT = rng.tag_hash("init")

XSTAR_L, XSTAR_NONE, XSTAR_R = -1, 0, 1

_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class StirringRealization:
    """Seed-derived firing bits and tie-break keys per (edge, time).

    width = None selects plane mode (edges indexed by all of Z); otherwise
    edges live on a torus of that width and indices are reduced mod width.
    Queries are pure functions of (seed, edge, time), so forward and
    backward passes always see the same stirring decisions.
    """

    seed: int
    p: float
    width: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("p must be in [0, 1)")
        if self.width is not None and self.width < 2:
            raise ValueError("torus width must be at least 2")

    def _canon(self, x: int) -> int:
        return x % self.width if self.width is not None else x

    def fire(self, x: int, t: int) -> bool:
        return rng.bernoulli(self.seed, _TAG_FIRE, self.p, self._canon(x), t)

    def tiekey(self, x: int, t: int) -> int:
        return rng.mix64(self.seed, _TAG_TIE, self._canon(x), t)

    def xstar(self, x: int, t: int) -> int:
        """Coupling override variable: L and R each with probability p."""
        h = rng.mix64(self.seed, _TAG_XSTAR, self._canon(x), t)
        thr = rng.threshold(self.p)
        if h < thr:
            return XSTAR_L
        if h < 2 * thr:
            return XSTAR_R
        return XSTAR_NONE


def bernoulli_row(width: int, rho: float, seed: int) -> np.ndarray:
    """Seed-derived product-Bernoulli(rho) initial occupancy row."""
    xs = np.arange(width, dtype=np.int64)
    return rng.bernoulli_array(seed, _TAG_INIT, rho, xs).astype(np.uint8)


# ---------------------------------------------------------------------------
# Stir decisions, scalar reference path


def _run_winner(fire, tiekey, x: int, t: int, width: int | None) -> int:
    """Edge index that wins the maximal fired run containing edge x.

    Assumes fire(x, t) is true.  fire/tiekey are callables so the coupling
    can substitute the shared-edge override.
    """
    lo = x
    hi = x
    if width is None:
        while fire(lo - 1, t):
            lo -= 1
        while fire(hi + 1, t):
            hi += 1
        edges = range(lo, hi + 1)
    else:
        length = 1
        while length < width and fire(lo - 1, t):
            lo -= 1
            length += 1
        if length == width:
            edges = range(width)  # whole ring fired: one cyclic run
        else:
            while fire(hi + 1, t):
                hi += 1
                length += 1
            edges = range(lo, hi + 1)
    if width is None:
        return min(edges, key=lambda e: (tiekey(e, t), e))
    return min(
        (e % width for e in edges), key=lambda e: (tiekey(e, t), e)
    )


def edge_stirs(realization: StirringRealization, x: int, t: int) -> bool:
    """Does edge x stir at time t (fires and wins its run)?"""
    x = realization._canon(x)
    if not realization.fire(x, t):
        return False
    return _run_winner(realization.fire, realization.tiekey, x, t, realization.width) == x


def winners_at(
    realization: StirringRealization,
    t: int,
    edges: tuple[int, int] | None = None,
) -> tuple[int, ...]:
    """Stirred edges at time t: one winner per maximal fired run.

    On the torus the full ring is scanned and, if ``edges = (lo, hi)`` is
    given, the result is filtered to winners with lo <= index < hi.  In
    plane mode a range is required; runs poking past its ends are explored
    lazily, and only winners inside the range are returned.
    """
    if realization.width is None:
        if edges is None:
            raise ValueError("plane mode requires an edge range")
        lo, hi = edges
        out = [x for x in range(lo, hi) if edge_stirs(realization, x, t)]
        return tuple(out)
    W = realization.width
    fired = [realization.fire(x, t) for x in range(W)]
    if not any(fired):
        return ()
    if all(fired):
        w = min(range(W), key=lambda e: (realization.tiekey(e, t), e))
        winners = [w]
    else:
        winners = []
        # start scanning just after some unfired edge so runs do not wrap
        start = next(x for x in range(W) if not fired[x])
        run: list[int] = []
        for off in range(1, W + 1):
            x = (start + off) % W
            if fired[x]:
                run.append(x)
            elif run:
                winners.append(min(run, key=lambda e: (realization.tiekey(e, t), e)))
                run = []
        if run:
            winners.append(min(run, key=lambda e: (realization.tiekey(e, t), e)))
    winners.sort()
    if edges is not None:
        lo, hi = edges
        winners = [x for x in winners if lo <= x < hi]
    return tuple(winners)


def step_row(row: np.ndarray, matching: Iterable[int]) -> np.ndarray:
    """Swap occupancy across each matching edge (edge x joins x, x+1 mod W)."""
    row = np.asarray(row, dtype=np.uint8)
    W = row.shape[0]
    edges = sorted(int(e) % W for e in matching)
    if len(set(edges)) != len(edges):
        raise ValueError("matching repeats an edge")
    taken = set(edges)
    for e in edges:
        if (e + 1) % W in taken:
            raise ValueError("matching edges share a vertex")
    out = row.copy()
    for e in edges:
        a, b = e, (e + 1) % W
        out[a], out[b] = row[b], row[a]
    return out


# ---------------------------------------------------------------------------
# Stir decisions, replica-batched numpy path


def _combine_min(mv, mi, ov, oi):
    """Elementwise lexicographic min of (value, index) pairs."""
    better = (ov < mv) | ((ov == mv) & (oi < mi))
    return np.where(better, ov, mv), np.where(better, oi, mi)


def stir_mask(fired: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Per-edge stir decision for (..., W) arrays of cyclic edge rows.

    For each maximal cyclic run of fired edges, exactly the edge minimizing
    (key, index) is marked.  Works by iterative doubling of run-prefix
    minima in both directions, so a row costs O(W log W) array work and any
    number of replica rows are processed at once.
    """
    fired = np.asarray(fired, dtype=bool)
    keys = np.asarray(keys, dtype=np.uint64)
    W = fired.shape[-1]
    idx = np.broadcast_to(np.arange(W, dtype=np.int64), fired.shape)
    sent_v = np.where(fired, keys, _U64_MAX)
    sent_i = np.where(fired, idx, W)

    def directional_min(shift_sign: int):
        mv = sent_v.copy()
        mi = sent_i.copy()
        ln = fired.astype(np.int64)
        s = 1
        while s < W:
            rv = np.roll(mv, shift_sign * s, axis=-1)
            ri = np.roll(mi, shift_sign * s, axis=-1)
            rl = np.roll(ln, shift_sign * s, axis=-1)
            ext = ln == s
            cv, ci = _combine_min(mv, mi, rv, ri)
            mv = np.where(ext, cv, mv)
            mi = np.where(ext, ci, mi)
            ln = np.where(ext, np.minimum(ln + rl, W), ln)
            s *= 2
        return mv, mi

    lv, li = directional_min(+1)   # min over the fired stretch ending here
    rv, ri = directional_min(-1)   # min over the fired stretch starting here
    bv, bi = _combine_min(lv, li, rv, ri)
    return fired & (bv == keys) & (bi == idx)


def stir_rows(seeds, p: float, W: int, t: int) -> np.ndarray:
    """Batched stir decisions at time t for replicas with the given seeds.

    seeds may be a scalar or a 1-d array; the result has shape
    (len(seeds), W) (or (W,) for a scalar seed).
    """
    seeds_arr = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    xs = np.arange(W, dtype=np.int64)
    fired = rng.bernoulli_array(seeds_arr[:, None], _TAG_FIRE, p, xs[None, :], t)
    keys = rng.mix64_array(seeds_arr[:, None], _TAG_TIE, xs[None, :], t)
    out = stir_mask(fired, keys)
    if np.isscalar(seeds) or np.asarray(seeds).ndim == 0:
        return out[0]
    return out


def apply_stirs(occ: np.ndarray, stir: np.ndarray) -> np.ndarray:
    """Swap occupancies across stirred edges; occ and stir are (..., W)."""
    right = np.roll(occ, -1, axis=-1)
    left = np.roll(occ, 1, axis=-1)
    stir_left = np.roll(stir, 1, axis=-1)
    return np.where(stir, right, np.where(stir_left, left, occ)).astype(np.uint8)


def ensemble_steps(seeds, p: float, W: int, occ0: np.ndarray, t0: int, t1: int):
    """Generate (t, occupancy) for t = t0+1 .. t1 over replica rows.

    occ0 has shape (R, W); each replica r uses seeds[r] for its stirring
    variables.  The occupancy arrays yielded are fresh copies.
    """
    occ = np.array(occ0, dtype=np.uint8)
    for t in range(t0, t1):
        occ = apply_stirs(occ, stir_rows(seeds, p, W, t))
        yield t + 1, occ


@dataclass(frozen=True)
class SpaceTimeBlock:
    """Occupancy rows over [t0, t1] on a torus of width W; rows[i] is the
    configuration at time t0 + i."""

    rows: np.ndarray
    t0: int
    t1: int
    p: float
    seed: int

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def row(self, t: int) -> np.ndarray:
        return self.rows[t - self.t0]


def evolve_block(
    initial: np.ndarray, realization: StirringRealization, t0: int, t1: int
) -> SpaceTimeBlock:
    """Evolve a torus occupancy row from t0 to t1 (deterministic in seed)."""
    if realization.width is None:
        raise ValueError("evolve_block needs a torus realization")
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    initial = np.asarray(initial, dtype=np.uint8)
    if initial.shape != (realization.width,):
        raise ValueError("initial row does not match torus width")
    rows = np.empty((t1 - t0 + 1, realization.width), dtype=np.uint8)
    rows[0] = initial
    occ = initial[None, :]
    for t, occ_t in ensemble_steps([realization.seed], realization.p, realization.width, occ, t0, t1):
        rows[t - t0] = occ_t[0]
    return SpaceTimeBlock(rows, t0, t1, realization.p, realization.seed)


def evolve_plane_block(
    initial: np.ndarray,
    x0: int,
    realization: StirringRealization,
    t0: int,
    t1: int,
    crop: tuple[int, int],
) -> SpaceTimeBlock:
    """Plane-mode evolution of a buffered initial row.

    ``initial`` covers sites x0 .. x0+len-1 on Z.  Occupancy influence moves
    at most one site per step, so after T = t1-t0 steps the rows are exact
    on the initial window shrunk by T on each side; ``crop = (lo, hi)``
    selects the site window (hi exclusive) for the returned block and must
    lie inside that region.  Stir decisions explore runs lazily, so they are
    exact with no buffer of their own.
    """
    if realization.width is not None:
        raise ValueError("evolve_plane_block needs a plane realization")
    initial = np.asarray(initial, dtype=np.uint8)
    T = t1 - t0
    lo, hi = crop
    if lo < x0 + T or hi > x0 + initial.shape[0] - T:
        raise ValueError("crop window exceeds the boundary-free region")
    occ = {x0 + i: int(v) for i, v in enumerate(initial)}
    lo_valid, hi_valid = x0, x0 + initial.shape[0]
    rows = np.empty((T + 1, hi - lo), dtype=np.uint8)
    rows[0] = [occ[x] for x in range(lo, hi)]
    for t in range(t0, t1):
        stirred = {
            x
            for x in range(lo_valid, hi_valid - 1)
            if edge_stirs(realization, x, t)
        }
        new = {}
        for x in range(lo_valid + 1, hi_valid - 1):
            if x in stirred:
                new[x] = occ[x + 1]
            elif x - 1 in stirred:
                new[x] = occ[x - 1]
            else:
                new[x] = occ[x]
        occ = new
        lo_valid += 1
        hi_valid -= 1
        rows[t + 1 - t0] = [occ[x] for x in range(lo, hi)]
    return SpaceTimeBlock(rows, t0, t1, realization.p, realization.seed)


def block_to_text(block: SpaceTimeBlock) -> str:
    """Text export: header "W t0 t1 p seed", then one '0'/'1' row per time,
    written top-down so the bottom row of the file is the earliest time."""
    lines = [f"{block.width} {block.t0} {block.t1} {block.p!r} {block.seed}"]
    for t in range(block.t1, block.t0 - 1, -1):
        lines.append("".join(str(int(v)) for v in block.row(t)))
    return "\n".join(lines) + "\n"


def block_from_text(text: str) -> SpaceTimeBlock:
    lines = [ln for ln in text.strip().splitlines() if ln]
    w_s, t0_s, t1_s, p_s, seed_s = lines[0].split()
    W, t0, t1, seed = int(w_s), int(t0_s), int(t1_s), int(seed_s)
    if len(lines) - 1 != t1 - t0 + 1:
        raise ValueError("row count does not match time range")
    rows = np.empty((t1 - t0 + 1, W), dtype=np.uint8)
    for i, t in enumerate(range(t1, t0 - 1, -1)):
        row = lines[1 + i]
        if len(row) != W:
            raise ValueError("row width does not match header")
        rows[t - t0] = [1 if ch == "1" else 0 for ch in row]
    return SpaceTimeBlock(rows, t0, t1, float(p_s), seed)


# ---------------------------------------------------------------------------
# Particle tracking


def track_forward(
    realization: StirringRealization, x: int, t0: int, t1: int
) -> np.ndarray:
    """Stirring-particle path Z_x(t0..t1); steps +-1 exactly when an
    adjacent edge stirs.  Sites are reduced mod W on the torus."""
    pos = realization._canon(x)
    path = np.empty(t1 - t0 + 1, dtype=np.int64)
    path[0] = pos
    for t in range(t0, t1):
        if edge_stirs(realization, pos, t):
            pos += 1
        elif edge_stirs(realization, pos - 1, t):
            pos -= 1
        pos = realization._canon(pos)
        path[t - t0 + 1] = pos
    return path


def track_backward(
    realization: StirringRealization, y: int, t: int, t0: int
) -> np.ndarray:
    """Backward path M_{y,t}(t0..t): result[s - t0] is the site at time s
    of the particle that sits at y at time t.  Exactly inverts
    :func:`track_forward` step by step."""
    if t0 > t:
        raise ValueError("need t0 <= t")
    pos = realization._canon(y)
    path = np.empty(t - t0 + 1, dtype=np.int64)
    path[t - t0] = pos
    for s in range(t, t0, -1):
        if edge_stirs(realization, pos - 1, s - 1):
            pos -= 1
        elif edge_stirs(realization, pos, s - 1):
            pos += 1
        pos = realization._canon(pos)
        path[s - 1 - t0] = pos
    return path


def trajectory_symbols(path: np.ndarray, width: int | None = None) -> np.ndarray:
    """Per-step displacement symbols of a particle path.

    The symbol at step t is the first component of (path(t+1) - path(t), 1),
    so values are -1, 0, or +1.  On a torus pass ``width`` so wrap-around
    steps unwrap correctly; non-nearest-neighbor steps are rejected.
    """
    path = np.asarray(path, dtype=np.int64)
    d = np.diff(path)
    if width is not None:
        d = (d + 1) % width - 1
    if d.size and (d.min() < -1 or d.max() > 1):
        raise ValueError("path contains a non-nearest-neighbor step")
    return d.astype(np.int8)


def trajectory_to_csv(path: np.ndarray, t0: int, width: int | None = None) -> str:
    """CSV export with columns (t, site, symbol); the last row has an empty
    symbol since no step leaves it."""
    syms = trajectory_symbols(path, width)
    lines = ["t,site,symbol"]
    for i, site in enumerate(path):
        sym = str(int(syms[i])) if i < len(syms) else ""
        lines.append(f"{t0 + i},{int(site)},{sym}")
    return "\n".join(lines) + "\n"




# ---------------------------------------------------------------------------
# Two-particle coupling


@dataclass(frozen=True)
class CouplingState:
    """Common finite site set plus the discrepancy pair (alpha, beta).

    Represents the pair of finite SSEP states A = common + {alpha} and
    B = common + {beta}; alpha == beta encodes the merged regime where the
    two sets coincide.
    """

    common: frozenset = field(default_factory=frozenset)
    alpha: int = 0
    beta: int = 1

    def __post_init__(self):
        if self.alpha in self.common or self.beta in self.common:
            raise ValueError("alpha and beta may not overlap the common set")

    @property
    def merged(self) -> bool:
        return self.alpha == self.beta

    @property
    def set_a(self) -> frozenset:
        return self.common | {self.alpha}

    @property
    def set_b(self) -> frozenset:
        return self.common | {self.beta}


def _site_moves(site: int, firefn, tiekey, t: int) -> int:
    """Where the occupant of a site goes under one stirring step (plane)."""
    if firefn(site, t) and _run_winner(firefn, tiekey, site, t, None) == site:
        return site + 1
    if firefn(site - 1, t) and _run_winner(firefn, tiekey, site - 1, t, None) == site - 1:
        return site - 1
    return site


class CouplingDiverged(RuntimeError):
    """The two coupled worlds stopped being representable as a common set
    plus one discrepancy pair.

    The one-edge firing difference can shift run boundaries, so with a
    nonempty common set a common particle occasionally stirs in one world
    only and the evolved sets differ in two sites.  With an empty common
    set the sets are singletons and this cannot happen, which is the regime
    the merge statistics use.
    """

    def __init__(self, set_a: frozenset, set_b: frozenset, t: int):
        self.set_a = set_a
        self.set_b = set_b
        self.t = t
        super().__init__(
            f"coupled sets diverged by more than one site at step {t}: "
            f"A'={sorted(set_a)} B'={sorted(set_b)}"
        )


def coupled_step(state: CouplingState, real: StirringRealization, t: int) -> CouplingState:
    """One step of the coupled pair of finite SSEPs on Z.

    Both sets follow the common stirring variables, except that while alpha
    and beta flank a single edge e, a three-valued override (L and R each
    with probability p, independent of everything else) replaces e's firing
    bit: L fires e in alpha's world only, R in beta's world only, 0 in
    neither.  Each world's configuration is therefore still iid
    Bernoulli(p), so each set's one-step law is exactly the uncoupled
    finite SSEP.  Once the sets coincide they evolve together as an
    ordinary finite SSEP.  If the sets diverge past a single discrepancy
    (possible when the common set has particles near the shared edge, see
    :class:`CouplingDiverged`) the step raises rather than misreport.
    """
    if state.merged:
        fire_a = fire_b = real.fire
    else:
        lo_ab = min(state.alpha, state.beta)
        if abs(state.alpha - state.beta) == 1:
            xs = real.xstar(lo_ab, t)

            def fire_a(x, tt, _e=lo_ab, _xs=xs):
                return (_xs == XSTAR_L) if x == _e else real.fire(x, tt)

            def fire_b(x, tt, _e=lo_ab, _xs=xs):
                return (_xs == XSTAR_R) if x == _e else real.fire(x, tt)

        else:
            fire_a = fire_b = real.fire

    new_a = frozenset(_site_moves(s, fire_a, real.tiekey, t) for s in state.set_a)
    if state.merged or fire_a is fire_b:
        # beta moves under the same permutation as everything else
        new_beta = _site_moves(state.beta, fire_b, real.tiekey, t)
        new_alpha = _site_moves(state.alpha, fire_a, real.tiekey, t)
        if state.merged:
            return CouplingState(new_a - {new_alpha}, new_alpha, new_alpha)
        return CouplingState(new_a - {new_alpha}, new_alpha, new_beta)
    new_b = frozenset(_site_moves(s, fire_b, real.tiekey, t) for s in state.set_b)
    diff_a = new_a - new_b
    diff_b = new_b - new_a
    if not diff_a:
        # sets coincide: merged; report the position alpha's occupant took
        tag = _site_moves(state.alpha, fire_a, real.tiekey, t)
        return CouplingState(new_a - {tag}, tag, tag)
    if len(diff_a) != 1 or len(diff_b) != 1:
        raise CouplingDiverged(new_a, new_b, t)
    (a,) = diff_a
    (b,) = diff_b
    return CouplingState(new_a & new_b, a, b)


def coupled_evolve(
    state: CouplingState,
    p: float,
    seed: int,
    T: int,
    keep_path: bool = True,
    stop_at_merge: bool = False,
) -> tuple[list[CouplingState], int | None]:
    """Run the coupling for T steps; returns (state path, first merge time).

    Requires p < 1/2 (the override needs 2p <= 1) and a non-merged initial
    state.  With keep_path false the returned path holds only the initial
    and final states.  With a nonempty common set the run may raise
    :class:`CouplingDiverged`; an empty common set never does.
    """
    if not 0.0 <= p < 0.5:
        raise ValueError("coupling requires p < 1/2")
    if state.merged:
        raise ValueError("alpha and beta must start distinct")
    real = StirringRealization(seed=seed, p=p, width=None)
    path = [state]
    merge_time: int | None = None
    cur = state
    for t in range(T):
        cur = coupled_step(cur, real, t)
        if keep_path:
            path.append(cur)
        if merge_time is None and cur.merged:
            merge_time = t + 1
            if stop_at_merge:
                break
    if not keep_path:
        path.append(cur)
    return path, merge_time
