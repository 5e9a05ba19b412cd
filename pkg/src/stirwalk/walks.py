"""Arrow-field walk systems on the integer plane.

An arrow field assigns a unit step to every site of a finite window; walks
follow arrows and coalesce permanently when they meet.  This module provides
field generators (iid and anti-diagonal-striped), walk iteration, coalescence
detection, backward ancestry search, and the rotated-rectangle configuration
counting experiment.

All operations are pure functions of (field, seed); walks that would leave
the window raise :class:`WindowExit` carrying the completed prefix, and
searches that hit the window margin report a truncation flag instead of
guessing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import rng

# Arrow codes, also used as serialization characters via ARROW_CHARS.
E1, E2, W1, W2 = 0, 1, 2, 3  # +e1, +e2, -e1, -e2
ARROW_CHARS = "RULD"
ARROW_VECS = ((1, 0), (0, 1), (-1, 0), (0, -1))

_TAG_ARROW = rng.tag_hash("arrow")
_TAG_STRIPE = rng.tag_hash("stripe")
_TAG_SAMPLE = rng.tag_hash("sample")

Point = tuple[int, int]


class WindowExit(Exception):
    """A walk or search needed an arrow outside the field window."""

    def __init__(self, steps_completed: int, trace: list[Point]):
        self.steps_completed = steps_completed
        self.trace = trace
        super().__init__(f"walk left the window after {steps_completed} steps")


class NoMarkedSite(Exception):
    """Raised where a nearest-marked-point query has no candidate in the
    window (the selection function is only almost-surely defined)."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned inclusive rectangle [x0, x1] x [y0, y1]."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError("empty window")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def sites(self):
        for y in range(self.y0, self.y1 + 1):
            for x in range(self.x0, self.x1 + 1):
                yield (x, y)

    def translate(self, dx: int, dy: int) -> "Window":
        return Window(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


class ArrowField:
    """One arrow per window site; ``codes[y - y0, x - x0]`` holds the code.

    mode "directed" restricts codes to {E1, E2}; "general" allows all four.
    """

    def __init__(self, window: Window, codes: np.ndarray, mode: str = "directed"):
        codes = np.asarray(codes, dtype=np.int8)
        if codes.shape != (window.height, window.width):
            raise ValueError("codes shape does not match window")
        if mode not in ("directed", "general"):
            raise ValueError(f"unknown mode {mode!r}")
        hi = 1 if mode == "directed" else 3
        if codes.min() < 0 or codes.max() > hi:
            raise ValueError(f"arrow codes out of range for {mode} mode")
        self.window = window
        self.codes = codes
        self.mode = mode

    def contains(self, x: int, y: int) -> bool:
        return self.window.contains(x, y)

    def code_at(self, x: int, y: int) -> int:
        if not self.window.contains(x, y):
            raise KeyError((x, y))
        return int(self.codes[y - self.window.y0, x - self.window.x0])

    def arrow_at(self, x: int, y: int) -> Point:
        return ARROW_VECS[self.code_at(x, y)]

    def translate(self, dx: int, dy: int) -> "ArrowField":
        return ArrowField(self.window.translate(dx, dy), self.codes, self.mode)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ArrowField)
            and self.window == other.window
            and self.mode == other.mode
            and np.array_equal(self.codes, other.codes)
        )


class IIDArrowLattice:
    """Unbounded lazy iid field: the arrow at any site is derived on demand
    from (seed, x, y).  Agrees bit for bit with :func:`iid_field` on any
    window built from the same seed."""

    mode = "directed"

    def __init__(self, prob_e1: float, seed: int):
        self.prob_e1 = prob_e1
        self.seed = seed
        self._thr = rng.threshold(prob_e1)

    def contains(self, x: int, y: int) -> bool:
        return True

    def code_at(self, x: int, y: int) -> int:
        return E1 if rng.mix64(self.seed, _TAG_ARROW, x, y) < self._thr else E2

    def arrow_at(self, x: int, y: int) -> Point:
        return ARROW_VECS[self.code_at(x, y)]


def iid_field(window: Window, prob_e1: float, seed: int) -> ArrowField:
    """Independent arrows: e1 with probability prob_e1, else e2."""
    if not 0.0 <= prob_e1 <= 1.0:
        raise ValueError("prob_e1 must be in [0, 1]")
    ys = np.arange(window.y0, window.y1 + 1, dtype=np.int64)
    xs = np.arange(window.x0, window.x1 + 1, dtype=np.int64)
    ygrid, xgrid = np.meshgrid(ys, xs, indexing="ij")
    e1 = rng.bernoulli_array(seed, _TAG_ARROW, prob_e1, xgrid, ygrid)
    codes = np.where(e1, E1, E2).astype(np.int8)
    return ArrowField(window, codes, "directed")


def striped_field(bits: Mapping[int, int] | Sequence[int], window: Window) -> ArrowField:
    """Field constant on each anti-diagonal x + y = i, equal to bits[i].

    ``bits`` maps anti-diagonal index to E1/E2 (codes or 'R'/'U' chars); a
    plain sequence is treated as indexed from the window's smallest
    anti-diagonal.  Every anti-diagonal meeting the window needs an entry.
    """
    lo = window.x0 + window.y0
    hi = window.x1 + window.y1
    if not isinstance(bits, Mapping):
        bits = {lo + i: b for i, b in enumerate(bits)}
    table = {}
    for d in range(lo, hi + 1):
        if d not in bits:
            raise ValueError(f"missing stripe bit for anti-diagonal {d}")
        b = bits[d]
        if isinstance(b, str):
            b = ARROW_CHARS.index(b)
        if b not in (E1, E2):
            raise ValueError("stripe bits must be e1 or e2")
        table[d] = b
    codes = np.empty((window.height, window.width), dtype=np.int8)
    for y in range(window.y0, window.y1 + 1):
        for x in range(window.x0, window.x1 + 1):
            codes[y - window.y0, x - window.x0] = table[x + y]
    return ArrowField(window, codes, "directed")


@dataclass(frozen=True)
class WalkTrace:
    start: Point
    steps: tuple[Point, ...]

    def __len__(self) -> int:
        return len(self.steps)


def walk_iterate(field, z: Point, k: int) -> WalkTrace:
    """Follow arrows for k steps from z; trace has k+1 points.

    Raises :class:`WindowExit` with the completed prefix if an arrow outside
    the window would be needed.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    pts = [z]
    for j in range(k):
        x, y = pts[-1]
        if not field.contains(x, y):
            raise WindowExit(j, pts)
        dx, dy = ARROW_VECS[field.code_at(x, y)]
        pts.append((x + dx, y + dy))
    return WalkTrace(z, tuple(pts))


@dataclass(frozen=True)
class CoalescenceVerdict:
    coalesced: bool
    point: Point | None
    truncated: bool


def coalesce_within(field, x: Point, y: Point, horizon: int) -> CoalescenceVerdict:
    """Do the walks from x and y share a lattice point within the horizon?

    Walks may meet at different step indices.  The reported point is the
    earliest shared point along x's trace.  If either walk leaves the window
    the verdict is computed on the in-window prefixes and flagged truncated.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    truncated = False
    traces = []
    for z in (x, y):
        try:
            traces.append(walk_iterate(field, z, horizon).steps)
        except WindowExit as e:
            traces.append(tuple(e.trace))
            truncated = True
    other = set(traces[1])
    for p in traces[0]:
        if p in other:
            return CoalescenceVerdict(True, p, truncated)
    return CoalescenceVerdict(False, None, truncated)


@dataclass(frozen=True)
class AncestryDepth:
    depth: int
    truncated: bool


def biinfinite_depth(field, z: Point, K: int) -> AncestryDepth:
    """Longest backward ancestor chain below z, up to K levels.

    Breadth-first over the (at most two) directed ancestors per site:
    z - e1 is an ancestor iff its arrow is e1, z - e2 iff its arrow is e2.
    Reaching K is evidence, not proof, of bi-infiniteness.  If the search
    stops because candidate ancestors fell outside the window, the result is
    flagged truncated.
    """
    if getattr(field, "mode", "directed") != "directed":
        raise ValueError("ancestry search requires a directed field")
    if K < 1:
        raise ValueError("K must be positive")
    frontier = {z}
    for level in range(K):
        nxt = set()
        hit_margin = False
        for (x, y) in frontier:
            for ax, ay, need in ((x - 1, y, E1), (x, y - 1, E2)):
                if field.contains(ax, ay):
                    if field.code_at(ax, ay) == need:
                        nxt.add((ax, ay))
                else:
                    hit_margin = True
        if not nxt:
            return AncestryDepth(level, hit_margin)
        frontier = nxt
    return AncestryDepth(K, False)


@dataclass(frozen=True)
class RotatedRect:
    """Rectangle aligned with u = e1+e2 and v = -e1+e2.

    Level i (i = 0..L-1) is the set {anchor + i*u + k*v : |k| <= L/2}; the
    rectangle is the union of the L levels, L*(L+1) distinct sites on the
    anti-diagonals of the anchor's parity.
    """

    L: int
    anchor: Point = (0, 0)

    def __post_init__(self):
        if self.L <= 0 or self.L % 2 != 0:
            raise ValueError("L must be a positive even integer")

    def level(self, i: int) -> list[Point]:
        ax, ay = self.anchor
        half = self.L // 2
        return [(ax + i - k, ay + i + k) for k in range(-half, half + 1)]

    def levels(self) -> list[list[Point]]:
        return [self.level(i) for i in range(self.L)]

    def sites(self) -> list[Point]:
        """Canonical row-major order: by y, then x."""
        pts = [p for lev in self.levels() for p in lev]
        pts.sort(key=lambda p: (p[1], p[0]))
        return pts

    def bounding_window(self) -> Window:
        pts = self.sites()
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return Window(min(xs), min(ys), max(xs), max(ys))


def restrict_to_rect(field, rect: RotatedRect) -> tuple[int, ...]:
    """Arrow codes on the rectangle in canonical row-major site order."""
    return tuple(field.code_at(x, y) for (x, y) in rect.sites())


def level_bits(field, rect: RotatedRect) -> list[int]:
    """Per-level arrow value of a field constant on anti-diagonals.

    Raises if some level is not constant (the read-off is only defined for
    striped configurations).
    """
    out = []
    for lev in rect.levels():
        vals = {field.code_at(x, y) for (x, y) in lev}
        if len(vals) != 1:
            raise ValueError("field is not constant on a rectangle level")
        out.append(vals.pop())
    return out


def reconstruct_from_trajectory(bits: Sequence[int], rect: RotatedRect) -> tuple[int, ...]:
    """Restriction determined by one arrow value per level.

    bits[i] (E1/E2) is propagated to every site of level i; returns codes in
    canonical row-major site order, the same layout as
    :func:`restrict_to_rect`.
    """
    if len(bits) != rect.L:
        raise ValueError(f"need exactly L = {rect.L} bits, got {len(bits)}")
    vals = []
    for b in bits:
        if isinstance(b, str):
            b = ARROW_CHARS.index(b)
        if b not in (E1, E2):
            raise ValueError("trajectory bits must be e1 or e2")
        vals.append(b)
    by_site = {}
    for i, lev in enumerate(rect.levels()):
        for p in lev:
            by_site[p] = vals[i]
    return tuple(by_site[p] for p in rect.sites())


def count_window_configs(
    sampler: Callable[[int], object], rect: RotatedRect, n_samples: int, seed: int
) -> int:
    """Exact count of distinct arrow restrictions to the rectangle over
    n_samples independently sampled fields (derived seeds)."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    seen = set()
    for j in range(n_samples):
        field = sampler(rng.mix64(seed, _TAG_SAMPLE, j))
        seen.add(bytes(restrict_to_rect(field, rect)))
    return len(seen)


def iid_sampler(window: Window, prob_e1: float) -> Callable[[int], ArrowField]:
    return lambda s: iid_field(window, prob_e1, s)


def striped_sampler(window: Window, prob_e1: float = 0.5) -> Callable[[int], ArrowField]:
    """Striped fields with an independent Bernoulli bit per anti-diagonal."""

    def make(s: int) -> ArrowField:
        lo = window.x0 + window.y0
        hi = window.x1 + window.y1
        bits = {
            d: (E1 if rng.bernoulli(s, _TAG_STRIPE, prob_e1, d) else E2)
            for d in range(lo, hi + 1)
        }
        return striped_field(bits, window)

    return make


# Serialization: header "x0 y0 x1 y1", then one row per line, top line is
# the largest y (so the bottom row of the file is the smallest y).

def field_to_text(field: ArrowField) -> str:
    w = field.window
    lines = [f"{w.x0} {w.y0} {w.x1} {w.y1}"]
    for y in range(w.y1, w.y0 - 1, -1):
        row = field.codes[y - w.y0]
        lines.append("".join(ARROW_CHARS[c] for c in row))
    return "\n".join(lines) + "\n"


def field_from_text(text: str) -> ArrowField:
    lines = [ln for ln in text.strip().splitlines() if ln]
    x0, y0, x1, y1 = (int(v) for v in lines[0].split())
    window = Window(x0, y0, x1, y1)
    if len(lines) - 1 != window.height:
        raise ValueError("row count does not match window")
    codes = np.empty((window.height, window.width), dtype=np.int8)
    for i, y in enumerate(range(y1, y0 - 1, -1)):
        row = lines[1 + i]
        if len(row) != window.width:
            raise ValueError("row width does not match window")
        codes[y - y0] = [ARROW_CHARS.index(ch) for ch in row]
    mode = "directed" if codes.max() <= 1 else "general"
    return ArrowField(window, codes, mode)
