"""Nearest-marked-site recoding of arrow fields.

Given a boolean indicator of marked sites, each site's arrow is rewritten to
the arrow at its nearest marked site, nearest in l-infinity distance with
lexicographic tie-break (first coordinate, then second).  The rewritten
configuration depends only on the indicator and the arrows at marked sites,
and marked sites keep their own arrows.
"""

from __future__ import annotations

import numpy as np

from .walks import ArrowField, NoMarkedSite, Point, Window


class SiteIndicator:
    """Boolean mark per window site; ``marked[y - y0, x - x0]``."""

    def __init__(self, window: Window, marked: np.ndarray):
        marked = np.asarray(marked, dtype=bool)
        if marked.shape != (window.height, window.width):
            raise ValueError("marked shape does not match window")
        self.window = window
        self.marked = marked

    @classmethod
    def from_sites(cls, window: Window, sites) -> "SiteIndicator":
        m = np.zeros((window.height, window.width), dtype=bool)
        for (x, y) in sites:
            if not window.contains(x, y):
                raise ValueError(f"site {(x, y)} outside window")
            m[y - window.y0, x - window.x0] = True
        return cls(window, m)

    def marked_sites(self) -> list[Point]:
        ys, xs = np.nonzero(self.marked)
        return [(int(x) + self.window.x0, int(y) + self.window.y0) for y, x in zip(ys, xs)]

    def is_marked(self, x: int, y: int) -> bool:
        return bool(self.marked[y - self.window.y0, x - self.window.x0])

    def translate(self, dx: int, dy: int) -> "SiteIndicator":
        return SiteIndicator(self.window.translate(dx, dy), self.marked)


def nearest_marked(indicator: SiteIndicator, z: Point) -> Point:
    """Marked site of minimal l-infinity distance to z; ties resolved by the
    lexicographic minimum (x first, then y)."""
    sites = indicator.marked_sites()
    if not sites:
        raise NoMarkedSite(f"no marked site in window for query at {z}")
    zx, zy = z
    best = None
    best_key = None
    for (x, y) in sites:
        key = (max(abs(x - zx), abs(y - zy)), x, y)
        if best_key is None or key < best_key:
            best_key = key
            best = (x, y)
    return best


def recode_field(field: ArrowField, indicator: SiteIndicator) -> ArrowField:
    """Rewrite every arrow to the arrow at the site's nearest marked point.

    The field and indicator must share a window, so the nearest marked site
    exists for every query unless the indicator is empty, in which case the
    whole output is undefined and :class:`NoMarkedSite` is raised.
    """
    if field.window != indicator.window:
        raise ValueError("field and indicator windows differ")
    sites = indicator.marked_sites()
    if not sites:
        raise NoMarkedSite("indicator has no marked site")
    w = field.window
    marked = np.array(sites, dtype=np.int64)  # (M, 2) as (x, y)
    # Lexicographic rank of each marked site; used to break distance ties.
    order = np.lexsort((marked[:, 1], marked[:, 0]))
    lexrank = np.empty(len(sites), dtype=np.int64)
    lexrank[order] = np.arange(len(sites))

    xs = np.arange(w.x0, w.x1 + 1, dtype=np.int64)
    ys = np.arange(w.y0, w.y1 + 1, dtype=np.int64)
    ygrid, xgrid = np.meshgrid(ys, xs, indexing="ij")
    dx = np.abs(xgrid[..., None] - marked[:, 0])
    dy = np.abs(ygrid[..., None] - marked[:, 1])
    dist = np.maximum(dx, dy)
    # Combined key makes argmin resolve ties lexicographically and exactly.
    key = dist * len(sites) + lexrank
    pick = np.argmin(key, axis=-1)

    src = marked[pick]  # (H, W, 2) site coordinates
    codes = field.codes[src[..., 1] - w.y0, src[..., 0] - w.x0]
    return ArrowField(w, codes.astype(np.int8), field.mode)


def indicator_to_text(ind: SiteIndicator) -> str:
    w = ind.window
    lines = [f"{w.x0} {w.y0} {w.x1} {w.y1}"]
    for y in range(w.y1, w.y0 - 1, -1):
        row = ind.marked[y - w.y0]
        lines.append("".join("1" if m else "0" for m in row))
    return "\n".join(lines) + "\n"


def indicator_from_text(text: str) -> SiteIndicator:
    lines = [ln for ln in text.strip().splitlines() if ln]
    x0, y0, x1, y1 = (int(v) for v in lines[0].split())
    window = Window(x0, y0, x1, y1)
    marked = np.zeros((window.height, window.width), dtype=bool)
    for i, y in enumerate(range(y1, y0 - 1, -1)):
        row = lines[1 + i]
        if len(row) != window.width:
            raise ValueError("row width does not match window")
        marked[y - y0] = [ch == "1" for ch in row]
    return SiteIndicator(window, marked)
