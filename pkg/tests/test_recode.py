import numpy as np
import pytest

from stirwalk import rng
from stirwalk.recode import (
    SiteIndicator,
    indicator_from_text,
    indicator_to_text,
    nearest_marked,
    recode_field,
)
from stirwalk.walks import NoMarkedSite, Window, iid_field


def random_indicator(window: Window, density: float, seed: int) -> SiteIndicator:
    tag = rng.tag_hash("mark")
    m = np.zeros((window.height, window.width), dtype=bool)
    for (x, y) in window.sites():
        m[y - window.y0, x - window.x0] = rng.bernoulli(seed, tag, density, x, y)
    return SiteIndicator(window, m)


class TestNearestMarked:
    def test_plain_distance(self):
        w = Window(-3, -3, 3, 3)
        ind = SiteIndicator.from_sites(w, [(2, 0), (0, 2), (-1, -1)])
        assert nearest_marked(ind, (0, 0)) == (-1, -1)

    def test_lexicographic_tie_break(self):
        # distance tie at 1; (0,1) < (1,0) since the first coordinate wins
        w = Window(-2, -2, 2, 2)
        ind = SiteIndicator.from_sites(w, [(1, 0), (0, 1)])
        assert nearest_marked(ind, (0, 0)) == (0, 1)

    def test_marked_query_site_returns_itself(self):
        w = Window(0, 0, 4, 4)
        ind = SiteIndicator.from_sites(w, [(2, 2), (0, 0)])
        assert nearest_marked(ind, (2, 2)) == (2, 2)

    def test_no_marked_site_is_an_error(self):
        w = Window(0, 0, 2, 2)
        ind = SiteIndicator(w, np.zeros((3, 3), dtype=bool))
        with pytest.raises(NoMarkedSite):
            nearest_marked(ind, (1, 1))

    def test_result_is_marked_and_minimal(self):
        w = Window(0, 0, 9, 9)
        for seed in range(25):
            ind = random_indicator(w, 0.2, seed)
            if not ind.marked_sites():
                continue
            z = (seed % 10, (3 * seed) % 10)
            m = nearest_marked(ind, z)
            assert ind.is_marked(*m)
            d = max(abs(m[0] - z[0]), abs(m[1] - z[1]))
            for s in ind.marked_sites():
                assert max(abs(s[0] - z[0]), abs(s[1] - z[1])) >= d


class TestRecodeField:
    def test_all_marked_is_identity(self):
        w = Window(0, 0, 6, 6)
        f = iid_field(w, 0.5, 3)
        ind = SiteIndicator(w, np.ones((7, 7), dtype=bool))
        assert recode_field(f, ind) == f

    def test_single_marked_site_constant_output(self):
        w = Window(-3, -3, 3, 3)
        f = iid_field(w, 0.5, 4)
        ind = SiteIndicator.from_sites(w, [(0, 0)])
        out = recode_field(f, ind)
        assert np.all(out.codes == f.code_at(0, 0))

    def test_marked_sites_keep_their_arrows(self):
        w = Window(0, 0, 9, 9)
        for seed in range(20):
            f = iid_field(w, 0.5, seed)
            ind = random_indicator(w, 0.25, 100 + seed)
            if not ind.marked_sites():
                continue
            out = recode_field(f, ind)
            for (x, y) in ind.marked_sites():
                assert out.code_at(x, y) == f.code_at(x, y)

    def test_determinism_from_marked_arrows_only(self):
        # two fields agreeing on marked sites but differing elsewhere
        w = Window(0, 0, 9, 9)
        for seed in range(20):
            f1 = iid_field(w, 0.5, seed)
            f2 = iid_field(w, 0.5, 777 + seed)
            ind = random_indicator(w, 0.3, 55 + seed)
            if not ind.marked_sites():
                continue
            codes = f2.codes.copy()
            codes[ind.marked] = f1.codes[ind.marked]
            from stirwalk.walks import ArrowField

            f2 = ArrowField(w, codes)
            assert recode_field(f1, ind) == recode_field(f2, ind)

    def test_equivariance_under_translation(self):
        w = Window(0, 0, 7, 7)
        for seed in range(10):
            f = iid_field(w, 0.5, seed)
            ind = random_indicator(w, 0.3, 200 + seed)
            if not ind.marked_sites():
                continue
            moved = recode_field(f.translate(3, -2), ind.translate(3, -2))
            assert np.array_equal(moved.codes, recode_field(f, ind).codes)

    def test_agrees_with_nearest_marked_per_site(self):
        w = Window(0, 0, 8, 8)
        for seed in range(10):
            f = iid_field(w, 0.5, seed)
            ind = random_indicator(w, 0.15, 300 + seed)
            if not ind.marked_sites():
                continue
            out = recode_field(f, ind)
            for (x, y) in w.sites():
                src = nearest_marked(ind, (x, y))
                assert out.code_at(x, y) == f.code_at(*src)

    def test_empty_indicator_is_undefined(self):
        w = Window(0, 0, 3, 3)
        f = iid_field(w, 0.5, 1)
        ind = SiteIndicator(w, np.zeros((4, 4), dtype=bool))
        with pytest.raises(NoMarkedSite):
            recode_field(f, ind)

    def test_window_mismatch_rejected(self):
        f = iid_field(Window(0, 0, 3, 3), 0.5, 1)
        ind = SiteIndicator(Window(0, 0, 4, 4), np.ones((5, 5), dtype=bool))
        with pytest.raises(ValueError):
            recode_field(f, ind)


def test_indicator_serialization_round_trip():
    w = Window(-1, 2, 3, 5)
    ind = random_indicator(w, 0.4, 9)
    again = indicator_from_text(indicator_to_text(ind))
    assert again.window == ind.window
    assert np.array_equal(again.marked, ind.marked)
