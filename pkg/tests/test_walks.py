import numpy as np
import pytest

from stirwalk import rng
from stirwalk.walks import (
    E1,
    E2,
    ArrowField,
    IIDArrowLattice,
    RotatedRect,
    WindowExit,
    Window,
    biinfinite_depth,
    coalesce_within,
    count_window_configs,
    field_from_text,
    field_to_text,
    iid_field,
    iid_sampler,
    level_bits,
    reconstruct_from_trajectory,
    restrict_to_rect,
    striped_field,
    striped_sampler,
    walk_iterate,
)


def all_e1(window: Window) -> ArrowField:
    return striped_field({d: E1 for d in range(window.x0 + window.y0, window.x1 + window.y1 + 1)}, window)


def alternating(window: Window) -> ArrowField:
    lo = window.x0 + window.y0
    hi = window.x1 + window.y1
    return striped_field({d: (E1 if d % 2 == 0 else E2) for d in range(lo, hi + 1)}, window)


class TestFieldGenerators:
    def test_iid_degenerate_all_e1(self):
        f = iid_field(Window(0, 0, 9, 9), 1.0, 7)
        assert np.all(f.codes == E1)

    def test_iid_degenerate_all_e2(self):
        f = iid_field(Window(0, 0, 9, 9), 0.0, 7)
        assert np.all(f.codes == E2)

    def test_iid_fair_concentration(self):
        # empirical e1 fraction within 5 sigma of 0.5, sigma = 0.5/100
        f = iid_field(Window(0, 0, 99, 99), 0.5, 20260810)
        frac = np.mean(f.codes == E1)
        assert abs(frac - 0.5) < 5 * (0.5 / 100)

    def test_iid_deterministic_given_seed(self):
        w = Window(-3, -3, 3, 3)
        assert iid_field(w, 0.4, 11) == iid_field(w, 0.4, 11)
        assert iid_field(w, 0.4, 11) != iid_field(w, 0.4, 12)

    def test_iid_matches_lazy_lattice(self):
        w = Window(-5, -5, 5, 5)
        f = iid_field(w, 0.3, 99)
        lazy = IIDArrowLattice(0.3, 99)
        for (x, y) in w.sites():
            assert f.code_at(x, y) == lazy.code_at(x, y)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            Window(0, 0, -1, 0)

    def test_striped_constant_on_antidiagonals(self):
        f = alternating(Window(0, 0, 5, 5))
        for (x, y) in f.window.sites():
            assert f.code_at(x, y) == (E1 if (x + y) % 2 == 0 else E2)

    def test_striped_missing_index_rejected(self):
        with pytest.raises(ValueError, match="anti-diagonal"):
            striped_field({0: E1}, Window(0, 0, 1, 1))

    def test_striped_same_diagonal_walks_never_meet(self):
        # anti-diagonal-constant arrows preserve the v-offset between walks
        w = Window(0, 0, 40, 40)
        for seed in range(10):
            f = striped_sampler(w)(seed)
            v = coalesce_within(f, (0, 2), (2, 0), horizon=15)
            assert not v.coalesced


class TestWalkIterate:
    def test_all_e1_straight_line(self):
        f = all_e1(Window(0, 0, 6, 2))
        tr = walk_iterate(f, (0, 0), 5)
        assert tr.steps == tuple((i, 0) for i in range(6))

    def test_k_zero_identity(self):
        f = all_e1(Window(0, 0, 3, 3))
        assert walk_iterate(f, (2, 1), 0).steps == ((2, 1),)

    def test_striped_alternating_hand_iterated(self):
        # diag 0 -> e1, diag 1 -> e2, diag 2 -> e1, diag 3 -> e2
        f = alternating(Window(0, 0, 4, 4))
        tr = walk_iterate(f, (0, 0), 4)
        assert tr.steps == ((0, 0), (1, 0), (1, 1), (2, 1), (2, 2))

    def test_window_exit_reports_completed_steps(self):
        f = all_e1(Window(0, 0, 2, 0))
        with pytest.raises(WindowExit) as ei:
            walk_iterate(f, (0, 0), 5)
        assert ei.value.steps_completed == 3
        assert ei.value.trace == [(0, 0), (1, 0), (2, 0), (3, 0)]

    def test_compatibility_invariant(self):
        w = Window(0, 0, 30, 30)
        for seed in range(20):
            f = iid_field(w, 0.5, seed)
            z = (seed % 5, seed % 3)
            k = 8
            full = walk_iterate(f, z, k)
            tail = walk_iterate(f, full.steps[1], k - 1)
            assert full.steps[1:] == tail.steps


class TestCoalescence:
    def test_same_row_all_e1(self):
        f = all_e1(Window(0, 0, 15, 3))
        v = coalesce_within(f, (0, 0), (3, 0), 10)
        assert v.coalesced and v.point == (3, 0) and not v.truncated

    def test_parallel_rows_never_meet(self):
        f = all_e1(Window(0, 0, 15, 3))
        for h in (1, 5, 12):
            v = coalesce_within(f, (0, 0), (0, 1), h)
            assert not v.coalesced

    def test_symmetry_and_horizon_monotonicity(self):
        w = Window(0, 0, 60, 60)
        for seed in range(30):
            f = iid_field(w, 0.5, 1000 + seed)
            x, y = (3, 5), (5, 3)
            verdicts = [coalesce_within(f, x, y, h).coalesced for h in (5, 10, 20, 40)]
            # once coalesced, coalesced at every larger horizon
            assert verdicts == sorted(verdicts)
            sym = coalesce_within(f, y, x, 40)
            assert sym.coalesced == verdicts[-1]


class TestAncestry:
    def test_all_e1_depth_limited_by_window(self):
        f = all_e1(Window(-5, -5, 5, 5))
        r = biinfinite_depth(f, (0, 0), 5)
        assert r.depth == 5 and not r.truncated

    def test_no_ancestor_depth_zero(self):
        # arrows at both candidate ancestors point away from z
        w = Window(0, 0, 2, 2)
        codes = np.full((3, 3), E1, dtype=np.int8)
        codes[1, 0] = E2  # site (0, 1) = z - e1 carries e2: not an ancestor
        codes[0, 1] = E1  # site (1, 0) = z - e2 carries e1: not an ancestor
        f = ArrowField(w, codes)
        r = biinfinite_depth(f, (1, 1), 4)
        assert r.depth == 0

    def test_truncation_flagged_at_margin(self):
        f = all_e1(Window(-5, -5, 5, 5))
        r = biinfinite_depth(f, (0, 0), 7)
        assert r.depth == 5 and r.truncated

    def test_striped_interior_reaches_margin(self):
        w = Window(-6, -6, 6, 6)
        for seed in range(5):
            f = striped_sampler(w)(seed)
            r = biinfinite_depth(f, (0, 0), 6)
            assert r.depth == 6 and not r.truncated

    def test_antitone_under_ancestor_removal(self):
        f = all_e1(Window(-4, -4, 4, 4))
        base = biinfinite_depth(f, (0, 0), 3).depth
        codes = f.codes.copy()
        codes[4 + 0, 4 - 1] = E2  # flip arrow at (-1, 0), removing the e1 ancestor
        f2 = ArrowField(f.window, codes)
        assert biinfinite_depth(f2, (0, 0), 3).depth <= base


class TestRotatedRect:
    def test_site_count_and_distinct(self):
        for L in (2, 4, 6):
            r = RotatedRect(L, (0, 0))
            pts = r.sites()
            assert len(pts) == L * (L + 1)
            assert len(set(pts)) == len(pts)

    def test_odd_or_nonpositive_rejected(self):
        for L in (0, -2, 3):
            with pytest.raises(ValueError):
                RotatedRect(L)

    def test_reconstruct_all_e1(self):
        r = RotatedRect(4)
        codes = reconstruct_from_trajectory([E1] * 4, r)
        assert set(codes) == {E1}

    def test_reconstruct_length_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct_from_trajectory([E1] * 3, RotatedRect(4))

    def test_round_trip_on_striped_fields(self):
        r = RotatedRect(4, (1, 1))
        w = r.bounding_window()
        for seed in range(10):
            f = striped_sampler(w)(seed)
            bits = level_bits(f, r)
            assert reconstruct_from_trajectory(bits, r) == restrict_to_rect(f, r)

    def test_injectivity_exhaustive_small_L(self):
        for L in (2, 4, 6):
            r = RotatedRect(L)
            seen = set()
            for m in range(2**L):
                bits = [(m >> i) & 1 for i in range(L)]
                seen.add(reconstruct_from_trajectory(bits, r))
            assert len(seen) == 2**L


class TestCountConfigs:
    def test_constant_sampler_counts_one(self):
        r = RotatedRect(4)
        w = r.bounding_window()
        assert count_window_configs(lambda s: all_e1(w), r, 100, 3) == 1

    def test_striped_bound_two_to_the_L(self):
        for L in (4, 6):
            r = RotatedRect(L)
            w = r.bounding_window()
            n = count_window_configs(striped_sampler(w), r, 2000, 17)
            assert n <= 2**L

    def test_iid_sampler_exceeds_bound(self):
        r = RotatedRect(4)
        w = r.bounding_window()
        n = count_window_configs(iid_sampler(w, 0.5), r, 2000, 17)
        assert n > 2**4

    def test_deterministic_given_seed(self):
        r = RotatedRect(4)
        w = r.bounding_window()
        a = count_window_configs(striped_sampler(w), r, 500, 5)
        b = count_window_configs(striped_sampler(w), r, 500, 5)
        assert a == b


class TestSerialization:
    def test_round_trip(self):
        f = iid_field(Window(-2, 1, 4, 5), 0.5, 8)
        g = field_from_text(field_to_text(f))
        assert g == f

    def test_header_and_orientation(self):
        w = Window(0, 0, 2, 1)
        codes = np.array([[E1, E1, E1], [E2, E2, E2]], dtype=np.int8)  # y=0 row, y=1 row
        text = field_to_text(ArrowField(w, codes))
        lines = text.strip().splitlines()
        assert lines[0] == "0 0 2 1"
        assert lines[1] == "UUU"  # top line is the largest y
        assert lines[2] == "RRR"
