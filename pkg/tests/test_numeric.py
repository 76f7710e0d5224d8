"""Root finding, quadrature, and seeded-stream plumbing."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrisk.numeric import (
    Bracket,
    DiffConfig,
    NoSignChange,
    NonFinite,
    NonMonotoneGrid,
    SeededStream,
    TooFewPoints,
    _mix64,
    bisect_monotone_vec,
    cumulative_trapezoid,
    directional_diff,
    find_root,
    trapezoid,
)


class TestFindRoot:
    def test_locates_cosine_zero(self):
        x = find_root(math.cos, Bracket(1.0, 2.0), tol=1e-14)
        assert abs(x - math.pi / 2) < 1e-13

    def test_exact_zero_at_endpoint_returned(self):
        assert find_root(lambda t: t - 1.0, Bracket(1.0, 2.0)) == 1.0
        assert find_root(lambda t: t - 2.0, Bracket(1.0, 2.0)) == 2.0

    def test_no_sign_change_raises(self):
        with pytest.raises(NoSignChange):
            find_root(lambda t: t * t + 1.0, Bracket(-1.0, 1.0))

    def test_nonfinite_value_raises(self):
        with pytest.raises(NonFinite):
            find_root(lambda t: float("nan"), Bracket(0.0, 1.0))

    def test_bracket_requires_order(self):
        with pytest.raises(ValueError):
            Bracket(2.0, 1.0)

    @given(st.floats(min_value=-5.0, max_value=5.0))
    @settings(max_examples=50, deadline=None)
    def test_affine_root_recovered(self, c):
        x = find_root(lambda t: t - c, Bracket(-6.0, 6.0), tol=1e-13)
        assert abs(x - c) < 1e-12

    def test_deterministic(self):
        f = lambda t: t**3 - 0.7
        assert find_root(f, Bracket(0.0, 1.0)) == find_root(f, Bracket(0.0, 1.0))


class TestVectorBisection:
    def test_matches_scalar_roots(self):
        targets = np.linspace(0.1, 0.9, 7)
        f = lambda x: x**2 - targets
        roots = bisect_monotone_vec(f, np.zeros(7), np.ones(7))
        assert np.max(np.abs(roots - np.sqrt(targets))) < 1e-12


class TestDirectionalDiff:
    def test_central_on_smooth(self):
        d = directional_diff(math.sin, 0.3, DiffConfig(step=1e-6, side="central"))
        assert abs(d - math.cos(0.3)) < 1e-9

    def test_one_sided_at_kink(self):
        f = lambda t: abs(t)  # derivative jumps at 0
        right = directional_diff(f, 0.0, DiffConfig(step=1e-7, side="right"))
        left = directional_diff(f, 0.0, DiffConfig(step=1e-7, side="left"))
        assert right == pytest.approx(1.0, abs=1e-9)
        assert left == pytest.approx(-1.0, abs=1e-9)


class TestTrapezoid:
    def test_matches_numpy_on_random_grid(self):
        rng = np.random.default_rng(3)
        x = np.sort(rng.uniform(0, 1, 40))
        x[0], x[-1] = 0.0, 1.0
        y = rng.normal(size=40)
        pairs = np.stack([x, y], axis=1)
        assert trapezoid(pairs) == pytest.approx(np.trapezoid(y, x), abs=1e-14)

    def test_rejects_descending_grid(self):
        with pytest.raises(NonMonotoneGrid):
            trapezoid([[0.0, 1.0], [0.5, 1.0], [0.4, 1.0]])

    def test_rejects_single_point(self):
        with pytest.raises(TooFewPoints):
            trapezoid([[0.0, 1.0]])

    def test_rejects_nan_ordinate(self):
        with pytest.raises(NonFinite):
            trapezoid([[0.0, 1.0], [1.0, float("nan")]])

    def test_cumulative_ends_at_total(self):
        x = np.linspace(0.0, 2.0, 31)
        y = np.exp(-x)
        running = cumulative_trapezoid(x, y)
        assert running[0] == 0.0
        assert running[-1] == pytest.approx(trapezoid(np.stack([x, y], axis=1)), abs=1e-15)
        assert np.all(np.diff(running) > 0)


class TestSeededStream:
    def test_same_key_same_draws(self):
        a = SeededStream(123, 5).uniform(size=10)
        b = SeededStream(123, 5).uniform(size=10)
        assert np.array_equal(a, b)

    def test_different_stream_ids_differ(self):
        a = SeededStream(123, 1).uniform(size=10)
        b = SeededStream(123, 2).uniform(size=10)
        assert not np.array_equal(a, b)

    def test_substream_keyed_not_sequential(self):
        # substream(k) must depend only on (seed, parent id, k), never on
        # how many draws the parent has already produced
        parent = SeededStream(7, 0)
        before = parent.substream(11).uniform(size=4)
        parent.uniform(size=1000)
        after = parent.substream(11).uniform(size=4)
        assert np.array_equal(before, after)

    def test_substreams_distinct(self):
        parent = SeededStream(7, 0)
        a = parent.substream(1).uniform(size=8)
        b = parent.substream(2).uniform(size=8)
        assert not np.array_equal(a, b)

    def test_scalar_draw_in_unit_interval(self):
        u = SeededStream(99, 0).uniform()
        assert isinstance(u, float) and 0.0 <= u < 1.0


class TestMix64:
    def test_distinct_on_small_lattice(self):
        seen = {_mix64(a, b) for a in range(50) for b in range(50)}
        assert len(seen) == 2500

    def test_order_sensitive(self):
        assert _mix64(1, 2) != _mix64(2, 1)

    def test_stays_in_u64(self):
        for a, b in [(0, 0), (2**64 - 1, 2**64 - 1), (12345, 2**63)]:
            assert 0 <= _mix64(a, b) < 2**64
