"""Cutoff maps against closed-form oracles.

The implementation finds the CARA cutoff by bisecting a stable preference
margin. The oracle here comes the other way around: for a given cutoff nu
the indifference price has the closed form

    x(nu) = [log((1-mu) + mu e^{nu d1}) - log((1-mu) + mu e^{nu d2})]
            / (nu (r2 - r1)),

obtained by equating the two options' expected exponential disutilities
(the wealth factor cancels). Evaluating x(nu) and demanding the cutoff map
return nu closes the loop through entirely different arithmetic.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrisk.preferences import (
    ContextMenu,
    DomainError,
    PricePair,
    ThresholdSystem,
    Unattainable,
    _eu_gap,
    check_single_crossing,
    dual_cutoff,
    eu_cutoff,
    eu_value,
    invert_cutoff,
)

MENU_I = ContextMenu(mu=0.2, d1=8.0, d2=4.0, r1=1.0, r2=2.0, w=20.0)
MENU_II = ContextMenu(mu=0.2, d1=0.08, d2=0.04, r1=0.005, r2=0.015, w=20.0)


def crossing_price(menu: ContextMenu, nu: float) -> float:
    # log1p/expm1 keep the formula accurate down to nu ~ 1e-12
    la = math.log1p(menu.mu * math.expm1(nu * menu.d1))
    lb = math.log1p(menu.mu * math.expm1(nu * menu.d2))
    return (la - lb) / (nu * (menu.r2 - menu.r1))


def fair_price(menu: ContextMenu) -> float:
    # risk-neutral indifference point, the nu -> 0 limit of crossing_price
    return menu.mu * (menu.d1 - menu.d2) / (menu.r2 - menu.r1)


class TestEuCutoffOracle:
    @pytest.mark.parametrize("menu", [MENU_I, MENU_II], ids=["ctx_i", "ctx_ii"])
    def test_round_trip_against_closed_form(self, menu):
        for nu in np.linspace(0.02, 0.98, 25):
            x = crossing_price(menu, float(nu))
            got = eu_cutoff(menu, x, nu_bar=1.0)
            assert got == pytest.approx(nu, abs=1e-11)

    @pytest.mark.parametrize("menu", [MENU_I, MENU_II], ids=["ctx_i", "ctx_ii"])
    def test_tiny_cutoffs_resolved(self, menu):
        # the stakes-vs-wealth cancellation regime: margins of order 1e-10
        for nu in (1e-8, 1e-6, 1e-4):
            x = crossing_price(menu, nu)
            got = eu_cutoff(menu, x, nu_bar=1.0)
            assert got == pytest.approx(nu, abs=1e-12 + 1e-4 * nu)

    def test_fair_price_anchors_both_menus(self):
        assert fair_price(MENU_I) == pytest.approx(0.8, abs=1e-15)
        assert fair_price(MENU_II) == pytest.approx(0.8, abs=1e-15)

    def test_clips_to_zero_below_fair_price(self):
        assert eu_cutoff(MENU_I, 0.79, nu_bar=1.0) == 0.0
        assert eu_cutoff(MENU_II, 0.5, nu_bar=1.0) == 0.0

    def test_clips_to_bound_at_high_price(self):
        x_top = crossing_price(MENU_I, 1.0)
        assert eu_cutoff(MENU_I, x_top + 0.01, nu_bar=1.0) == 1.0

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(0.9, 3.5, 7)
        vec = eu_cutoff(MENU_I, xs, nu_bar=1.0)
        assert vec.shape == xs.shape
        for k, x in enumerate(xs):
            assert vec[k] == eu_cutoff(MENU_I, float(x), nu_bar=1.0)

    @given(st.floats(min_value=0.85, max_value=4.4))
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_price(self, x):
        assert eu_cutoff(MENU_I, x + 0.05, 1.0) >= eu_cutoff(MENU_I, x, 1.0)


class TestMarginStability:
    def test_matches_plain_difference_at_moderate_margins(self):
        # where cancellation is harmless the two forms must agree
        for nu in (0.2, 0.5, 0.9):
            for x in (1.0, 2.0, 3.0):
                naive = eu_value(nu, MENU_I, x, 1) - eu_value(nu, MENU_I, x, 2)
                stable = _eu_gap(nu, MENU_I, x)
                assert stable == pytest.approx(naive, rel=1e-9, abs=1e-13)

    def test_resolves_sign_beyond_naive_precision(self):
        # small-stakes menu: utilities are O(1) while the margin within 1e-9
        # of the cutoff is ~2e-17, far below one ulp of the utilities, so a
        # plain subtraction returns zero there; the difference form keeps
        # relative accuracy and still resolves the sign
        x = crossing_price(MENU_II, 0.5)
        nu_star = eu_cutoff(MENU_II, x, nu_bar=1.0)
        delta = 1e-9
        assert _eu_gap(nu_star - delta, MENU_II, x) > 0.0
        assert _eu_gap(nu_star + delta, MENU_II, x) < 0.0
        naive_lo = eu_value(nu_star - delta, MENU_II, x, 1) - eu_value(nu_star - delta, MENU_II, x, 2)
        naive_hi = eu_value(nu_star + delta, MENU_II, x, 1) - eu_value(nu_star + delta, MENU_II, x, 2)
        assert abs(naive_lo - naive_hi) <= 5e-16  # blind across the window

    def test_sign_flips_exactly_once_in_nu(self):
        nus = np.linspace(1e-6, 1.0, 4001)
        gap = _eu_gap(nus, MENU_I, 2.0)
        flips = np.sum(np.diff(np.sign(gap)) != 0)
        assert flips == 1
        assert gap[0] > 0 > gap[-1]

    def test_domain_error_on_ruinous_price(self):
        menu = ContextMenu(mu=0.2, d1=8.0, d2=4.0, r1=1.0, r2=2.0, w=10.0)
        with pytest.raises(DomainError):
            _eu_gap(0.5, menu, 4.2)  # w - x r2 - d2 < 0


class TestDualCutoff:
    def test_closed_form_line(self):
        # x (r2-r1) = (1+omega) mu (d1-d2) -> omega = x/0.8 - 1 on both menus
        for menu in (MENU_I, MENU_II):
            for x in (0.9, 1.2, 1.5):
                assert dual_cutoff(menu, x, omega_bar=1.0) == pytest.approx(
                    x / 0.8 - 1.0, abs=1e-12
                )

    def test_clips_at_support_edges(self):
        assert dual_cutoff(MENU_I, 0.7, omega_bar=1.0) == 0.0
        assert dual_cutoff(MENU_I, 1.7, omega_bar=1.0) == 1.0

    def test_saturated_distortion_means_option_one_everywhere(self):
        # above the saturated spread the margin cannot flip even at the bound
        menu = MENU_I  # saturation at (1+omega) mu = 1, i.e. omega = 4
        assert dual_cutoff(menu, 4.2, omega_bar=5.0) == 5.0


class TestInversion:
    @pytest.mark.parametrize("which", ["eu_i", "eu_ii", "dual_i", "dual_ii"])
    def test_round_trip_residuals(self, ts, which):
        for target in np.linspace(0.05, 0.95, 19):
            x = invert_cutoff(ts, which, float(target))
            assert abs(ts.cutoff(which, x) - target) <= 1e-9

    def test_rejects_target_outside_open_range(self, ts):
        for which in ("eu_i", "dual_ii"):
            with pytest.raises(Unattainable):
                invert_cutoff(ts, which, 0.0)
            with pytest.raises(Unattainable):
                invert_cutoff(ts, which, 1.0)

    def test_rejects_price_outside_box(self, ts):
        # dual_ii needs x = (1+w) * 0.8; target 0.99 wants x = 1.592 (fine),
        # but a tighter box makes it unattainable
        tight = ThresholdSystem(
            menu_i=MENU_I, menu_ii=MENU_II, nu_bar=1.0, omega_bar=1.0, x_min=0.5, x_max=1.0
        )
        with pytest.raises(Unattainable):
            invert_cutoff(tight, "dual_ii", 0.99)

    def test_rejects_saturated_dual_target(self):
        wide = ThresholdSystem(
            menu_i=MENU_I, menu_ii=MENU_II, nu_bar=1.0, omega_bar=5.0, x_min=0.5, x_max=4.5
        )
        with pytest.raises(Unattainable):
            invert_cutoff(wide, "dual_i", 4.2)  # (1+4.2) mu >= 1


class TestThresholdSystem:
    def test_all_cuts_consistent_with_components(self, ts=None):
        ts = ThresholdSystem(MENU_I, MENU_II, 1.0, 1.0, 0.5, 4.5)
        prices = PricePair(2.0, 0.81)
        cuts = ts.all_cuts(prices)
        assert cuts == (
            ts.eu_cut_i(2.0),
            ts.eu_cut_ii(0.81),
            ts.dual_cut_i(2.0),
            ts.dual_cut_ii(0.81),
        )

    def test_context_ii_cutoff_far_steeper(self):
        # the asymmetry the matched-pair construction relies on: context II
        # responds to price two orders of magnitude harder
        ts = ThresholdSystem(MENU_I, MENU_II, 1.0, 1.0, 0.5, 4.5)
        h = 1e-4
        slope_i = (ts.eu_cut_i(2.0 + h) - ts.eu_cut_i(2.0 - h)) / (2 * h)
        slope_ii = (ts.eu_cut_ii(0.81 + h) - ts.eu_cut_ii(0.81 - h)) / (2 * h)
        assert slope_ii > 20 * slope_i

    def test_single_crossing_scan_passes(self):
        ts = ThresholdSystem(MENU_I, MENU_II, 1.0, 1.0, 0.5, 4.5)
        report = check_single_crossing(ts)
        assert report.passed, report.failures
