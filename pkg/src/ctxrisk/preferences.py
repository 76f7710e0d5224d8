"""Two-option insurance menus and the preference cutoffs they induce.

Each context offers two options; option 1 carries the higher deductible and
the lower rate. An agent evaluates options either with CARA expected utility
(indexed by absolute risk aversion ``nu``) or with a dual/distortion rule
(indexed by a probability loading ``omega``). Under either family a higher
index makes the low-deductible option relatively more attractive, so each
(menu, price) pair induces a single cutoff: indices at or below it pick
option 1, indices above it pick option 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .numeric import Bracket, NoSignChange, bisect_monotone_vec, find_root

# Indices below the cutoff weakly prefer option 1; exact indifference resolves
# to option 1 everywhere in this package.

CutName = Literal["eu_i", "eu_ii", "dual_i", "dual_ii"]

# Guard for the CARA nu -> 0 singularity: below this, use the series branch.
_CARA_EPS = 1e-9


class DomainError(Exception):
    """Final wealth would be non-positive somewhere on the stencil."""


class Unattainable(Exception):
    """No admissible price produces the requested cutoff."""


@dataclass(frozen=True)
class ContextMenu:
    """One context's option pair: (d1, r1) vs (d2, r2), loss odds mu, wealth w.

    Option 1 is the high-deductible/low-rate option (d1 > d2, r1 < r2). The
    price index x scales both rates, so option ell costs x * r_ell.
    """

    mu: float
    d1: float
    d2: float
    r1: float
    r2: float
    w: float

    def validate(self, x_max: float | None = None) -> list[str]:
        """Return a list of violated menu conditions (empty when sound)."""
        bad = []
        if not 0.0 < self.mu < 1.0:
            bad.append(f"mu must lie in (0, 1), got {self.mu}")
        if not self.d1 > self.d2 >= 0.0:
            bad.append(f"need d1 > d2 >= 0, got d1={self.d1}, d2={self.d2}")
        if not self.r2 > self.r1 >= 0.0:
            bad.append(f"need r2 > r1 >= 0, got r1={self.r1}, r2={self.r2}")
        if self.w <= 0.0:
            bad.append(f"wealth must be positive, got {self.w}")
        if x_max is not None:
            floor = self.w - x_max * max(self.r1, self.r2) - self.d1
            if floor <= 0.0:
                bad.append(
                    f"wealth {self.w} cannot cover price*rate + deductible at x={x_max} (margin {floor})"
                )
        return bad

    def option(self, which: int) -> tuple[float, float]:
        """(deductible, rate) for option 1 or 2."""
        if which == 1:
            return self.d1, self.r1
        if which == 2:
            return self.d2, self.r2
        raise ValueError(f"option must be 1 or 2, got {which}")

    def break_even_price(self) -> float:
        """Price index at which a risk-neutral agent is indifferent."""
        return self.mu * (self.d1 - self.d2) / (self.r2 - self.r1)


@dataclass(frozen=True)
class PricePair:
    """Price indices for context I and context II."""

    x_i: float
    x_ii: float


def _cara_util(nu, y):
    # u_nu(y) = (1 - exp(-nu y)) / nu, with the nu=0 linear limit. The series
    # branch y - nu y^2 / 2 takes over below _CARA_EPS where the exact form
    # loses precision to cancellation.
    nu = np.asarray(nu, dtype=float)
    y = np.asarray(y, dtype=float)
    small = np.abs(nu) < _CARA_EPS
    safe = np.where(small, 1.0, nu)
    exact = (1.0 - np.exp(-safe * y)) / safe
    series = y - 0.5 * nu * y * y
    return np.where(small, series, exact)


def eu_value(nu, menu: ContextMenu, x, option: int):
    """CARA expected utility of one option at price index x.

    Broadcasts over ``nu`` and ``x``. Raises DomainError if final wealth is
    non-positive in any state touched by the evaluation.
    """
    d, r = menu.option(option)
    x = np.asarray(x, dtype=float)
    y_noloss = menu.w - x * r
    y_loss = menu.w - x * r - d
    if np.any(y_loss <= 0.0) or np.any(y_noloss <= 0.0):
        raise DomainError(
            f"non-positive final wealth for option {option} (w={menu.w}, d={d}, r={r}, max x={np.max(x)})"
        )
    out = (1.0 - menu.mu) * _cara_util(nu, y_noloss) + menu.mu * _cara_util(nu, y_loss)
    return float(out) if out.ndim == 0 else out


def dual_value(omega, menu: ContextMenu, x, option: int):
    """Dual (distortion) value of one option: -x*r - min(1, (1+omega)*mu)*d."""
    d, r = menu.option(option)
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    out = -x * r - np.minimum(1.0, (1.0 + omega) * menu.mu) * d
    return float(out) if out.ndim == 0 else out


def _eu_gap(nu, menu: ContextMenu, x):
    """Preference margin for option 1 over option 2 in difference form.

    Strictly decreasing in nu for a sound menu, strictly increasing in x.
    Subtracting eu_value outputs directly would lose the margin to
    cancellation once stakes are small next to wealth (absolute noise of
    the O(1) utilities swamps the tiny slope in nu, making the cutoff
    unresolvable past ~1e-8); pairing states and using expm1 keeps full
    relative precision, which the threshold round-trip guarantees need.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    ds = x * (menu.r2 - menu.r1)  # premium spread, > 0
    dd = menu.d1 - menu.d2  # deductible spread, > 0
    b_noloss = menu.w - x * menu.r2
    b_loss = b_noloss - menu.d2
    a_loss = menu.w - x * menu.r1 - menu.d1
    if np.any(a_loss <= 0.0) or np.any(b_loss <= 0.0):
        raise DomainError(
            f"non-positive final wealth in the margin (w={menu.w}, max x={np.max(x)})"
        )
    small = np.abs(nu) < _CARA_EPS
    safe = np.where(small, 1.0, nu)
    core = (1.0 - menu.mu) * -np.expm1(-safe * ds) + menu.mu * np.exp(
        safe * menu.d2
    ) * -np.expm1(-safe * (ds - dd))
    exact = np.exp(-safe * b_noloss) / safe * core
    a_noloss = menu.w - x * menu.r1
    series = (ds - menu.mu * dd) - 0.5 * nu * (
        (1.0 - menu.mu) * (a_noloss * a_noloss - b_noloss * b_noloss)
        + menu.mu * (a_loss * a_loss - b_loss * b_loss)
    )
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def eu_cutoff(menu: ContextMenu, x, nu_bar: float, iterations: int = 64):
    """Risk-aversion cutoff in [0, nu_bar] below which option 1 is chosen.

    Vectorized over ``x``. The interior root is found by fixed-count
    bisection of the preference margin, which is monotone in nu.
    """
    xarr = np.asarray(x, dtype=float)
    gap0 = _eu_gap(np.zeros_like(xarr), menu, xarr)
    gap_top = _eu_gap(np.full_like(xarr, nu_bar), menu, xarr)

    lo = np.zeros_like(xarr)
    hi = np.full_like(xarr, nu_bar)
    interior = (gap0 > 0.0) & (gap_top < 0.0)
    if np.any(interior):
        root = bisect_monotone_vec(lambda nu: _eu_gap(nu, menu, xarr), lo, hi, iterations)
    else:
        root = lo
    out = np.where(gap0 <= 0.0, 0.0, np.where(gap_top >= 0.0, nu_bar, root))
    return float(out) if out.ndim == 0 else out


def dual_cutoff(menu: ContextMenu, x, omega_bar: float):
    """Loading cutoff in [0, omega_bar] below which option 1 is chosen.

    Closed form: the margin x*(r2-r1) - min(1,(1+omega)*mu)*(d1-d2) crosses
    zero at omega = x*(r2-r1)/(mu*(d1-d2)) - 1 while the distortion is still
    unsaturated; once x*(r2-r1) clears the fully saturated spread, option 1
    wins for every loading and the cutoff clips to omega_bar.
    """
    xarr = np.asarray(x, dtype=float)
    lhs = xarr * (menu.r2 - menu.r1)
    spread_top = np.minimum(1.0, (1.0 + omega_bar) * menu.mu) * (menu.d1 - menu.d2)
    raw = lhs / (menu.mu * (menu.d1 - menu.d2)) - 1.0
    out = np.where(lhs >= spread_top, omega_bar, np.clip(raw, 0.0, omega_bar))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ThresholdSystem:
    """Both contexts' menus plus index supports and the admissible price range.

    Menus are not hard-validated at construction so that diagnostic scans can
    be pointed at deliberately broken configurations; the config loader is
    the strict gate.
    """

    menu_i: ContextMenu
    menu_ii: ContextMenu
    nu_bar: float
    omega_bar: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if not self.nu_bar > 0.0:
            raise ValueError(f"nu_bar must be positive, got {self.nu_bar}")
        if not self.omega_bar > 0.0:
            raise ValueError(f"omega_bar must be positive, got {self.omega_bar}")
        if not 0.0 < self.x_min < self.x_max:
            raise ValueError(f"need 0 < x_min < x_max, got [{self.x_min}, {self.x_max}]")

    # The four cutoff maps, each a function of its own context's price only.
    def eu_cut_i(self, x):
        return eu_cutoff(self.menu_i, x, self.nu_bar)

    def eu_cut_ii(self, x):
        return eu_cutoff(self.menu_ii, x, self.nu_bar)

    def dual_cut_i(self, x):
        return dual_cutoff(self.menu_i, x, self.omega_bar)

    def dual_cut_ii(self, x):
        return dual_cutoff(self.menu_ii, x, self.omega_bar)

    def cutoff(self, which: CutName, x):
        family, ctx = which.rsplit("_", 1)
        return getattr(self, f"{family}_cut_{ctx}")(x)

    def prices_admissible(self, prices: PricePair) -> bool:
        return (
            self.x_min <= prices.x_i <= self.x_max and self.x_min <= prices.x_ii <= self.x_max
        )

    def all_cuts(self, prices: PricePair) -> tuple[float, float, float, float]:
        """(eu_i, eu_ii, dual_i, dual_ii) cutoffs at the given prices."""
        return (
            self.eu_cut_i(prices.x_i),
            self.eu_cut_ii(prices.x_ii),
            self.dual_cut_i(prices.x_i),
            self.dual_cut_ii(prices.x_ii),
        )


def invert_cutoff(ts: ThresholdSystem, which: CutName, target: float, tol: float = 1e-10) -> float:
    """Price at which the named cutoff equals ``target``.

    The target must be strictly inside the cutoff range attainable over
    [x_min, x_max]; otherwise Unattainable is raised. The returned price
    reproduces the target to within ``tol`` in cutoff units.
    """
    menu = ts.menu_i if which.endswith("_i") else ts.menu_ii
    if which.startswith("eu"):
        bound = ts.nu_bar
        if not 0.0 < target < bound:
            raise Unattainable(f"target {target} outside the open cutoff range (0, {bound})")
        # cutoff(x) = target exactly where the preference margin at `target`
        # changes sign in x (the margin is strictly increasing in x).
        g_lo = _eu_gap(target, menu, ts.x_min)
        g_hi = _eu_gap(target, menu, ts.x_max)
        if g_lo >= 0.0:
            raise Unattainable(f"{which} already exceeds {target} at x_min={ts.x_min}")
        if g_hi <= 0.0:
            raise Unattainable(f"{which} stays below {target} up to x_max={ts.x_max}")
        try:
            x = find_root(lambda p: _eu_gap(target, menu, p), Bracket(ts.x_min, ts.x_max), tol=1e-13)
        except NoSignChange as exc:  # pragma: no cover - guarded above
            raise Unattainable(str(exc)) from exc
    else:
        bound = ts.omega_bar
        if not 0.0 < target < bound:
            raise Unattainable(f"target {target} outside the open cutoff range (0, {bound})")
        if (1.0 + target) * menu.mu >= 1.0:
            raise Unattainable(
                f"distortion saturates at loading {1.0 / menu.mu - 1.0:.6g}; no unique price for {target}"
            )
        x = (1.0 + target) * menu.mu * (menu.d1 - menu.d2) / (menu.r2 - menu.r1)
        if not ts.x_min <= x <= ts.x_max:
            raise Unattainable(f"required price {x} outside [{ts.x_min}, {ts.x_max}]")
    achieved = ts.cutoff(which, x)
    if abs(achieved - target) > tol:
        raise Unattainable(f"inversion residual {abs(achieved - target):.3g} exceeds {tol} for {which}")
    return float(x)


@dataclass
class SingleCrossingReport:
    """Outcome of the monotonicity / single-crossing scan."""

    passed: bool
    failures: list[str] = field(default_factory=list)


def check_single_crossing(ts: ThresholdSystem, grid_size: int = 201) -> SingleCrossingReport:
    """Scan both menus for the sign structure the cutoff construction needs.

    Checks, on a price x index grid: the EU preference margin changes sign
    at most once in nu, and only downward (bisection tracks the sign, so a
    single crossing suffices; the margin need not be globally monotone,
    and below the fair price it rises while staying negative); the dual
    margin is nonincreasing in omega; all four cutoff maps are nondecreasing
    in their own price.
    """
    failures: list[str] = []
    prices = np.linspace(ts.x_min, ts.x_max, 9)
    nu_grid = np.linspace(0.0, ts.nu_bar, grid_size)
    om_grid = np.linspace(0.0, ts.omega_bar, grid_size)

    for label, menu in (("context I", ts.menu_i), ("context II", ts.menu_ii)):
        for x in prices:
            gap = _eu_gap(nu_grid, menu, x)
            signs = np.sign(gap)
            flips = np.nonzero(np.diff(signs))[0]
            if len(flips) > 1:
                failures.append(f"EU margin crosses zero more than once for {label} at x={x:.6g}")
                break
            if len(flips) == 1 and not (gap[flips[0]] > gap[flips[0] + 1]):
                failures.append(f"EU margin crosses zero upward for {label} at x={x:.6g}")
                break

    for label, menu in (("context I", ts.menu_i), ("context II", ts.menu_ii)):
        for x in prices:
            margin = dual_value(om_grid, menu, x, 1) - dual_value(om_grid, menu, x, 2)
            if np.any(np.diff(margin) > 1e-12):
                failures.append(f"dual margin increases in omega for {label} at x={x:.6g}")
                break

    x_grid = np.linspace(ts.x_min, ts.x_max, grid_size)
    for name in ("eu_i", "eu_ii", "dual_i", "dual_ii"):
        cuts = ts.cutoff(name, x_grid)
        drops = np.diff(cuts) < -1e-12
        if np.any(drops):
            k = int(np.argmax(drops))
            failures.append(f"cutoff {name} decreases in its own price near x={x_grid[k]:.6g}")

    return SingleCrossingReport(passed=not failures, failures=failures)
