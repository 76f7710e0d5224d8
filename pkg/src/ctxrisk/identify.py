"""Recovery of mixture weights, index distributions, and the dependence
structure from bundle-choice probabilities alone.

The engine exploits a kink. Prices are tuned so the two contexts' CARA
cutoffs sit at a common level v while the loading cutoffs stay strictly
ordered. The derivative of P[bundle (1,1)] with respect to the context-I
CARA cutoff then jumps as the context-II cutoff crosses v: approaching from
above keeps the always-CARA agents marginal in context I, approaching from
below hands their margin to context II. The switcher term moves smoothly
through the crossing, so the jump isolates (always-CARA weight) x (density
at v) x (mass of attention profiles that look at both options in both
contexts). Sweeping v traces the density; integrating recovers the weight;
the mirrored construction on the loading side recovers the dual-family
weight; and with both margins in hand the switcher dependence is read off
by inverting the mixture formula pointwise.

All derivative work happens in price space with explicit guards that no
finite-difference stencil straddles the kink it is measuring.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .choice import Scenario, prob_11_limited
from .numeric import SeededStream, _mix64, cumulative_trapezoid, trapezoid
from .population import DegenerateShare
from .preferences import PricePair, ThresholdSystem, Unattainable, invert_cutoff

ProbFn = Callable[[float, float], float]
Side = Literal["right", "left"]
SideFamily = Literal["eu", "dual"]


class Infeasible(Exception):
    """The matching conditions cannot be met at this level."""


class StepTooLarge(Exception):
    """A finite-difference stencil would cross the kink or break an ordering."""


class InsufficientCoverage(Exception):
    """Too few grid points were feasible; partial results ride along."""

    def __init__(self, message: str, partial: "SideRecovery | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class MatchedPricePair:
    """Prices placing both cutoffs of one family at a common level.

    ``slack`` is the strict-ordering margin of the other family's cutoffs
    (context I minus context II for the CARA match, context II minus
    context I for the loading match); it must stay positive for the kink
    construction to be valid.
    """

    prices: PricePair
    level: float
    slack: float
    family: SideFamily


@dataclass(frozen=True)
class GapEstimate:
    """One-sided derivative gap at one grid level."""

    level: float
    gap: float
    feasible: bool
    slack: float
    right: float = float("nan")
    left: float = float("nan")
    reason: str = ""


@dataclass
class SideRecovery:
    """Recovered weight and cdf for one preference family."""

    family: SideFamily
    grid: np.ndarray
    gap: np.ndarray  # NaN where outside the feasible hull
    slack: np.ndarray
    feasible: np.ndarray  # bool per grid point
    share_hat: float  # integral of the gap over the feasible hull
    cdf_hat: np.ndarray  # NaN outside the hull
    coverage: float

    def quantile(self, q: float) -> float:
        """Invert the recovered cdf by monotone interpolation on the hull."""
        ok = ~np.isnan(self.cdf_hat)
        return float(np.interp(q, self.cdf_hat[ok], self.grid[ok]))


@dataclass(frozen=True)
class CopulaCell:
    u: float
    v: float
    c_hat: float
    c_true: float
    feasible: bool
    reason: str = ""


@dataclass
class IdentificationResult:
    """Everything the pipeline learned, plus per-stage diagnostics."""

    full_attention: bool
    alpha_times_O_hat: float | None = None
    alpha_hat: float | None = None
    beta_times_O_hat: float | None = None
    beta_hat: float | None = None
    cara_side: SideRecovery | None = None
    dual_side: SideRecovery | None = None
    copula_cells: list[CopulaCell] | None = None
    stage_errors: dict[str, str] | None = None

    @property
    def coverage_f(self) -> float:
        return self.cara_side.coverage if self.cara_side is not None else 0.0

    @property
    def coverage_g(self) -> float:
        return self.dual_side.coverage if self.dual_side is not None else 0.0


@dataclass(frozen=True)
class KinkOptions:
    """Numerical knobs for the derivative-gap machinery.

    eps is the cutoff-space offset used to approach the kink from one side;
    fd_step is the price-space stencil half-width. When fd_step_cut is set
    the stencil is sized in cutoff space instead (fd_step_cut divided by the
    local cutoff slope), which is what noisy probability evaluators need:
    their stencils must be as wide as the kink offset allows everywhere,
    not just where the cutoff is steep. slack_min floors the ordering
    margin of the non-differentiated family; slack_min_other floors it on
    the mirrored construction.
    """

    eps: float
    fd_step: float
    fd_step_cut: float | None = None
    slack_min: float = 1e-3
    slack_min_other: float = 1e-3
    invert_tol: float = 1e-10

    @classmethod
    def defaults_for(cls, ts: ThresholdSystem, family: SideFamily = "eu") -> "KinkOptions":
        bound = ts.nu_bar if family == "eu" else ts.omega_bar
        return cls(eps=1e-4 * bound, fd_step=1e-6 * (ts.x_max - ts.x_min))


OptsLike = KinkOptions | Callable[[float], KinkOptions]


def _opts_at(opts: OptsLike, level: float) -> KinkOptions:
    return opts(level) if callable(opts) else opts


class EdgeShrunkOptions:
    """Per-level options that keep the kink offset inside the support.

    Near the support edges the offset level +/- eps would leave (0, bound),
    making those grid points infeasible and biasing the integrated weight
    low. Shrinking eps trades extra local noise for reach; the noisy points
    sit where little mass can live, so the trade favors integrated
    quantities. The stencil planner caps its own width at 0.4x the kink
    offset, so only eps needs shrinking here.
    """

    def __init__(self, base: KinkOptions, bound: float):
        self.base = base
        self.bound = bound

    def __call__(self, level: float) -> KinkOptions:
        eps = min(self.base.eps, 0.8 * level, 0.8 * (self.bound - level))
        return replace(self.base, eps=eps)


def shrink_eps_near_edges(base: KinkOptions, bound: float) -> Callable[[float], KinkOptions]:
    return EdgeShrunkOptions(base, bound)


class ExactProbability:
    """Exact P[bundle (1,1)] as a function of the two price indices.

    A class, not a closure, so worker processes can receive it.
    """

    def __init__(self, sc: Scenario):
        self.sc = sc

    def __call__(self, x_i: float, x_ii: float) -> float:
        return prob_11_limited(replace(self.sc, prices=PricePair(float(x_i), float(x_ii))))


def exact_prob_fn(sc: Scenario) -> ProbFn:
    return ExactProbability(sc)


class MonteCarloProbability:
    """Monte Carlo frequency evaluator, n draws per distinct price pair.

    Substreams are keyed by the price pair's bit pattern, so estimates do
    not depend on evaluation order or on how work is split across
    processes; repeated queries at the same pair replay the same draws.
    """

    def __init__(self, sc: Scenario, n_per_point: int, stream: SeededStream):
        if n_per_point < 1:
            raise ValueError(f"need at least one draw per point, got {n_per_point}")
        self.sc = sc
        self.n_per_point = int(n_per_point)
        self.seed = stream.seed
        self.stream_id = stream.stream_id

    def __call__(self, x_i: float, x_ii: float) -> float:
        from .choice import draw_choices

        key = _mix64(
            int(np.float64(x_i).view(np.uint64)), int(np.float64(x_ii).view(np.uint64))
        )
        stream = SeededStream(self.seed, self.stream_id).substream(key)
        sc = self.sc
        d = draw_choices(sc.ts, sc.mix, sc.consideration, x_i, x_ii, self.n_per_point, stream)
        return float(np.mean((d.choice_i == 1) & (d.choice_ii == 1)))


def mc_prob_fn(sc: Scenario, n_per_point: int, stream: SeededStream) -> ProbFn:
    return MonteCarloProbability(sc, n_per_point, stream)


class EmpiricalEvaluator:
    """Frequency evaluator backed by pre-simulated agents.

    Rows are grouped by their exact (x_i, x_ii) pair; querying a pair absent
    from the data raises KeyError with the offending prices.
    """

    def __init__(self, x_i, x_ii, choice_i, choice_ii):
        x_i = np.asarray(x_i, dtype=float)
        x_ii = np.asarray(x_ii, dtype=float)
        hit = (np.asarray(choice_i) == 1) & (np.asarray(choice_ii) == 1)
        self._share: dict[tuple[float, float], float] = {}
        self._count: dict[tuple[float, float], int] = {}
        pairs = np.stack([x_i, x_ii], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        for k, (xi, xii) in enumerate(uniq):
            mask = inverse == k
            self._share[(float(xi), float(xii))] = float(np.mean(hit[mask]))
            self._count[(float(xi), float(xii))] = int(np.sum(mask))

    def __len__(self):
        return len(self._share)

    def __call__(self, x_i: float, x_ii: float) -> float:
        key = (float(x_i), float(x_ii))
        if key not in self._share:
            raise KeyError(
                f"dataset has no agents at price pair ({x_i!r}, {x_ii!r}); "
                "was it simulated from this run's evaluation design?"
            )
        return self._share[key]


# ---------------------------------------------------------------------------
# price matching


def match_prices_ordered(ts: ThresholdSystem, v: float, slack_min: float = 1e-3) -> MatchedPricePair:
    """Prices with the CARA cutoffs strictly ordered across contexts.

    Context I's CARA cutoff is pinned at v; context II's price is chosen so
    its CARA cutoff sits strictly above v while its loading cutoff sits
    strictly below context I's. In that configuration P[(1,1)] is locally
    smooth in the context-I price, and its cutoff-space derivative prices
    the always-CARA margin directly.
    """
    try:
        x_i = invert_cutoff(ts, "eu_i", v)
    except Unattainable as exc:
        raise Infeasible(f"cannot pin context-I CARA cutoff at {v}: {exc}") from exc
    w_i = ts.dual_cut_i(x_i)

    # Feasible x_ii interval: above the price where the context-II CARA
    # cutoff reaches v, below the price where its loading cutoff reaches w_i.
    try:
        lo = invert_cutoff(ts, "eu_ii", v)
    except Unattainable as exc:
        raise Infeasible(f"context-II CARA cutoff cannot reach {v}: {exc}") from exc
    menu = ts.menu_ii
    if w_i >= ts.omega_bar:
        hi_cut = ts.omega_bar  # ordering only needs dual_cut_ii below saturation
    else:
        hi_cut = w_i
    hi = (1.0 + hi_cut) * menu.mu * (menu.d1 - menu.d2) / (menu.r2 - menu.r1)
    hi = min(hi, ts.x_max)
    if not lo < hi:
        raise Infeasible(
            f"no context-II price separates the cutoffs at v={v}: "
            f"CARA floor price {lo:.6g} >= loading ceiling price {hi:.6g}"
        )
    x_ii = 0.5 * (lo + hi)
    eu_slack = ts.eu_cut_ii(x_ii) - v
    dual_slack = w_i - ts.dual_cut_ii(x_ii)
    if eu_slack <= slack_min or dual_slack <= slack_min:
        raise Infeasible(
            f"ordering margins too thin at v={v}: CARA {eu_slack:.3g}, loading {dual_slack:.3g}"
        )
    return MatchedPricePair(PricePair(x_i, x_ii), level=v, slack=dual_slack, family="eu")


def match_prices_matched(
    ts: ThresholdSystem, v: float, slack_min: float = 1e-3, invert_tol: float = 1e-10
) -> MatchedPricePair:
    """Prices equalizing the CARA cutoffs at v, loading cutoffs strictly ordered.

    Both contexts' CARA cutoffs are driven to v by inversion (residuals held
    to ``invert_tol``); feasibility then requires the context-I loading
    cutoff to exceed the context-II one by more than ``slack_min``.
    """
    try:
        x_i = invert_cutoff(ts, "eu_i", v, tol=invert_tol)
        x_ii = invert_cutoff(ts, "eu_ii", v, tol=invert_tol)
    except Unattainable as exc:
        raise Infeasible(f"CARA cutoffs cannot both reach {v}: {exc}") from exc
    slack = ts.dual_cut_i(x_i) - ts.dual_cut_ii(x_ii)
    if slack <= slack_min:
        raise Infeasible(
            f"loading cutoffs not separated at v={v}: slack {slack:.6g} <= floor {slack_min:.6g}"
        )
    return MatchedPricePair(PricePair(x_i, x_ii), level=v, slack=slack, family="eu")


def match_prices_matched_dual(
    ts: ThresholdSystem, w: float, slack_min: float = 1e-3, invert_tol: float = 1e-10
) -> MatchedPricePair:
    """Mirror construction: loading cutoffs equal at w, CARA cutoffs ordered.

    Here the ordering requirement flips sides: the context-II CARA cutoff
    must exceed the context-I one, so the always-CARA term stays locally
    flat while the loading kink is probed.
    """
    try:
        x_i = invert_cutoff(ts, "dual_i", w, tol=invert_tol)
        x_ii = invert_cutoff(ts, "dual_ii", w, tol=invert_tol)
    except Unattainable as exc:
        raise Infeasible(f"loading cutoffs cannot both reach {w}: {exc}") from exc
    slack = ts.eu_cut_ii(x_ii) - ts.eu_cut_i(x_i)
    if slack <= slack_min:
        raise Infeasible(
            f"CARA cutoffs not separated at w={w}: slack {slack:.6g} <= floor {slack_min:.6g}"
        )
    return MatchedPricePair(PricePair(x_i, x_ii), level=w, slack=slack, family="dual")


# ---------------------------------------------------------------------------
# one-sided derivatives


@dataclass(frozen=True)
class ProbePlan:
    """The two probability probes and the cutoff-space denominator for one
    one-sided derivative. ``pairs`` holds the (low arm, high arm) prices."""

    pairs: tuple[PricePair, PricePair]
    denom: float
    step: float
    level: float
    shifted_level: float


def _stencil_width(
    ts: ThresholdSystem, which: str, x: float, opts: KinkOptions, gap_to_kink: float
) -> float:
    """Price-space half-width of the differencing stencil at x.

    With fd_step_cut set, the width targets that motion in cutoff units,
    using a local slope probe; the slope is re-verified by the caller's
    drift guard, so a rough probe is fine.
    """
    if opts.fd_step_cut is None:
        return opts.fd_step
    probe = min(opts.fd_step, 1e-7 * (ts.x_max - ts.x_min))
    slope = (ts.cutoff(which, x + probe) - ts.cutoff(which, x - probe)) / (2.0 * probe)
    if slope <= 0.0:
        raise StepTooLarge(f"{which} cutoff is locally flat at price {x}; cannot size the stencil")
    want = min(opts.fd_step_cut, 0.4 * gap_to_kink)
    return want / slope


def _probe_plan(
    ts: ThresholdSystem,
    matched: MatchedPricePair,
    target: float,
    opts: KinkOptions,
) -> ProbePlan:
    """Plan the finite-difference probes with the kink shifted to ``target``.

    For the CARA family the context-II price is re-inverted so its cutoff
    sits at the target level and the context-I price is wiggled; the
    loading family mirrors the roles. Raises StepTooLarge when a stencil
    arm leaves the admissible box, reaches the shifted kink, or erodes the
    ordering margin.
    """
    gap_to_kink = abs(target - matched.level)
    if gap_to_kink <= 0.0:
        raise StepTooLarge("shift target coincides with the kink level")
    x_i, x_ii = matched.prices.x_i, matched.prices.x_ii

    if matched.family == "eu":
        own, own_x = "eu_i", x_i
        try:
            x_shift = invert_cutoff(ts, "eu_ii", target, tol=opts.invert_tol)
        except Unattainable as exc:
            raise StepTooLarge(
                f"shift to {target} pushes the context-II CARA cutoff out of range: {exc}"
            ) from exc
        remaining = ts.dual_cut_i(x_i) - ts.dual_cut_ii(x_shift)
        floor = 0.25 * opts.slack_min
        margin_name = "loading"
    else:
        own, own_x = "dual_ii", x_ii
        try:
            x_shift = invert_cutoff(ts, "dual_i", target, tol=opts.invert_tol)
        except Unattainable as exc:
            raise StepTooLarge(
                f"shift to {target} pushes the context-I loading cutoff out of range: {exc}"
            ) from exc
        remaining = ts.eu_cut_ii(x_ii) - ts.eu_cut_i(x_shift)
        floor = 0.25 * opts.slack_min_other
        margin_name = "CARA"

    if remaining <= floor:
        raise StepTooLarge(
            f"shift to {target} erodes the {margin_name} margin to {remaining:.3g} "
            f"at level {matched.level}"
        )
    h = _stencil_width(ts, own, own_x, opts, gap_to_kink)
    if not (ts.x_min <= own_x - h and own_x + h <= ts.x_max):
        raise StepTooLarge(f"price stencil [{own_x - h}, {own_x + h}] leaves the admissible box")
    cut_hi = ts.cutoff(own, own_x + h)
    cut_lo = ts.cutoff(own, own_x - h)
    drift = max(abs(cut_hi - matched.level), abs(matched.level - cut_lo))
    if drift >= 0.5 * gap_to_kink:
        raise StepTooLarge(
            f"stencil moves the {own} cutoff by {drift:.3g}, too close to the "
            f"kink offset {gap_to_kink:.3g}"
        )
    denom = (cut_hi - cut_lo) / (2.0 * h)
    if denom <= 0.0:
        raise StepTooLarge(
            f"cutoff is flat in its own price at level {matched.level} (denominator {denom})"
        )
    if matched.family == "eu":
        pairs = (PricePair(x_i - h, x_shift), PricePair(x_i + h, x_shift))
    else:
        pairs = (PricePair(x_shift, x_ii - h), PricePair(x_shift, x_ii + h))
    return ProbePlan(pairs=pairs, denom=denom, step=h, level=matched.level, shifted_level=target)


def deriv_with_shifted_cut(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    matched: MatchedPricePair,
    target: float,
    opts: KinkOptions,
) -> float:
    """Cutoff-space derivative of P[(1,1)] with the paired cutoff at ``target``.

    Scanning ``target`` across the matched level traces the derivative's
    jump: the map is continuous except at target = level. Price-space chain
    rule: a central price difference of the probability divided by a
    central price difference of the cutoff, both on guarded stencils.
    """
    plan = _probe_plan(ts, matched, target, opts)
    lo, hi = plan.pairs
    dp = (prob_fn(hi.x_i, hi.x_ii) - prob_fn(lo.x_i, lo.x_ii)) / (2.0 * plan.step)
    return dp / plan.denom


def dprob_dcut(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    matched: MatchedPricePair,
    side: Side,
    opts: KinkOptions,
) -> float:
    """One-sided derivative of P[(1,1)] in cutoff units at the matched level."""
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    sgn = 1.0 if side == "right" else -1.0
    return deriv_with_shifted_cut(prob_fn, ts, matched, matched.level + sgn * opts.eps, opts)


def ordered_derivative(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    v: float,
    opts: KinkOptions,
) -> float:
    """Cutoff-space derivative at strictly ordered cutoffs (no kink nearby).

    With the context-II CARA cutoff strictly above v and the loading cutoffs
    strictly ordered the other way, P is smooth in the context-I price and
    this plain central quotient estimates the always-CARA margin directly.
    """
    matched = match_prices_ordered(ts, v, slack_min=opts.slack_min)
    x_i, x_ii = matched.prices.x_i, matched.prices.x_ii
    h = opts.fd_step
    if not (ts.x_min <= x_i - h and x_i + h <= ts.x_max):
        raise StepTooLarge(f"price stencil [{x_i - h}, {x_i + h}] leaves the admissible box")
    cut_hi = ts.eu_cut_i(x_i + h)
    cut_lo = ts.eu_cut_i(x_i - h)
    margin = ts.eu_cut_ii(x_ii) - max(cut_hi, cut_lo)
    if margin <= 0.0:
        raise StepTooLarge(f"stencil reaches the context-II cutoff at v={v}")
    denom = (cut_hi - cut_lo) / (2.0 * h)
    if denom <= 0.0:
        raise StepTooLarge(f"cutoff is flat in its own price at v={v}")
    dp = (prob_fn(x_i + h, x_ii) - prob_fn(x_i - h, x_ii)) / (2.0 * h)
    return dp / denom


def kink_gap(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    level: float,
    family: SideFamily,
    opts: OptsLike,
) -> GapEstimate:
    """Right minus left one-sided derivative at one matched level.

    Both matching failure and stencil failure mark the point infeasible
    (with the reason kept) instead of aborting a sweep; the coverage
    statistic and the hull logic downstream make the loss visible.
    """
    o = _opts_at(opts, level)
    matcher = match_prices_matched if family == "eu" else match_prices_matched_dual
    slack_min = o.slack_min if family == "eu" else o.slack_min_other
    try:
        matched = matcher(ts, level, slack_min=slack_min, invert_tol=o.invert_tol)
        right = dprob_dcut(prob_fn, ts, matched, "right", o)
        left = dprob_dcut(prob_fn, ts, matched, "left", o)
    except (Infeasible, StepTooLarge) as exc:
        return GapEstimate(
            level=level, gap=float("nan"), feasible=False, slack=float("nan"), reason=str(exc)
        )
    return GapEstimate(
        level=level, gap=right - left, feasible=True, slack=matched.slack, right=right, left=left
    )


# ---------------------------------------------------------------------------
# recovery stages


def recover_side(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    grid: Sequence[float],
    family: SideFamily,
    opts: OptsLike,
    min_coverage: float = 0.5,
    mapper: Callable | None = None,
) -> SideRecovery:
    """Sweep the grid, fill interior infeasibilities, integrate the gap.

    The recovered weight is the trapezoid integral of the gap over the
    feasible hull; the recovered cdf is the running integral normalized by
    that weight. Grid points outside the hull stay NaN; interior infeasible
    points are linearly interpolated from their feasible neighbors. Raises
    InsufficientCoverage (with partial results attached) when fewer than
    ``min_coverage`` of the grid points are feasible.

    ``mapper`` lets callers fan the per-level work out to a process pool;
    it must preserve input order (like the executor map functions do), so
    the result is independent of how the work is scheduled.
    """
    from functools import partial

    grid = np.asarray(grid, dtype=float)
    work = partial(kink_gap, prob_fn, ts, family=family, opts=opts)
    estimates = list((mapper or map)(work, [float(v) for v in grid]))
    feasible = np.array([e.feasible for e in estimates])
    gap = np.array([e.gap for e in estimates])
    slack = np.array([e.slack for e in estimates])
    coverage = float(np.mean(feasible))

    partial = SideRecovery(
        family=family,
        grid=grid,
        gap=gap,
        slack=slack,
        feasible=feasible,
        share_hat=float("nan"),
        cdf_hat=np.full_like(grid, np.nan),
        coverage=coverage,
    )
    if coverage < min_coverage or feasible.sum() < 2:
        reasons = {e.reason for e in estimates if not e.feasible}
        raise InsufficientCoverage(
            f"only {feasible.sum()} of {len(grid)} grid points feasible "
            f"(coverage {coverage:.3f} < {min_coverage}); e.g. {next(iter(reasons))}",
            partial=partial,
        )

    # Feasible hull: no extrapolation past the outermost feasible points.
    idx = np.nonzero(feasible)[0]
    lo, hi = idx[0], idx[-1] + 1
    hull = slice(lo, hi)
    filled = gap.copy()
    if np.any(~feasible[hull]):
        filled[lo:hi] = np.where(
            feasible[hull],
            gap[hull],
            np.interp(grid[hull], grid[idx], gap[idx]),
        )
    share = trapezoid(np.stack([grid[hull], filled[hull]], axis=1))
    cdf = np.full_like(grid, np.nan)
    cdf[hull] = cumulative_trapezoid(grid[hull], filled[hull]) / share
    out_gap = np.full_like(grid, np.nan)
    out_gap[hull] = filled[hull]

    return SideRecovery(
        family=family,
        grid=grid,
        gap=out_gap,
        slack=slack,
        feasible=feasible,
        share_hat=float(share),
        cdf_hat=cdf,
        coverage=coverage,
    )


def recover_copula_point(
    prob_fn: ProbFn,
    ts: ThresholdSystem,
    u: float,
    v: float,
    alpha_hat: float,
    beta_hat: float,
    cara_quantile: Callable[[float], float],
    dual_quantile: Callable[[float], float],
    opts: KinkOptions,
    share_floor: float = 0.01,
) -> float:
    """Point value of the switcher dependence function at ranks (u, v).

    Prices are tuned so the context-I CARA cutoff sits at the recovered
    u-quantile and the context-II loading cutoff at the recovered
    v-quantile, with orderings that reduce P[(1,1)] to
    alpha*u + beta*v + (switcher share)*C(u, v); the dependence value is
    then read off by subtraction.
    """
    switcher = 1.0 - alpha_hat - beta_hat
    if switcher < share_floor:
        raise DegenerateShare(
            f"switcher share estimate {switcher:.4f} below floor {share_floor}; dependence not recoverable"
        )
    level_v = cara_quantile(u)
    level_w = dual_quantile(v)
    try:
        x_i = invert_cutoff(ts, "eu_i", level_v, tol=opts.invert_tol)
        x_ii = invert_cutoff(ts, "dual_ii", level_w, tol=opts.invert_tol)
    except Unattainable as exc:
        raise Infeasible(f"rank pair ({u}, {v}) not reachable: {exc}") from exc
    if ts.eu_cut_ii(x_ii) - level_v <= opts.slack_min:
        raise Infeasible(f"context-II CARA cutoff not above the u-quantile at ranks ({u}, {v})")
    if ts.dual_cut_i(x_i) - level_w <= opts.slack_min:
        raise Infeasible(f"context-I loading cutoff not above the v-quantile at ranks ({u}, {v})")
    p = prob_fn(x_i, x_ii)
    return float((p - alpha_hat * u - beta_hat * v) / switcher)


# ---------------------------------------------------------------------------
# pipeline


def interior_grid(bound: float, n: int, margin_frac: float) -> np.ndarray:
    """Evenly spaced levels on (0, bound), inset by a relative margin."""
    if n < 2:
        raise ValueError("grid needs at least 2 points")
    if not 0.0 < margin_frac < 0.5:
        raise ValueError(f"margin fraction must sit in (0, 0.5), got {margin_frac}")
    return np.linspace(margin_frac * bound, (1.0 - margin_frac) * bound, n)


@dataclass(frozen=True)
class DesignPoint:
    """One probability probe the pipeline will request."""

    stage: str
    level: float
    side: str  # "right" / "left" / "" for the smooth construction
    arm: str  # "lo" / "hi"
    x_i: float
    x_ii: float


def evaluation_design(
    ts: ThresholdSystem,
    grid: Sequence[float],
    family: SideFamily,
    opts: OptsLike,
) -> list[DesignPoint]:
    """Enumerate every probe the gap sweep will make on this grid.

    Feasibility and stencil planning run exactly as in kink_gap, but no
    probability is evaluated, so the probe set can be published ahead of
    data collection. Infeasible levels contribute nothing.
    """
    stage = "cara_side" if family == "eu" else "dual_side"
    matcher = match_prices_matched if family == "eu" else match_prices_matched_dual
    out: list[DesignPoint] = []
    for level in grid:
        level = float(level)
        o = _opts_at(opts, level)
        slack_min = o.slack_min if family == "eu" else o.slack_min_other
        try:
            matched = matcher(ts, level, slack_min=slack_min, invert_tol=o.invert_tol)
            here = [
                DesignPoint(stage, level, side, arm, pair.x_i, pair.x_ii)
                for side, sgn in (("right", 1.0), ("left", -1.0))
                for arm, pair in zip(
                    ("lo", "hi"), _probe_plan(ts, matched, level + sgn * o.eps, o).pairs
                )
            ]
        except (Infeasible, StepTooLarge):
            continue
        out.extend(here)
    return out


def run_identification(
    sc: Scenario,
    *,
    prob_fn: ProbFn | None = None,
    cara_grid: Sequence[float] | None = None,
    dual_grid: Sequence[float] | None = None,
    opts_eu: OptsLike | None = None,
    opts_dual: OptsLike | None = None,
    min_coverage: float = 0.5,
    copula_grid_size: int = 9,
    share_floor: float = 0.01,
    stages: Sequence[str] = ("cara_side", "dual_side", "copula"),
    mapper: Callable | None = None,
) -> IdentificationResult:
    """Run the staged recovery and aggregate per-stage failures.

    Stage failures are recorded, not raised: a thin grid on one side should
    not void the other side's estimate. The dependence stage runs only when
    both side stages produced estimates, attention is full (otherwise only
    the products weight x attention-mass are identified, and the subtraction
    formula does not close), and the implied switcher share clears the floor.
    """
    ts = sc.ts
    if prob_fn is None:
        prob_fn = exact_prob_fn(sc)
    if opts_eu is None:
        opts_eu = KinkOptions.defaults_for(ts, "eu")
    if opts_dual is None:
        opts_dual = KinkOptions.defaults_for(ts, "dual")
    if cara_grid is None:
        cara_grid = interior_grid(ts.nu_bar, 51, 1e-3)
    if dual_grid is None:
        dual_grid = interior_grid(ts.omega_bar, 51, 1e-3)

    full = sc.consideration.both_both >= 1.0 - 1e-12
    res = IdentificationResult(full_attention=full, stage_errors={})

    if "cara_side" in stages:
        try:
            res.cara_side = recover_side(
                prob_fn, ts, cara_grid, "eu", opts_eu, min_coverage, mapper=mapper
            )
            res.alpha_times_O_hat = res.cara_side.share_hat
            if full:
                res.alpha_hat = res.cara_side.share_hat
        except InsufficientCoverage as exc:
            res.cara_side = exc.partial
            res.stage_errors["cara_side"] = str(exc)

    if "dual_side" in stages:
        try:
            res.dual_side = recover_side(
                prob_fn, ts, dual_grid, "dual", opts_dual, min_coverage, mapper=mapper
            )
            res.beta_times_O_hat = res.dual_side.share_hat
            if full:
                res.beta_hat = res.dual_side.share_hat
        except InsufficientCoverage as exc:
            res.dual_side = exc.partial
            res.stage_errors["dual_side"] = str(exc)

    if "copula" in stages:
        if res.alpha_hat is None or res.beta_hat is None:
            res.stage_errors["copula"] = (
                "skipped: needs full attention and both side estimates"
                if not full
                else "skipped: a side stage failed"
            )
        else:
            from .population import copula_cdf

            levels = np.arange(1, copula_grid_size + 1) / (copula_grid_size + 1.0)
            cells: list[CopulaCell] = []
            for u in levels:
                for v in levels:
                    c_true = copula_cdf(sc.mix.copula, float(u), float(v))
                    try:
                        c_hat = recover_copula_point(
                            prob_fn,
                            ts,
                            float(u),
                            float(v),
                            res.alpha_hat,
                            res.beta_hat,
                            res.cara_side.quantile,
                            res.dual_side.quantile,
                            _opts_at(opts_eu, 0.5 * ts.nu_bar),
                            share_floor=share_floor,
                        )
                        cells.append(CopulaCell(float(u), float(v), c_hat, c_true, True))
                    except DegenerateShare as exc:
                        res.stage_errors["copula"] = str(exc)
                        cells = []
                        break
                    except Infeasible as exc:
                        cells.append(
                            CopulaCell(float(u), float(v), float("nan"), c_true, False, str(exc))
                        )
                else:
                    continue
                break
            res.copula_cells = cells if cells else None

    return res
