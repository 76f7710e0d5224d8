"""Forward choice model: exact bundle probabilities and draw-level sampling.

A scenario is two contexts, each offering options {1, 2} at a price index.
Agents choose within each context separately (no cross-context trade-off),
so an agent's pair of choices is fully determined by which cutoffs its
indices clear and which options it considers. Types:

- "eu"     agents use the CARA index in both contexts (one draw from F);
- "dual"   agents use the loading index in both contexts (one draw from G);
- "switch" agents use the CARA index in context I and the loading index in
           context II, the pair drawn jointly from the copula.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numeric import SeededStream
from .population import (
    ATOM_KEYS,
    ConsiderationMeasure,
    MixtureSpec,
    copula_cdf,
    conditional_quantile,
    validate_consideration,
)
from .preferences import PricePair, ThresholdSystem

TYPE_CODES = ("eu", "dual", "switch")

#: Canonical bundle order used by every 4-vector in this module.
BUNDLE_ORDER = ((1, 1), (1, 2), (2, 1), (2, 2))


@dataclass(frozen=True)
class Bundle:
    """One option chosen in each context."""

    opt_i: int
    opt_ii: int

    def __post_init__(self):
        if self.opt_i not in (1, 2) or self.opt_ii not in (1, 2):
            raise ValueError(f"options must be 1 or 2, got ({self.opt_i}, {self.opt_ii})")


@dataclass(frozen=True)
class BundleDistribution:
    """Probabilities of the four bundles, in BUNDLE_ORDER."""

    p11: float
    p12: float
    p21: float
    p22: float

    def __post_init__(self):
        vec = self.as_array()
        if np.any(vec < -1e-12):
            raise ValueError(f"negative bundle probability: {vec}")
        if abs(float(vec.sum()) - 1.0) > 1e-12:
            raise ValueError(f"bundle probabilities sum to {vec.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p11, self.p12, self.p21, self.p22], dtype=float)

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(zip(BUNDLE_ORDER, self.as_array()))


@dataclass(frozen=True)
class Scenario:
    """Everything the forward model needs: cutoff system, population, prices."""

    ts: ThresholdSystem
    mix: MixtureSpec
    consideration: ConsiderationMeasure
    prices: PricePair

    def validate(self) -> list[str]:
        bad = []
        if not self.ts.prices_admissible(self.prices):
            bad.append(
                f"prices ({self.prices.x_i}, {self.prices.x_ii}) outside "
                f"[{self.ts.x_min}, {self.ts.x_max}]"
            )
        bad.extend(validate_consideration(self.consideration))
        if self.mix.f_dist.bound != self.ts.nu_bar:
            bad.append(
                f"CARA marginal bound {self.mix.f_dist.bound} != index support bound {self.ts.nu_bar}"
            )
        if self.mix.g_dist.bound != self.ts.omega_bar:
            bad.append(
                f"loading marginal bound {self.mix.g_dist.bound} != index support bound {self.ts.omega_bar}"
            )
        return bad


def _marginal_probs(sc: Scenario, prices: PricePair):
    """Per-type option-1 probabilities in each context, plus joint pieces.

    Returns a dict keyed by type code with (pick1_ctx_i, pick1_ctx_ii,
    p11_when_fully_attentive).
    """
    ts, mix = sc.ts, sc.mix
    cut_eu_i, cut_eu_ii, cut_dual_i, cut_dual_ii = ts.all_cuts(prices)
    F, G = mix.f_dist, mix.g_dist

    fi, fii = F.cdf(cut_eu_i), F.cdf(cut_eu_ii)
    gi, gii = G.cdf(cut_dual_i), G.cdf(cut_dual_ii)

    return {
        "eu": (fi, fii, F.cdf(min(cut_eu_i, cut_eu_ii))),
        "dual": (gi, gii, G.cdf(min(cut_dual_i, cut_dual_ii))),
        "switch": (fi, gii, copula_cdf(mix.copula, fi, gii)),
    }


def _type_bundle_vec(pick1_i: float, pick1_ii: float, joint11: float, set_i: str, set_ii: str) -> np.ndarray:
    """Bundle 4-vector for one type under one consideration atom.

    ``joint11`` is the joint probability of clearing both cutoffs when both
    contexts are fully attended; forced contexts collapse to marginals.
    """
    if set_i == "12" and set_ii == "12":
        p11 = joint11
        return np.array(
            [p11, pick1_i - p11, pick1_ii - p11, 1.0 - pick1_i - pick1_ii + p11]
        )
    out = np.zeros(4)
    if set_i == "12":  # context II forced to int(set_ii)
        q = int(set_ii)
        out[BUNDLE_ORDER.index((1, q))] = pick1_i
        out[BUNDLE_ORDER.index((2, q))] = 1.0 - pick1_i
    elif set_ii == "12":  # context I forced
        ell = int(set_i)
        out[BUNDLE_ORDER.index((ell, 1))] = pick1_ii
        out[BUNDLE_ORDER.index((ell, 2))] = 1.0 - pick1_ii
    else:  # both forced
        out[BUNDLE_ORDER.index((int(set_i), int(set_ii)))] = 1.0
    return out


def _mixture_bundle_vec(sc: Scenario, prices: PricePair) -> np.ndarray:
    """Exact bundle 4-vector: types x consideration atoms, canonical order."""
    per_type = _marginal_probs(sc, prices)
    weights = (sc.mix.alpha, sc.mix.beta, sc.mix.switcher_share)
    total = np.zeros(4)
    for code, weight in zip(TYPE_CODES, weights):
        if weight == 0.0:
            continue
        pick1_i, pick1_ii, joint11 = per_type[code]
        acc = np.zeros(4)
        for set_i, set_ii, mass in sc.consideration.atoms():
            if mass == 0.0:
                continue
            acc += mass * _type_bundle_vec(pick1_i, pick1_ii, joint11, set_i, set_ii)
        total += weight * acc
    return total


def prob_11_two_type(ts: ThresholdSystem, alpha: float, f_dist, g_dist, prices: PricePair) -> float:
    """P[bundle (1,1)] in the two-type model (no context switchers).

    Each consistent type picks option 1 in both contexts exactly when its
    single draw clears the smaller of its two cutoffs.
    """
    cut_eu_i, cut_eu_ii, cut_dual_i, cut_dual_ii = ts.all_cuts(prices)
    return float(
        alpha * f_dist.cdf(min(cut_eu_i, cut_eu_ii))
        + (1.0 - alpha) * g_dist.cdf(min(cut_dual_i, cut_dual_ii))
    )


def prob_11_three_type(ts: ThresholdSystem, mix: MixtureSpec, prices: PricePair) -> float:
    """P[bundle (1,1)] with switchers, everyone fully attentive.

    The switcher term couples the context-I CARA cutoff with the context-II
    loading cutoff through the copula; the consistent types contribute
    through the smaller of their own two cutoffs.
    """
    cut_eu_i, cut_eu_ii, cut_dual_i, cut_dual_ii = ts.all_cuts(prices)
    F, G, C = mix.f_dist, mix.g_dist, mix.copula
    return float(
        mix.alpha * F.cdf(min(cut_eu_i, cut_eu_ii))
        + mix.beta * G.cdf(min(cut_dual_i, cut_dual_ii))
        + mix.switcher_share * copula_cdf(C, F.cdf(cut_eu_i), G.cdf(cut_dual_ii))
    )


def prob_11_limited(sc: Scenario) -> float:
    """P[bundle (1,1)] under the scenario's consideration measure.

    Atoms that exclude option 1 in either context contribute nothing; atoms
    that force option 1 in one context contribute that type's marginal
    probability in the other context.
    """
    return float(_mixture_bundle_vec(sc, sc.prices)[0])


def bundle_distribution(sc: Scenario) -> BundleDistribution:
    """Exact distribution over all four bundles under the scenario."""
    vec = _mixture_bundle_vec(sc, sc.prices)
    return BundleDistribution(*[float(p) for p in vec])


def region_classify(ts: ThresholdSystem, prices: PricePair, nu: float, omega: float, agent_type: str) -> Bundle:
    """Bundle chosen by a fully attentive agent with the given indices.

    ``nu`` is read by types "eu" (both contexts) and "switch" (context I);
    ``omega`` by "dual" (both contexts) and "switch" (context II). Exact
    indifference resolves to option 1.
    """
    if agent_type not in TYPE_CODES:
        raise ValueError(f"agent_type must be one of {TYPE_CODES}, got {agent_type!r}")
    cut_eu_i, cut_eu_ii, cut_dual_i, cut_dual_ii = ts.all_cuts(prices)
    if agent_type == "eu":
        first, second = nu <= cut_eu_i, nu <= cut_eu_ii
    elif agent_type == "dual":
        first, second = omega <= cut_dual_i, omega <= cut_dual_ii
    else:
        first, second = nu <= cut_eu_i, omega <= cut_dual_ii
    return Bundle(1 if first else 2, 1 if second else 2)


@dataclass
class ChoiceDraws:
    """Vectorized draw-level output; arrays share one index per agent."""

    type_code: np.ndarray  # strings from TYPE_CODES
    nu: np.ndarray  # NaN where the agent never reads the CARA index
    omega: np.ndarray  # NaN where the agent never reads the loading index
    consider_i: np.ndarray  # option-set strings "1" / "2" / "12"
    consider_ii: np.ndarray
    choice_i: np.ndarray  # chosen option, 1 or 2
    choice_ii: np.ndarray
    x_i: np.ndarray = field(default=None)
    x_ii: np.ndarray = field(default=None)


def draw_choices(
    ts: ThresholdSystem,
    mix: MixtureSpec,
    consideration: ConsiderationMeasure,
    x_i,
    x_ii,
    n: int,
    stream: SeededStream,
) -> ChoiceDraws:
    """Simulate n agents at prices x_i, x_ii (scalars or length-n arrays).

    The stream layout is fixed at four uniforms per agent (type, attention
    atom, primary rank, conditional rank), so draws are reproducible and
    independent of which branches fire.
    """
    # Cutoffs before broadcasting: a scalar price costs one bisection, not n.
    cut_eu_i = np.broadcast_to(ts.eu_cut_i(x_i), (n,))
    cut_eu_ii = np.broadcast_to(ts.eu_cut_ii(x_ii), (n,))
    cut_dual_i = np.broadcast_to(ts.dual_cut_i(x_i), (n,))
    cut_dual_ii = np.broadcast_to(ts.dual_cut_ii(x_ii), (n,))
    x_i = np.broadcast_to(np.asarray(x_i, dtype=float), (n,))
    x_ii = np.broadcast_to(np.asarray(x_ii, dtype=float), (n,))

    u_type = stream.uniform(size=n)
    u_atom = stream.uniform(size=n)
    u_first = stream.uniform(size=n)
    u_second = stream.uniform(size=n)

    t = np.full(n, 2, dtype=np.int8)
    t[u_type < mix.alpha + mix.beta] = 1
    t[u_type < mix.alpha] = 0

    atom_edges = np.cumsum(consideration.masses())
    atom_idx = np.searchsorted(atom_edges, u_atom, side="right")
    atom_idx = np.minimum(atom_idx, len(ATOM_KEYS) - 1)
    sets_i = np.array([k[0] for k in ATOM_KEYS])[atom_idx]
    sets_ii = np.array([k[1] for k in ATOM_KEYS])[atom_idx]

    nu = np.full(n, np.nan)
    omega = np.full(n, np.nan)
    is_eu, is_dual, is_switch = t == 0, t == 1, t == 2
    if np.any(is_eu):
        nu[is_eu] = mix.f_dist.quantile(u_first[is_eu])
    if np.any(is_dual):
        omega[is_dual] = mix.g_dist.quantile(u_first[is_dual])
    if np.any(is_switch):
        u = np.clip(u_first[is_switch], 1e-15, 1.0 - 1e-15)
        nu[is_switch] = mix.f_dist.quantile(u)
        rank2 = conditional_quantile(mix.copula, u, u_second[is_switch])
        omega[is_switch] = mix.g_dist.quantile(rank2)

    # Attentive choices: context I reads nu except for dual types; context II
    # reads nu only for eu types. Ties go to option 1.
    att_i = np.where(is_dual, omega <= cut_dual_i, nu <= cut_eu_i)
    att_ii = np.where(is_eu, nu <= cut_eu_ii, omega <= cut_dual_ii)
    choice_i = np.where(sets_i == "1", 1, np.where(sets_i == "2", 2, np.where(att_i, 1, 2)))
    choice_ii = np.where(sets_ii == "1", 1, np.where(sets_ii == "2", 2, np.where(att_ii, 1, 2)))

    return ChoiceDraws(
        type_code=np.array(TYPE_CODES)[t],
        nu=nu,
        omega=omega,
        consider_i=sets_i,
        consider_ii=sets_ii,
        choice_i=choice_i.astype(np.int8),
        choice_ii=choice_ii.astype(np.int8),
        x_i=x_i,
        x_ii=x_ii,
    )


def sample_choice(sc: Scenario, stream: SeededStream) -> Bundle:
    """One simulated bundle choice under the scenario."""
    d = draw_choices(sc.ts, sc.mix, sc.consideration, sc.prices.x_i, sc.prices.x_ii, 1, stream)
    return Bundle(int(d.choice_i[0]), int(d.choice_ii[0]))


def sample_bundle_counts(sc: Scenario, n: int, stream: SeededStream) -> dict[tuple[int, int], int]:
    """Histogram of n simulated bundle choices at the scenario's prices."""
    d = draw_choices(sc.ts, sc.mix, sc.consideration, sc.prices.x_i, sc.prices.x_ii, n, stream)
    out = {}
    for bundle in BUNDLE_ORDER:
        out[bundle] = int(np.sum((d.choice_i == bundle[0]) & (d.choice_ii == bundle[1])))
    return out
