"""Population primitives: scalar marginals on [0, bound], bivariate copulas,
mixture weights over the three agent types, and the nine-atom consideration
measure over per-context option sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Literal

import numpy as np
from scipy import stats

from .numeric import SeededStream

CopulaFamily = Literal["independence", "fgm", "clayton", "gaussian"]
MarginalFamily = Literal["uniform", "beta"]

# Consideration sets per context, encoded as strings: which options the agent
# actually looks at. "12" is full attention within the context.
OPTION_SETS = ("1", "2", "12")

#: Canonical atom order: (context-I set, context-II set).
ATOM_KEYS = (
    ("12", "12"),
    ("1", "12"),
    ("2", "12"),
    ("12", "1"),
    ("12", "2"),
    ("1", "1"),
    ("1", "2"),
    ("2", "1"),
    ("2", "2"),
)

_ATOM_FIELDS = (
    "both_both",
    "one_both",
    "two_both",
    "both_one",
    "both_two",
    "one_one",
    "one_two",
    "two_one",
    "two_two",
)


class OutOfSupport(Exception):
    """Evaluation point outside the distribution's support."""


class BadParameter(Exception):
    """Parameter outside the family's admissible range."""


class DegenerateShare(Exception):
    """Mixture weights leave no mass where some operation needs it."""


@dataclass(frozen=True)
class MarginalDist:
    """Continuous marginal on [0, bound]: uniform, or a scaled beta(a, b)."""

    family: MarginalFamily
    bound: float
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.family not in ("uniform", "beta"):
            raise BadParameter(f"unknown marginal family {self.family!r}")
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise BadParameter(f"bound must be positive, got {self.bound}")
        if self.family == "beta" and not (self.a > 0 and self.b > 0):
            raise BadParameter(f"beta shapes must be positive, got a={self.a}, b={self.b}")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.bound):
            raise OutOfSupport(f"point outside [0, {self.bound}]")
        return t

    def cdf(self, t):
        t = self._check(t)
        if self.family == "uniform":
            out = t / self.bound
        else:
            out = stats.beta.cdf(t / self.bound, self.a, self.b)
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, t):
        t = self._check(t)
        if self.family == "uniform":
            out = np.full_like(t, 1.0 / self.bound)
        else:
            out = stats.beta.pdf(t / self.bound, self.a, self.b) / self.bound
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise OutOfSupport("quantile level outside [0, 1]")
        if self.family == "uniform":
            out = q * self.bound
        else:
            out = stats.beta.ppf(q, self.a, self.b) * self.bound
        return float(out) if np.ndim(out) == 0 else out


def _as_unit(u, name):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise OutOfSupport(f"{name} outside [0, 1]")
    return u


@dataclass(frozen=True)
class Copula:
    """Bivariate copula: independence, FGM, Clayton, or Gaussian.

    theta ranges: FGM in [-1, 1], Clayton in (0, inf), Gaussian in (-1, 1).
    Independence ignores theta.
    """

    family: CopulaFamily
    theta: float = 0.0

    def __post_init__(self):
        f, t = self.family, self.theta
        if f == "independence":
            return
        if f == "fgm":
            if not -1.0 <= t <= 1.0:
                raise BadParameter(f"FGM needs theta in [-1, 1], got {t}")
        elif f == "clayton":
            if not t > 0.0:
                raise BadParameter(f"Clayton needs theta > 0, got {t}")
        elif f == "gaussian":
            if not -1.0 < t < 1.0:
                raise BadParameter(f"Gaussian needs theta in (-1, 1), got {t}")
        else:
            raise BadParameter(f"unknown copula family {f!r}")


# Gauss-Legendre rule reused for every Gaussian-copula evaluation. The
# normal-space integrand below is analytic with O(1) variation, so 128 nodes
# on an interval of length <= 17 are exact to well under 1e-13; truncating
# the lower tail at -8.5 discards less than 1e-17 of mass.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(128)
_GAUSS_TAIL = -8.5


def _gaussian_cdf(u, v, rho: float):
    # C(u, v) = integral over s <= Phi^-1(u) of phi(s) * Phi((Phi^-1(v) - rho s)/sqrt(1-rho^2)),
    # evaluated for all points at once: nodes broadcast against the flattened
    # grid, so a full lattice costs one vectorized pass instead of one
    # adaptive quadrature per cell.
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    out = np.empty(u.shape, dtype=float)

    interior = (u > 0.0) & (u < 1.0) & (v > 0.0) & (v < 1.0)
    out[(u <= 0.0) | (v <= 0.0)] = 0.0
    top_u = (u >= 1.0) & (v > 0.0)
    top_v = (v >= 1.0) & (u > 0.0)
    out[top_u] = v[top_u]
    out[top_v] = u[top_v]

    if np.any(interior):
        zu = stats.norm.ppf(u[interior])
        zv = stats.norm.ppf(v[interior])
        denom = np.sqrt(1.0 - rho * rho)
        half = 0.5 * (zu - _GAUSS_TAIL)  # (n,)
        s = _GAUSS_TAIL + half[None, :] * (_GL_NODES[:, None] + 1.0)  # (128, n)
        vals = stats.norm.pdf(s) * stats.norm.cdf((zv[None, :] - rho * s) / denom)
        integral = half * np.einsum("k,kn->n", _GL_WEIGHTS, vals)
        out[interior] = np.minimum(np.maximum(integral, 0.0), np.minimum(u[interior], v[interior]))
    return out


def copula_cdf(c: Copula, u, v):
    """C(u, v), elementwise over broadcastable arguments."""
    u = _as_unit(u, "u")
    v = _as_unit(v, "v")
    if c.family == "independence":
        out = u * v
    elif c.family == "fgm":
        out = u * v * (1.0 + c.theta * (1.0 - u) * (1.0 - v))
    elif c.family == "clayton":
        # The generator diverges at 0, but C -> 0 there; substitute a benign
        # value under the mask so boundary cells neither warn nor overflow.
        uu = np.asarray(u, dtype=float)
        vv = np.asarray(v, dtype=float)
        zero = (uu <= 0.0) | (vv <= 0.0)
        us = np.where(zero, 0.5, uu)
        vs = np.where(zero, 0.5, vv)
        s = us ** (-c.theta) + vs ** (-c.theta) - 1.0
        out = np.where(zero, 0.0, s ** (-1.0 / c.theta))
    else:
        out = _gaussian_cdf(u, v, c.theta)
    return float(out) if np.ndim(out) == 0 else out


def copula_du(c: Copula, u, v):
    """Conditional cdf of the second coordinate given the first: dC/du.

    Requires u in the open interval (0, 1); v may sit anywhere in [0, 1].
    """
    u = _as_unit(u, "u")
    v = _as_unit(v, "v")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise OutOfSupport("copula_du needs u strictly inside (0, 1)")
    if c.family == "independence":
        out = v * np.ones_like(np.asarray(u, dtype=float))
    elif c.family == "fgm":
        out = v * (1.0 + c.theta * (1.0 - 2.0 * u) * (1.0 - v))
    elif c.family == "clayton":
        vv = np.maximum(np.asarray(v, dtype=float), 1e-300)
        s = u ** (-c.theta) + vv ** (-c.theta) - 1.0
        out = np.where(np.asarray(v) <= 0.0, 0.0, u ** (-c.theta - 1.0) * s ** (-1.0 / c.theta - 1.0))
    else:
        denom = np.sqrt(1.0 - c.theta**2)
        zu = stats.norm.ppf(u)
        with np.errstate(divide="ignore"):
            zv = stats.norm.ppf(v)
        out = stats.norm.cdf((zv - c.theta * zu) / denom)
    return float(out) if np.ndim(out) == 0 else out


def copula_dv(c: Copula, u, v):
    """Conditional cdf of the first coordinate given the second: dC/dv.

    All four families here are exchangeable, so this is copula_du with the
    arguments swapped.
    """
    return copula_du(c, v, u)


def conditional_quantile(c: Copula, u, q):
    """Invert v -> copula_du(c, u, v) at probability level q (elementwise)."""
    u = _as_unit(u, "u")
    q = _as_unit(q, "q")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise OutOfSupport("conditional_quantile needs u strictly inside (0, 1)")
    if c.family == "independence":
        out = q * np.ones_like(np.asarray(u, dtype=float))
    elif c.family == "fgm":
        # Solve a v^2 - (1+a) v + q = 0 with a = theta (1 - 2u); the root
        # inside [0, 1] is the minus branch for either sign of a.
        a = c.theta * (1.0 - 2.0 * np.asarray(u, dtype=float))
        disc = np.sqrt((1.0 + a) ** 2 - 4.0 * a * q)
        with np.errstate(invalid="ignore", divide="ignore"):
            root = (1.0 + a - disc) / (2.0 * a)
        out = np.where(np.abs(a) < 1e-12, q, root)
    elif c.family == "clayton":
        qq = np.maximum(np.asarray(q, dtype=float), 1e-300)
        t = c.theta
        out = np.where(
            np.asarray(q) <= 0.0,
            0.0,
            ((qq ** (-t / (1.0 + t)) - 1.0) * np.asarray(u, float) ** (-t) + 1.0) ** (-1.0 / t),
        )
    else:
        zu = stats.norm.ppf(u)
        with np.errstate(divide="ignore"):
            zq = stats.norm.ppf(q)
        out = stats.norm.cdf(c.theta * zu + np.sqrt(1.0 - c.theta**2) * zq)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def sample_pair(c: Copula, f: MarginalDist, g: MarginalDist, stream: SeededStream, size=None):
    """Draw (first, second) with marginals f, g and dependence c.

    Conditional inversion: draw the first coordinate's rank, then invert the
    conditional cdf at a fresh uniform. Scalar draws when size is None.
    """
    n = 1 if size is None else int(size)
    u = stream.uniform(size=n)
    q = stream.uniform(size=n)
    # Ranks of exactly 0 or 1 would need one-sided limits; nudge inside.
    u = np.clip(u, 1e-15, 1.0 - 1e-15)
    v = conditional_quantile(c, u, q)
    first = f.quantile(u)
    second = g.quantile(v)
    if size is None:
        return float(first[0]), float(second[0])
    return first, second


@dataclass(frozen=True)
class MixtureSpec:
    """Type weights and ingredient distributions for the three-type mixture.

    alpha is the weight on agents who always use the CARA index, beta the
    weight on agents who always use the dual index; the remaining mass
    switches family with the context and carries the copula-coupled pair.
    """

    alpha: float
    beta: float
    f_dist: MarginalDist
    g_dist: MarginalDist
    copula: Copula

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise BadParameter(f"weights must lie in [0, 1], got alpha={self.alpha}, beta={self.beta}")
        if self.alpha + self.beta > 1.0 + 1e-12:
            raise BadParameter(f"alpha + beta = {self.alpha + self.beta} exceeds 1")

    @property
    def switcher_share(self) -> float:
        return max(0.0, 1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class ConsiderationMeasure:
    """Nine nonnegative atom masses over per-context consideration sets.

    Field naming is (context-I set)_(context-II set) with "one" = {1},
    "two" = {2}, "both" = {1, 2}. Masses must sum to one.
    """

    both_both: float = 1.0
    one_both: float = 0.0
    two_both: float = 0.0
    both_one: float = 0.0
    both_two: float = 0.0
    one_one: float = 0.0
    one_two: float = 0.0
    two_one: float = 0.0
    two_two: float = 0.0

    def masses(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in _ATOM_FIELDS], dtype=float)

    def atoms(self) -> Iterator[tuple[str, str, float]]:
        """Yield (context-I set, context-II set, mass) in canonical order."""
        for (set_i, set_ii), mass in zip(ATOM_KEYS, self.masses()):
            yield set_i, set_ii, float(mass)

    @classmethod
    def full_attention(cls) -> "ConsiderationMeasure":
        return cls()

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ConsiderationMeasure":
        """Build from a possibly partial mapping; unnamed atoms get mass zero.

        Zero-filling (rather than dataclass defaults) keeps a partial mapping
        meaning "exactly these atoms", so {"two_one": 1.0} is degenerate at
        that atom instead of silently stacking onto full attention.
        """
        unknown = set(mapping) - set(_ATOM_FIELDS)
        if unknown:
            raise BadParameter(f"unknown consideration atoms: {sorted(unknown)}")
        full = {name: 0.0 for name in _ATOM_FIELDS}
        full.update({k: float(v) for k, v in mapping.items()})
        return cls(**full)


def validate_consideration(m: ConsiderationMeasure, tol: float = 1e-12) -> list[str]:
    """Return violation messages (empty when the measure is a distribution)."""
    bad = []
    masses = m.masses()
    for name, val in zip(_ATOM_FIELDS, masses):
        if not np.isfinite(val) or val < 0.0:
            bad.append(f"atom {name} must be finite and nonnegative, got {val}")
    total = float(np.sum(masses))
    if abs(total - 1.0) > tol:
        bad.append(f"atom masses sum to {total!r}, expected 1 within {tol}")
    return bad
