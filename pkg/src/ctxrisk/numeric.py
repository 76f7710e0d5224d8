"""Low-level numerical kernels: bracketed root finding, one-sided finite
differences, composite trapezoid sums, and reproducible uniform streams.

Everything in here is deterministic given its inputs; the random streams are
deterministic given their (seed, stream_id) key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np


class NumericError(Exception):
    """Base class for numerical-kernel failures."""


class NoSignChange(NumericError):
    """Bracket endpoints do not straddle a sign change."""


class NonFinite(NumericError):
    """A function evaluation returned NaN or infinity."""


class TooFewPoints(NumericError):
    """Quadrature needs at least two grid points."""


class NonMonotoneGrid(NumericError):
    """Quadrature grid abscissae must be strictly increasing."""


@dataclass(frozen=True)
class Bracket:
    """Closed interval [lo, hi] known to contain a root."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise NonFinite("bracket endpoints must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class DiffConfig:
    """Step size and direction for a finite-difference quotient."""

    step: float = 1e-6
    side: Literal["left", "right", "central"] = "central"

    def __post_init__(self):
        if not (np.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if self.side not in ("left", "right", "central"):
            raise ValueError(f"unknown side {self.side!r}")


def find_root(f: Callable[[float], float], bracket: Bracket, tol: float = 1e-12) -> float:
    """Locate a sign change of ``f`` inside ``bracket`` by bisection.

    Parameters
    ----------
    f : callable
        Scalar function, continuous on the bracket.
    bracket : Bracket
        Interval whose endpoint values have opposite (or zero) sign.
    tol : float
        Terminate once the bracket width is at or below this value.

    Returns
    -------
    float
        Midpoint of the final bracket. Deterministic: identical inputs
        always produce the identical sequence of midpoints.
    """
    lo, hi = bracket.lo, bracket.hi
    flo, fhi = f(lo), f(hi)
    for val, where in ((flo, lo), (fhi, hi)):
        if not np.isfinite(val):
            raise NonFinite(f"f({where}) = {val}")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChange(f"f has the same sign at both ends: f({lo})={flo}, f({hi})={fhi}")
    # 200 iterations caps the loop well past double-precision exhaustion.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid <= lo or mid >= hi:
            break
        fmid = f(mid)
        if not np.isfinite(fmid):
            raise NonFinite(f"f({mid}) = {fmid}")
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)


def bisect_monotone_vec(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    iterations: int = 64,
) -> np.ndarray:
    """Vectorized bisection for elementwise-monotone sign changes.

    ``f`` maps an array of abscissae to an array of residuals; each slot is
    assumed to bracket its own root with f(lo) >= 0 >= f(hi) or the reverse.
    Runs a fixed iteration count so the result is bitwise reproducible.
    64 halvings shrink any O(1) bracket far below 1e-12.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    sign_lo = np.sign(f(lo))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        go_right = np.sign(fm) == sign_lo
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def directional_diff(f: Callable[[float], float], x: float, cfg: DiffConfig) -> float:
    """Finite-difference derivative of ``f`` at ``x``.

    ``side="right"`` uses (f(x+h) - f(x))/h, ``side="left"`` uses
    (f(x) - f(x-h))/h, ``side="central"`` uses the symmetric quotient.
    One-sided quotients never evaluate ``f`` across the point, so they are
    safe up against a kink.
    """
    h = cfg.step
    if cfg.side == "right":
        num = f(x + h) - f(x)
    elif cfg.side == "left":
        num = f(x) - f(x - h)
    else:
        num = 0.5 * (f(x + h) - f(x - h))
        h = 0.5 * h  # symmetric quotient divides by 2h
    if not np.isfinite(num):
        raise NonFinite(f"finite-difference stencil at {x} hit a non-finite value")
    return num / (2.0 * h) if cfg.side == "central" else num / h


def trapezoid(values) -> float:
    """Composite trapezoid sum over (x, y) pairs with strictly increasing x."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of (x, y) pairs, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise TooFewPoints(f"need at least two points, got {arr.shape[0]}")
    x, y = arr[:, 0], arr[:, 1]
    dx = np.diff(x)
    if np.any(dx <= 0):
        k = int(np.argmax(dx <= 0))
        raise NonMonotoneGrid(f"grid not strictly increasing at index {k}: x[{k}]={x[k]}, x[{k + 1}]={x[k + 1]}")
    if not np.all(np.isfinite(y)):
        raise NonFinite("non-finite ordinate in quadrature input")
    return float(np.sum(0.5 * dx * (y[:-1] + y[1:])))


def cumulative_trapezoid(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Running trapezoid sums: out[k] = integral of y over x[0..k], out[0] = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(x)
    out[1:] = np.cumsum(0.5 * np.diff(x) * (y[:-1] + y[1:]))
    return out


_MIX_MULT = 0x9E3779B97F4A7C15  # 64-bit golden-ratio multiplier


def _mix64(a: int, b: int) -> int:
    """Cheap splitmix-style mixer for deriving substream ids."""
    z = (a * _MIX_MULT + b + 1) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    return z


class SeededStream:
    """Counter-based uniform stream keyed by (seed, stream_id).

    Built on the Philox generator, so distinct stream_id values give
    independent streams without any coordination, and a stream rebuilt from
    the same key replays the identical draw sequence from the start.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        for name, val in (("seed", seed), ("stream_id", stream_id)):
            if not isinstance(val, (int, np.integer)) or not 0 <= int(val) < 2**64:
                raise ValueError(f"{name} must be an integer in [0, 2**64), got {val!r}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def uniform(self, size=None):
        """Draws in [0, 1); scalar when size is None."""
        u = self.generator.uniform(0.0, 1.0, size=size)
        return float(u) if size is None else u

    def substream(self, k: int) -> "SeededStream":
        """Derive an independent child stream; same (parent, k) -> same child."""
        return SeededStream(self.seed, _mix64(self.stream_id, int(k)))

    def __repr__(self):
        return f"SeededStream(seed={self.seed}, stream_id={self.stream_id})"


def uniform01(stream: SeededStream) -> float:
    """Next uniform draw in [0, 1) from the stream."""
    return stream.uniform()
