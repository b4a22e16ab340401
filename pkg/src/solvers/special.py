# src/solvers/special.py

from typing import Union

import numpy as np
from scipy import integrate, special

from src.errors import ParameterError

ArrayLike = Union[float, np.ndarray]

SQRT2 = np.sqrt(2.0)


def q_function(x: ArrayLike) -> ArrayLike:
    """Standard normal tail Q(x) = erfc(x/√2)/2"""
    value = 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)
    return float(value) if np.ndim(x) == 0 else value


def g_closed_form(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """∫₀^∞ exp(−a s² − b s) ds = √(π/a)·exp(b²/4a)·Q(b/√(2a)).

    The product exp(b²/4a)·Q(·) is evaluated as erfcx(b/(2√a))/2 so it
    stays finite for small a.
    """
    aa = np.asarray(a, dtype=float)
    bb = np.asarray(b, dtype=float)
    if np.any(aa <= 0):
        raise ParameterError("a", "must be strictly positive")
    value = np.sqrt(np.pi / aa) * 0.5 * special.erfcx(bb / (2.0 * np.sqrt(aa)))
    return float(value) if value.ndim == 0 else value


def sinr_tail_integral(a: ArrayLike, b: float, alpha: float) -> ArrayLike:
    """∫₀^∞ exp(−a s^{α/2} − b s) ds.

    Closed form at α = 4, adaptive quadrature otherwise. Entries with
    a = 0 (zero SINR threshold) reduce to 1/b.
    """
    if not alpha > 2:
        raise ParameterError("alpha", f"alpha must exceed 2, got {alpha}")
    aa = np.asarray(a, dtype=float)
    if np.any(aa < 0):
        raise ParameterError("a", "must be nonnegative")
    if b <= 0:
        raise ParameterError("b", "must be strictly positive")

    out = np.full(aa.shape, 1.0 / b)
    live = aa > 0
    if np.any(live):
        if alpha == 4.0:
            out[live] = g_closed_form(aa[live], b)
        elif aa.ndim == 0:
            out = np.asarray(_tail_quad(float(aa), b, alpha))
        else:
            out[live] = _tail_quad_vec(aa[live], b, alpha)
    return float(out) if out.ndim == 0 else out


def _tail_quad(a: float, b: float, alpha: float) -> float:
    half = alpha / 2.0
    value, _ = integrate.quad(
        lambda s: np.exp(-a * s**half - b * s), 0.0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200
    )
    return value


def _tail_quad_vec(a: np.ndarray, b: float, alpha: float) -> np.ndarray:
    half = alpha / 2.0
    value, _ = integrate.quad_vec(
        lambda s: np.exp(-a * s**half - b * s), 0.0, np.inf, epsabs=1e-14, epsrel=1e-11, norm="max"
    )
    return value
