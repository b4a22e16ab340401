# src/solvers/geometry.py

from typing import Any, Optional, Union

import numpy as np
from scipy import special, stats

from src.errors import ParameterError, ShapeError
from src.models.fields import Field, MeanField, PowerPolicy
from src.models.params import Grid, SystemParams
from src.models.results import InterferenceTrace

ArrayLike = Union[float, np.ndarray]


def _nonnegative(name: str, value: Any) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if np.any(arr < 0):
        raise ParameterError(name, "must be nonnegative")
    return arr


def _probability(name: str, value: Any) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise ParameterError(name, f"probability out of range [0, 1], got {value}")
    return arr


def _scalar_or_array(values: np.ndarray, like: Any) -> ArrayLike:
    return float(values) if np.ndim(like) == 0 else values


def nearest_distance_cdf(p: SystemParams, r0: ArrayLike) -> ArrayLike:
    """P[no BS within r0] complement: 1 − exp(−λ_s π r0²)"""
    r = _nonnegative("r0", r0)
    return _scalar_or_array(-np.expm1(-p.lambda_s * np.pi * r**2), r0)


def nearest_distance_pdf(p: SystemParams, r: ArrayLike) -> ArrayLike:
    rr = _nonnegative("r", r)
    return _scalar_or_array(
        2.0 * np.pi * p.lambda_s * rr * np.exp(-p.lambda_s * np.pi * rr**2), r
    )


def nearest_distance_mean(p: SystemParams) -> float:
    """Mean serving distance 1/(2√λ_s)"""
    return 0.5 / np.sqrt(p.lambda_s)


def cell_area_pdf(p: SystemParams, v: ArrayLike) -> ArrayLike:
    """Gamma law of a Voronoi cell area: shape c, rate λ_s·c"""
    vv = np.asarray(v, dtype=float)
    if np.any(vv <= 0):
        raise ParameterError("v", "cell area must be strictly positive")
    c = p.gamma_shape
    return _scalar_or_array(stats.gamma.pdf(vv, a=c, scale=1.0 / (p.lambda_s * c)), v)


def active_count_pmf(p: SystemParams, pi_a: float, k: ArrayLike) -> ArrayLike:
    """Probability that a cell holds k devices active on one channel.

    Negative-binomial form of the gamma–Poisson mixture, evaluated in log
    space so large k never overflows.
    """
    _probability("pi_a", pi_a)
    kk = np.asarray(k)
    if np.any(kk < 0) or np.any(np.asarray(kk, dtype=float) != np.floor(kk)):
        raise ParameterError("k", "count must be a nonnegative integer")
    kk = kk.astype(float)

    c = p.gamma_shape
    lambda_a = float(p.active_density(pi_a))
    rate = p.lambda_s * c
    log_pmf = (
        special.gammaln(kk + c)
        - special.gammaln(kk + 1.0)
        - special.gammaln(c)
        + special.xlogy(kk, lambda_a)
        + c * np.log(rate)
        - (kk + c) * np.log(lambda_a + rate)
    )
    return _scalar_or_array(np.exp(log_pmf), k)


def collision_free_prob(p: SystemParams, pi_a: float) -> float:
    """Probability that at most J devices share the channel in the cell"""
    ks = np.arange(p.j_mpr + 1)
    return float(min(1.0, np.sum(active_count_pmf(p, pi_a, ks))))


def interference_kernel(alpha: float, radius: Optional[float] = None) -> float:
    """∫₀^R min(1, r^−α) r dr, or its R → ∞ limit when radius is None"""
    if not alpha > 2:
        raise ParameterError("alpha", f"alpha must exceed 2, got {alpha}")
    if radius is None:
        return 0.5 + 1.0 / (alpha - 2.0)
    if radius <= 0:
        raise ParameterError("radius", f"must be strictly positive, got {radius}")
    if radius <= 1.0:
        return 0.5 * radius**2
    return 0.5 + (1.0 - radius ** (2.0 - alpha)) / (alpha - 2.0)


def interference_tail(alpha: float, radius: float, lambda_a: float, power: ArrayLike) -> ArrayLike:
    """Mean interference contributed by active devices beyond radius R ≥ 1"""
    if not alpha > 2:
        raise ParameterError("alpha", f"alpha must exceed 2, got {alpha}")
    if radius < 1.0:
        raise ParameterError("radius", "tail bound assumes radius of at least 1 km")
    pw = _nonnegative("power", power)
    return _scalar_or_array(
        2.0 * np.pi * lambda_a * pw * radius ** (2.0 - alpha) / (alpha - 2.0), power
    )


def mean_field_interference(
    p: SystemParams,
    pi_a: ArrayLike,
    p_mf: ArrayLike,
    radius: Optional[float] = None,
) -> ArrayLike:
    """Campbell mean of the interference seen at a typical receiver.

    With ``radius`` the active population is truncated to a disk, which
    is what a finite simulation measures.
    """
    _probability("pi_a", pi_a)
    pmf = _nonnegative("p_mf", p_mf)
    kernel = interference_kernel(p.alpha, radius)
    value = 2.0 * np.pi * p.active_density(pi_a) * kernel * pmf
    return _scalar_or_array(value, p_mf if np.ndim(p_mf) else pi_a)


def _values(f: Union[Field, np.ndarray]) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def mean_field_power(
    m: Union[MeanField, np.ndarray],
    policy: Union[PowerPolicy, np.ndarray],
    g: Grid,
) -> np.ndarray:
    """Population-average power Σ_i P_i^n m_i^n δE for every time index"""
    mv, pv = _values(m), _values(policy)
    if mv.shape != pv.shape:
        raise ShapeError(f"mean field {mv.shape} and policy {pv.shape} differ in shape")
    if mv.shape[-1] != g.n_energy + 1:
        raise ShapeError(f"fields have {mv.shape[-1]} energy points, grid has {g.n_energy + 1}")
    return (pv * mv).sum(axis=-1) * g.de


def interference_trace(
    p: SystemParams,
    pi_a: float,
    m: Union[MeanField, np.ndarray],
    policy: Union[PowerPolicy, np.ndarray],
    g: Grid,
    radius: Optional[float] = None,
) -> InterferenceTrace:
    p_mf = mean_field_power(m, policy, g)
    i_mf = mean_field_interference(p, pi_a, p_mf, radius=radius)
    return InterferenceTrace(i_mf=np.asarray(i_mf), p_mf=p_mf)
