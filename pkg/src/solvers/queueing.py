# src/solvers/queueing.py

from typing import Optional, Union

import numpy as np
import structlog

from src.errors import DegenerateChainError, InfiniteServiceError, ParameterError
from src.models.fields import Field, MeanField, PowerPolicy
from src.models.params import FixedPointOptions, Grid, SystemParams
from src.models.results import (
    FixedPointResult,
    InterferenceTrace,
    MarkovModel,
    QueueMetrics,
    SteadyState,
)
from src.solvers.geometry import collision_free_prob, mean_field_interference, mean_field_power
from src.solvers.special import g_closed_form, q_function, sinr_tail_integral

__all__ = [
    "transition_matrix",
    "steady_state",
    "q_function",
    "g_closed_form",
    "sinr_tail_integral",
    "p_theta",
    "success_probability",
    "active_probability",
    "fixed_point_ps_pia",
    "throughput",
    "is_saturated",
    "avg_transmissions",
    "transmissions_pmf",
    "avg_queue",
    "avg_delay",
    "queue_metrics",
]

logger = structlog.get_logger()


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(name, f"probability out of range [0, 1], got {value}")


def transition_matrix(p_a: float, p_b: float, p_s: float, M: int) -> MarkovModel:
    """Per-frame transition matrix of a device queue holding 0..M packets"""
    for name, value in (("p_a", p_a), ("p_b", p_b), ("p_s", p_s)):
        _check_probability(name, value)
    if int(M) != M or M < 1:
        raise ParameterError("M", f"must be a positive integer, got {M}")
    M = int(M)

    served = (1.0 - p_b) * p_s
    down = (1.0 - p_a) * served
    up = p_a * (1.0 - p_b) * (1.0 - p_s) + p_a * p_b
    stay = (1.0 - p_a) * p_b + (1.0 - p_a) * (1.0 - p_b) * (1.0 - p_s) + p_a * served

    K = np.zeros((M + 1, M + 1))
    K[0, 0] = 1.0 - p_a
    K[0, 1] = p_a
    for j in range(1, M):
        K[j, j] = stay
        K[j, j + 1] = up
    for j in range(1, M + 1):
        K[j, j - 1] = down
    K[M, M] = 1.0 - down
    return MarkovModel(matrix=K, p_a=p_a, p_b=p_b, p_s=p_s, queue_size=M)


def steady_state(model: MarkovModel) -> SteadyState:
    """Birth–death product solution of πK = π.

    Raises:
        DegenerateChainError: when no state can drain, (1−p_a)(1−p_b)p_s = 0
    """
    K = model.matrix
    down = np.diag(K, k=-1)
    if np.any(down <= 0):
        raise DegenerateChainError(
            f"chain cannot drain: (1-p_a)(1-p_b)p_s = {model.down:.3g}, "
            f"mass drifts to state M = {model.queue_size}"
        )
    up = np.diag(K, k=1)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(up) - np.log(down)
    log_w = np.concatenate([[0.0], np.cumsum(log_ratio)])
    log_w -= log_w.max()
    w = np.exp(log_w)
    pi = w / w.sum()
    return SteadyState(pi=pi, pi_a=float(1.0 - pi[0]))


def active_probability(p: SystemParams, p_s: float) -> float:
    """π_a of the device queue for a given per-attempt success probability.

    A chain that cannot drain (p_s = 0 with arrivals) is pinned at the
    full state, so every device is active.
    """
    model = transition_matrix(p.p_a, p.p_b, p_s, p.queue_size)
    try:
        return steady_state(model).pi_a
    except DegenerateChainError:
        if p.p_a == 0:
            return 0.0
        logger.debug("queueing.chain.degenerate", p_s=p_s, p_a=p.p_a)
        return 1.0


def _values(f: Union[Field, np.ndarray]) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f, dtype=float)


def p_theta(
    p: SystemParams,
    policy: Union[PowerPolicy, np.ndarray],
    m: Union[MeanField, np.ndarray],
    i_mf: np.ndarray,
    g: Grid,
) -> float:
    """SINR-threshold component of the success probability.

    Time-averaged over the frame with the solver's Riemann rule (left
    point in t, cell values in e). Cells with zero power cannot transmit
    and contribute nothing.
    """
    P = _values(policy)[:-1]
    mv = _values(m)[:-1]
    i_mf = np.asarray(i_mf, dtype=float)[:-1]

    b = np.pi * p.lambda_s
    live = P > 0
    if not np.any(live):
        return 0.0
    noise = np.broadcast_to((p.sigma0 + i_mf)[:, None], P.shape)
    a = p.theta * noise[live] / P[live]
    tail = sinr_tail_integral(a, b, p.alpha)
    total = np.sum(tail * mv[live]) * g.de * g.dt
    return float(min(1.0, b / g.t_frame * total))


def success_probability(
    p: SystemParams,
    policy: Union[PowerPolicy, np.ndarray],
    m: Union[MeanField, np.ndarray],
    interference: InterferenceTrace,
    pi_a: float,
    g: Grid,
) -> float:
    """Per-attempt success: no MPR overflow and SINR above θ"""
    return collision_free_prob(p, pi_a) * p_theta(p, policy, m, interference.i_mf, g)


def fixed_point_ps_pia(
    p: SystemParams,
    policy: Union[PowerPolicy, np.ndarray],
    m: Union[MeanField, np.ndarray],
    g: Grid,
    opts: Optional[FixedPointOptions] = None,
    radius: Optional[float] = None,
) -> FixedPointResult:
    """Solve the coupled success-probability / activity equations.

    Each pass maps π_a to the interference trace and success probability,
    then back to the queue's activity; π_a is relaxed with the damping
    factor. Stops when |Δp_s| + |Δπ_a| falls below ``opts.tol``.
    """
    opts = opts or FixedPointOptions()
    p_mf = mean_field_power(m, policy, g)

    def evaluate(pi_a: float):
        i_mf = mean_field_interference(p, pi_a, p_mf, radius=radius)
        trace = InterferenceTrace(i_mf=i_mf, p_mf=p_mf)
        return success_probability(p, policy, m, trace, pi_a, g), trace

    p_s = opts.p_s_init
    pi_a = active_probability(p, p_s)
    history = []
    for iteration in range(1, opts.max_iters + 1):
        p_s_new, trace = evaluate(pi_a)
        pi_a_new = active_probability(p, p_s_new)
        residual = abs(p_s_new - p_s) + abs(pi_a_new - pi_a)
        history.append(residual)
        logger.debug(
            "queueing.fixed_point.iteration",
            iteration=iteration,
            p_s=p_s_new,
            pi_a=pi_a_new,
            residual=residual,
        )
        if residual < opts.tol:
            logger.debug("queueing.fixed_point.converged", iterations=iteration, p_s=p_s_new, pi_a=pi_a_new)
            i_mf = mean_field_interference(p, pi_a_new, p_mf, radius=radius)
            return FixedPointResult(
                p_s=p_s_new,
                pi_a=pi_a_new,
                interference=InterferenceTrace(i_mf=i_mf, p_mf=p_mf),
                iterations=iteration,
                converged=True,
                history=history,
            )
        p_s = p_s_new
        pi_a = (1.0 - opts.damping) * pi_a + opts.damping * pi_a_new

    logger.warning("queueing.fixed_point.not_converged", iterations=opts.max_iters, residual=history[-1])
    p_s_last, trace = evaluate(pi_a)
    return FixedPointResult(
        p_s=p_s_last,
        pi_a=pi_a,
        interference=trace,
        iterations=opts.max_iters,
        converged=False,
        history=history,
    )


def throughput(p_b: float, p_s: float) -> float:
    """Delivered packets per frame for a backlogged device"""
    _check_probability("p_b", p_b)
    _check_probability("p_s", p_s)
    return (1.0 - p_b) * p_s


def is_saturated(p_a: float, T_h: float) -> bool:
    """Arrivals outpace service, so queues pile up toward M"""
    return p_a > T_h


def avg_transmissions(T_h: float) -> float:
    """Mean transmissions per packet of the geometric service law"""
    if T_h <= 0:
        raise InfiniteServiceError("throughput is zero, a packet is never delivered")
    if T_h > 1:
        raise ParameterError("T_h", f"throughput cannot exceed 1, got {T_h}")
    return 1.0 / T_h


def transmissions_pmf(k: Union[int, np.ndarray], T_h: float) -> Union[float, np.ndarray]:
    """P[N_t = k] = (1 − T_h)^{k−1} T_h for k ≥ 1"""
    avg_transmissions(T_h)
    kk = np.asarray(k)
    value = np.where(kk >= 1, (1.0 - T_h) ** np.maximum(kk - 1, 0) * T_h, 0.0)
    return float(value) if value.ndim == 0 else value


def avg_queue(ss: SteadyState) -> float:
    k = np.arange(len(ss.pi))
    return float(np.dot(k, ss.pi))


def avg_delay(ss: SteadyState, T_h: float) -> float:
    """Frames a packet spends queued plus in service: (Q + 1)/T_h"""
    n_t = avg_transmissions(T_h)
    return avg_queue(ss) * n_t + n_t


def queue_metrics(p: SystemParams, p_s: float, ss: Optional[SteadyState] = None) -> QueueMetrics:
    """Throughput, service, backlog and delay at a fixed success probability.

    Delay is NaN when no packets arrive and infinite when nothing is
    ever delivered.
    """
    if ss is None:
        ss = _steady_state_or_full(p, p_s)
    T_h = throughput(p.p_b, p_s)
    q = avg_queue(ss)
    if T_h <= 0:
        n_t, delay = float("inf"), float("inf")
    else:
        n_t = avg_transmissions(T_h)
        delay = avg_delay(ss, T_h) if p.p_a > 0 else float("nan")
    return QueueMetrics(
        throughput=T_h,
        avg_transmissions=n_t,
        avg_queue=q,
        avg_delay=delay,
        saturated=is_saturated(p.p_a, T_h),
    )


def _steady_state_or_full(p: SystemParams, p_s: float) -> SteadyState:
    try:
        return steady_state(transition_matrix(p.p_a, p.p_b, p_s, p.queue_size))
    except DegenerateChainError:
        pi = np.zeros(p.queue_size + 1)
        pi[0 if p.p_a == 0 else -1] = 1.0
        return SteadyState(pi=pi, pi_a=float(1.0 - pi[0]))
