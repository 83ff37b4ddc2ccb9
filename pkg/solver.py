"""Penalized estimator (1/2ν(𝒵))‖Y − BΦ(ϑ)‖²_{L_T} + κ‖B‖_{ℓ1,L^p(ν)} for p ∈ {1, 2}.

Greedy insertion at the arg max of the dual statistic, accelerated proximal gradient
on B for fixed ϑ, joint local refinement of (B, ϑ), pruning and merging.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from certificates import op_norm_inf
from kernel_geometry import DEFAULT_GRID_STEP, model_for, sup_correlation
from measure_model import DiscreteMeasure, MixtureParams, SignalSet, conjugate, mixed_norm
from utils_offgrid import PreconditionError, get_logger, rows_to_df

logger = get_logger("solver")

Signals = Union[SignalSet, np.ndarray]


@dataclass(frozen=True)
class SolverConfig:
    kappa: float
    p: int = 2
    K_max: int = 10
    insertion_grid_step: float = DEFAULT_GRID_STEP
    max_outer_iters: int = 50
    max_inner_iters: int = 2000
    tol_obj: float = 1e-12
    tol_dual: float = 1e-3
    refine: bool = True

    def __post_init__(self):
        if not self.kappa > 0:
            raise PreconditionError(f"κ moet > 0 zijn, kreeg {self.kappa!r}")
        if self.p not in (1, 2):
            raise PreconditionError(f"De solver ondersteunt alleen p ∈ {{1, 2}}, kreeg {self.p!r}")
        if self.K_max < 1:
            raise PreconditionError(f"K_max moet >= 1 zijn, kreeg {self.K_max!r}")
        if self.insertion_grid_step <= 0 or self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise PreconditionError("Grid-stap en iteratielimieten moeten positief zijn")


@dataclass(frozen=True)
class TraceEvent:
    iter: int
    objective: float
    event: str
    dual_sup: float


@dataclass
class SolveTrace:
    objective: List[float] = field(default_factory=list)
    events: List[TraceEvent] = field(default_factory=list)
    final_dual_sup: float = math.nan
    converged: bool = False
    warning: Optional[str] = None

    def record(self, it: int, obj: float, event: str, dual: float = math.nan) -> None:
        self.events.append(TraceEvent(it, obj, event, dual))

    def to_frame(self) -> pd.DataFrame:
        return rows_to_df([
            {"iter": e.iter, "objective": e.objective, "event": e.event, "dual_sup": e.dual_sup}
            for e in self.events
        ])


def _signals(Y: Signals) -> np.ndarray:
    return np.asarray(Y.data if isinstance(Y, SignalSet) else Y, dtype=float)


def _features(dictionary, theta: np.ndarray) -> np.ndarray:
    if theta.size == 0:
        return np.zeros((0, dictionary.T))
    return dictionary.normalized(theta)


def _fidelity(Yd: np.ndarray, B: np.ndarray, Phi: np.ndarray, measure: DiscreteMeasure) -> float:
    R = Yd - B @ Phi
    return 0.5 * float(np.dot(measure.weights, np.sum(R * R, axis=1))) / measure.mass


def objective(
    Y: Signals, B: np.ndarray, theta, dictionary, measure: DiscreteMeasure, kappa: float, p: float
) -> float:
    Yd = _signals(Y)
    B = np.asarray(B, dtype=float).reshape(measure.n, -1)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if B.shape[1] != th.size or Yd.shape[0] != measure.n:
        raise PreconditionError(f"Vormen passen niet: Y {Yd.shape}, B {B.shape}, ϑ {th.shape}")
    Phi = _features(dictionary, th)
    return _fidelity(Yd, B, Phi, measure) + kappa * mixed_norm(B, measure, p)


def dual_sup(
    residual: Signals, dictionary, measure: DiscreteMeasure, q: float, grid_step: float = DEFAULT_GRID_STEP
) -> Tuple[float, float]:
    """sup_θ ‖⟨R(·), φ(θ)⟩‖_{L^q(ν)} en de arg max."""
    return sup_correlation(model_for(dictionary), _signals(residual), measure, q, 0, grid_step)


def group_prox_step(
    B: np.ndarray,
    gradient: np.ndarray,
    step: float,
    kappa_nu: float,
    p: int,
    measure: Optional[DiscreteMeasure] = None,
) -> np.ndarray:
    """Prox van κ‖·‖_{ℓ1,L^p(ν)} in de a-gewogen metriek, drempel step·κν."""
    if p not in (1, 2):
        raise PreconditionError(f"p moet 1 of 2 zijn, kreeg {p!r}")
    if not step > 0:
        raise PreconditionError(f"step moet > 0 zijn, kreeg {step!r}")
    V = np.asarray(B, dtype=float) - step * np.asarray(gradient, dtype=float)
    measure = measure or DiscreteMeasure.uniform(V.shape[0])
    thr = step * kappa_nu
    if p == 2:
        norms = measure.lp_norm(V, 2)
        factor = np.where(norms > thr, 1.0 - thr / np.where(norms > 0, norms, 1.0), 0.0)
        out = V * factor[None, :]
    else:
        out = np.sign(V) * np.maximum(np.abs(V) - thr, 0.0)
    out[~measure.positive] = 0.0
    return out


class _WeightProblem:
    """Convex deelprobleem in B voor vaste ϑ; gradiënt in de metriek Σ_z (a_z/ν)⟨·,·⟩."""

    def __init__(self, Yd: np.ndarray, Phi: np.ndarray, measure: DiscreteMeasure, kappa: float, p: int):
        self.Yd, self.Phi, self.measure = Yd, Phi, measure
        self.kappa, self.p = kappa, p
        self.q = conjugate(p)
        self.w = measure.weights / measure.mass
        self.gram = Phi @ Phi.T
        self.kappa_nu = kappa * measure.mass

    def residual(self, B: np.ndarray) -> np.ndarray:
        return self.Yd - B @ self.Phi

    def fidelity(self, B: np.ndarray) -> float:
        R = self.residual(B)
        return 0.5 * float(np.dot(self.w, np.sum(R * R, axis=1)))

    def total(self, B: np.ndarray) -> float:
        return self.fidelity(B) + self.kappa * mixed_norm(B, self.measure, self.p)

    def grad(self, B: np.ndarray) -> np.ndarray:
        return -self.residual(B) @ self.Phi.T

    def inner(self, X: np.ndarray, Y: np.ndarray) -> float:
        return float(np.dot(self.w, np.sum(X * Y, axis=1)))

    def kkt_gap(self, B: np.ndarray) -> float:
        """Relatieve afwijking van ‖c_k‖_{L^q} = κν (actief) en ‖c_k‖_{L^q} ≤ κν (inactief)."""
        if B.shape[1] == 0:
            return 0.0
        cq = self.measure.lp_norm(self.residual(B) @ self.Phi.T, self.q)
        active = np.any(B != 0, axis=0)
        gap = np.where(active, np.abs(cq - self.kappa_nu), np.maximum(cq - self.kappa_nu, 0.0))
        return float(np.max(gap)) / self.kappa_nu


def _accelerated_prox(prob: _WeightProblem, B0: np.ndarray, config: SolverConfig, max_iters: int) -> Tuple[np.ndarray, int]:
    """Monotone FISTA met backtracking; start-Lipschitz uit ‖Γ^[0,0]‖_{op,ℓ∞}."""
    if B0.shape[1] == 0:
        return B0, 0
    L = max(op_norm_inf(prob.gram), 1e-12)
    x = B0.copy()
    x_prev = x.copy()
    z = x.copy()
    t = 1.0
    Fx = prob.total(x)
    it = 0
    for it in range(1, max_iters + 1):
        grad = prob.grad(z)
        fz = prob.fidelity(z)
        while True:
            y = group_prox_step(z, grad, 1.0 / L, prob.kappa_nu, prob.p, prob.measure)
            D = y - z
            if prob.fidelity(y) <= fz + prob.inner(grad, D) + 0.5 * L * prob.inner(D, D) + 1e-15 * max(1.0, fz):
                break
            L *= 2.0
        Fy = prob.total(y)
        x_prev = x
        if Fy <= Fx:
            x, Fx = y, Fy
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x + (t / t_new) * (y - x) + ((t - 1.0) / t_new) * (x - x_prev)
        t = t_new
        step_norm = L * math.sqrt(prob.inner(D, D))
        if step_norm <= config.tol_obj * max(1.0, prob.kappa_nu):
            break
        if it % 10 == 0 and prob.kkt_gap(x) <= 0.1 * config.tol_dual:
            break
    return x, it


def solve_weights(
    Y: Signals,
    theta,
    dictionary,
    measure: DiscreteMeasure,
    kappa: float,
    p: int,
    config: Optional[SolverConfig] = None,
    B0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Dict[str, float]]:
    """Convex groeps-lasso in B bij vaste ϑ (orakel-modus)."""
    config = config or SolverConfig(kappa=kappa, p=p)
    Yd = _signals(Y)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    prob = _WeightProblem(Yd, _features(dictionary, th), measure, kappa, p)
    B_init = np.zeros((measure.n, th.size)) if B0 is None else np.asarray(B0, dtype=float)
    B, iters = _accelerated_prox(prob, B_init, config, config.max_inner_iters)
    return B, {"iters": float(iters), "kkt_gap": prob.kkt_gap(B), "objective": prob.total(B)}


def refine_theta(Y: Signals, B: np.ndarray, theta, dictionary, measure: DiscreteMeasure) -> np.ndarray:
    """Verlaagt de data-fidelity in ϑ bij vaste B; projectie op Θ_T via L-BFGS-B."""
    Yd = _signals(Y)
    th0 = dictionary.domain.check(theta)
    B = np.asarray(B, dtype=float)
    if th0.size == 0:
        return th0
    w = measure.weights / measure.mass

    def fun(th: np.ndarray) -> Tuple[float, np.ndarray]:
        nj = dictionary.normalized_jet(np.clip(th, dictionary.domain.lo, dictionary.domain.hi))
        R = Yd - B @ nj.value
        f = 0.5 * float(np.dot(w, np.sum(R * R, axis=1)))
        grad = -np.sum(w[:, None] * B * (R @ nj.d1.T), axis=0)
        return f, grad

    f0, _ = fun(th0)
    res = minimize(
        fun, th0, jac=True, method="L-BFGS-B",
        bounds=[(dictionary.domain.lo, dictionary.domain.hi)] * th0.size,
        options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 200},
    )
    th1 = np.clip(res.x, dictionary.domain.lo, dictionary.domain.hi)
    return th1 if fun(th1)[0] <= f0 else th0


def _refine_joint(
    Yd: np.ndarray, B: np.ndarray, theta: np.ndarray, dictionary, measure: DiscreteMeasure, kappa: float, p: int
) -> Tuple[np.ndarray, np.ndarray]:
    n, K = B.shape
    w = measure.weights / measure.mass
    a = measure.weights

    def fun(x: np.ndarray) -> Tuple[float, np.ndarray]:
        th = np.clip(x[:K], dictionary.domain.lo, dictionary.domain.hi)
        Bm = x[K:].reshape(n, K)
        nj = dictionary.normalized_jet(th)
        R = Yd - Bm @ nj.value
        f = 0.5 * float(np.dot(w, np.sum(R * R, axis=1))) + kappa * mixed_norm(Bm, measure, p)
        g_theta = -np.sum(w[:, None] * Bm * (R @ nj.d1.T), axis=0)
        if p == 2:
            norms = measure.lp_norm(Bm, 2)
            pen = a[:, None] * Bm / np.where(norms > 0, norms, 1.0)[None, :]
        else:
            pen = a[:, None] * np.sign(Bm)
        g_B = -w[:, None] * (R @ nj.value.T) + kappa * pen
        return f, np.concatenate([g_theta, g_B.ravel()])

    x0 = np.concatenate([theta, B.ravel()])
    f0, _ = fun(x0)
    bounds = [(dictionary.domain.lo, dictionary.domain.hi)] * K + [(None, None)] * (n * K)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-15, "gtol": 1e-14, "maxiter": 500})
    if not np.all(np.isfinite(res.x)) or fun(res.x)[0] > f0:
        return B, theta
    return res.x[K:].reshape(n, K), np.clip(res.x[:K], dictionary.domain.lo, dictionary.domain.hi)


def _prune(B: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    keep = np.any(B != 0, axis=0)
    return B[:, keep], theta[keep], int(np.sum(~keep))


def _merge(B: np.ndarray, theta: np.ndarray, model, min_dist: float) -> Tuple[np.ndarray, np.ndarray, int]:
    if theta.size < 2:
        return B, theta, 0
    order = np.argsort(theta, kind="mergesort")
    B, theta = B[:, order], theta[order]
    G = model.arclength(theta)
    cols, thetas, merged = [B[:, 0].copy()], [theta[0]], 0
    last_G, last_norm = G[0], np.linalg.norm(B[:, 0])
    for k in range(1, theta.size):
        if G[k] - last_G < min_dist:
            if np.linalg.norm(B[:, k]) > last_norm:
                thetas[-1], last_G, last_norm = theta[k], G[k], np.linalg.norm(B[:, k])
            cols[-1] = cols[-1] + B[:, k]
            merged += 1
        else:
            cols.append(B[:, k].copy())
            thetas.append(theta[k])
            last_G, last_norm = G[k], np.linalg.norm(B[:, k])
    return np.column_stack(cols), np.asarray(thetas), merged


def solve(Y: Signals, dictionary, measure: DiscreteMeasure, config: SolverConfig) -> Tuple[MixtureParams, SolveTrace]:
    Yd = _signals(Y)
    if Yd.shape != (measure.n, dictionary.T):
        raise PreconditionError(f"Y heeft vorm {Yd.shape}, verwacht ({measure.n}, {dictionary.T})")
    model = model_for(dictionary)
    q = conjugate(config.p)
    kappa_nu = config.kappa * measure.mass
    stop_level = kappa_nu * (1.0 + config.tol_dual)
    merge_dist = 0.25 * config.insertion_grid_step
    trace = SolveTrace()

    def total(B: np.ndarray, th: np.ndarray) -> float:
        return _fidelity(Yd, B, _features(dictionary, th), measure) + config.kappa * mixed_norm(B, measure, config.p)

    B = np.zeros((measure.n, 0))
    theta = np.zeros(0)
    best = total(B, theta)
    trace.objective.append(best)
    trace.record(0, best, "init")

    def polish(B: np.ndarray, th: np.ndarray, budget: int) -> Tuple[np.ndarray, np.ndarray]:
        prob = _WeightProblem(Yd, _features(dictionary, th), measure, config.kappa, config.p)
        B, _ = _accelerated_prox(prob, B, config, budget)
        if config.refine and th.size:
            B2, th2 = _refine_joint(Yd, B, th, dictionary, measure, config.kappa, config.p)
            prob2 = _WeightProblem(Yd, _features(dictionary, th2), measure, config.kappa, config.p)
            B2, _ = _accelerated_prox(prob2, B2, config, budget)
            if total(B2, th2) <= total(B, th):
                B, th = B2, th2
        return B, th

    for it in range(1, config.max_outer_iters + 1):
        value, th_new = dual_sup(Yd - B @ _features(dictionary, theta), dictionary, measure, q, config.insertion_grid_step)
        trace.final_dual_sup = value
        if value <= stop_level:
            trace.converged = True
            trace.record(it, best, "converged", value)
            break
        near_existing = theta.size and np.min(np.abs(model.arclength(theta) - model.arclength(np.array([th_new])))) < merge_dist
        if near_existing:
            B_try, th_try = polish(B, theta, 4 * config.max_inner_iters)
            obj_try = total(B_try, th_try)
            if obj_try < best * (1.0 - config.tol_obj):
                B, theta, best = B_try, th_try, obj_try
                trace.objective.append(best)
                trace.record(it, best, "refine", value)
                continue
            trace.warning = "stall: arg max valt samen met een bestaand atoom"
            trace.record(it, best, "stall", value)
            break
        if theta.size >= config.K_max:
            trace.warning = f"capaciteit K_max={config.K_max} bereikt"
            trace.record(it, best, "capacity", value)
            break
        B_new = np.hstack([B, np.zeros((measure.n, 1))])
        th_new_arr = np.append(theta, th_new)
        B_new, th_new_arr = polish(B_new, th_new_arr, config.max_inner_iters)
        B_new, th_new_arr, pruned = _prune(B_new, th_new_arr)
        if th_new_arr.size <= theta.size and total(B_new, th_new_arr) >= best * (1.0 - config.tol_obj):
            trace.warning = "stall: nieuw atoom direct gesnoeid"
            trace.record(it, best, "stall", value)
            break
        B_m, th_m, merged = _merge(B_new, th_new_arr, model, merge_dist)
        if merged:
            B_m, th_m = polish(B_m, th_m, config.max_inner_iters)
            B_m, th_m, _ = _prune(B_m, th_m)
            if total(B_m, th_m) <= total(B_new, th_new_arr):
                B_new, th_new_arr = B_m, th_m
            else:
                merged = 0
        obj = total(B_new, th_new_arr)
        if obj > best:
            trace.warning = "stap verhoogt de doelfunctie; verworpen"
            trace.record(it, best, "rejected", value)
            break
        B, theta, best = B_new, th_new_arr, obj
        trace.objective.append(best)
        trace.record(it, best, f"insert θ={th_new:.6g}", value)
        if pruned:
            trace.record(it, best, f"prune {pruned}", value)
            logger.info("Iteratie %d: %d atomen gesnoeid", it, pruned)
        if merged:
            trace.record(it, best, f"merge {merged}", value)
            logger.info("Iteratie %d: %d atomen samengevoegd", it, merged)
        logger.debug("Iteratie %d: doelfunctie %.10g, dual sup %.6g, K=%d", it, best, value, theta.size)
    else:
        trace.warning = f"niet geconvergeerd binnen {config.max_outer_iters} iteraties"

    if not trace.converged:
        value, _ = dual_sup(Yd - B @ _features(dictionary, theta), dictionary, measure, q, config.insertion_grid_step)
        trace.final_dual_sup = value
        trace.converged = value <= stop_level
        if not trace.converged:
            logger.warning("Solver: %s (dual sup %.4g > %.4g)", trace.warning, value, stop_level)
    order = np.argsort(theta, kind="mergesort")
    return MixtureParams(B[:, order], theta[order], capacity=config.K_max), trace
