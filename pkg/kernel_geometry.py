"""Kernel K_T, covariant derivatives K^[i,j], Riemannian metric 𝔡_T and limit-kernel diagnostics.

All suprema over Θ_T or Θ_T² run on a grid that is uniform in metric arclength G_T
(step in 𝔡 units) followed by a bounded scalar polish; reported values carry the step.
"""
import math
import threading
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e, legendre
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar

from dictionary import Dictionary, METRIC_TOL
from measure_model import DiscreteMeasure, DomainInterval
from utils_offgrid import DegenerateMetricError, PreconditionError, QuadratureError, get_logger

logger = get_logger("kernel_geometry")

DEFAULT_GRID_STEP = 0.02
CHUNK = 512
_GL_NODES, _GL_WEIGHTS = legendre.leggauss(8)


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("nt,nt->n", a, b)


def _as_scalar_or_matrix(theta, theta_p, M: np.ndarray):
    if np.ndim(theta) == 0 and np.ndim(theta_p) == 0:
        return float(M[0, 0])
    return M


class GridValue(NamedTuple):
    value: float
    grid_step: float
    empty: bool = False


@dataclass(frozen=True, eq=False)
class MetricGrid:
    theta: np.ndarray
    arclength: np.ndarray
    step: float

    @property
    def size(self) -> int:
        return int(self.theta.size)


@dataclass(frozen=True)
class ProximityReport:
    V_T: float
    rho_T: float
    grid_step: float
    V1: float = 0.0
    V2: float = 0.0
    feasible: bool = True


class KernelModel:
    """Kernel van een dictionary, met een arclengte-tabel en per grid-stap gecachte features."""

    def __init__(self, dictionary: Dictionary, *, table_intervals: int = 1024):
        self.dictionary = dictionary
        self.domain: DomainInterval = dictionary.domain
        self.table_intervals = int(table_intervals)
        self._lock = threading.RLock()
        self._arc: Optional[Tuple[CubicHermiteSpline, CubicHermiteSpline, float, float]] = None
        self._grids: Dict[float, MetricGrid] = {}
        self._grid_features: Dict[Tuple[float, int], np.ndarray] = {}

    # -------------------- features --------------------
    def covariant_features(self, theta, orders=(0, 1, 2, 3)) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.empty((len(orders), th.size, self.dictionary.T))
        for start in range(0, th.size, CHUNK):
            cf = self.dictionary.covariant(th[start:start + CHUNK])
            out[:, start:start + CHUNK] = cf.features[list(orders)]
        return out

    def features(self, theta, i: int) -> np.ndarray:
        return self.covariant_features(theta, orders=(i,))[0]

    def gram(self, theta, theta_p, i: int = 0, j: int = 0) -> np.ndarray:
        """⟨φ^{[i]}(θ_a), φ^{[j]}(θ'_b)⟩ via de features (feature-pad)."""
        return self.features(theta, i) @ self.features(theta_p, j).T

    # -------------------- kernel --------------------
    def kernel(self, theta, theta_p):
        A = self.dictionary.normalized(np.atleast_1d(theta))
        B = self.dictionary.normalized(np.atleast_1d(theta_p))
        return _as_scalar_or_matrix(theta, theta_p, A @ B.T)

    def _coefficients(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # diagonaal van de partiële afgeleiden P_ab = ∂^a∂'^b K geeft g, g', g''
        nj = self.dictionary.normalized_jet(theta)
        g = _rowdot(nj.d1, nj.d1)
        if np.any(g <= METRIC_TOL):
            raise DegenerateMetricError(f"g_T <= {METRIC_TOL} bij θ={nj.theta[g <= METRIC_TOL][:3]!r}")
        gp = 2.0 * _rowdot(nj.d2, nj.d1)
        gpp = 2.0 * _rowdot(nj.d3, nj.d1) + 2.0 * _rowdot(nj.d2, nj.d2)
        s = g ** -0.5
        sp = -0.5 * g ** -1.5 * gp
        spp = 0.75 * g ** -2.5 * gp ** 2 - 0.5 * g ** -1.5 * gpp
        c = np.zeros((4, 4, theta.size))
        c[0, 0] = 1.0
        c[1, 1] = s
        c[2, 1], c[2, 2] = s * sp, s ** 2
        c[3, 1], c[3, 2], c[3, 3] = s * (sp ** 2 + s * spp), 3.0 * s ** 2 * sp, s ** 3
        jets = np.stack([nj.value, nj.d1, nj.d2, nj.d3])
        return c, jets

    def kernel_cov(self, i: int, j: int, theta, theta_p):
        """K^[i,j](θ,θ') = Σ_ab c_ia(θ) c_jb(θ') ∂^a∂'^b K(θ,θ') (recursiepad)."""
        if i not in range(4) or j not in range(4):
            raise PreconditionError(f"i, j moeten in 0..3 liggen, kreeg ({i!r}, {j!r})")
        ta = self.domain.check(theta)
        tb = self.domain.check(theta_p)
        ca, ja = self._coefficients(ta)
        cb, jb = self._coefficients(tb)
        M = np.zeros((ta.size, tb.size))
        for a in range(i + 1):
            if not np.any(ca[i, a]):
                continue
            for b in range(j + 1):
                if not np.any(cb[j, b]):
                    continue
                M += ca[i, a][:, None] * cb[j, b][None, :] * (ja[a] @ jb[b].T)
        return _as_scalar_or_matrix(theta, theta_p, M)

    def h_fn(self, theta):
        th = self.domain.check(theta)
        c, jets = self._coefficients(th)
        v = np.einsum("an,ant->nt", c[3], jets)
        out = _rowdot(v, v)
        return float(out[0]) if np.ndim(theta) == 0 else out

    # -------------------- metriek --------------------
    def metric_g(self, theta):
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.empty(th.size)
        for start in range(0, th.size, CHUNK):
            d1 = self.dictionary.normalized_jet(th[start:start + CHUNK]).d1
            out[start:start + CHUNK] = _rowdot(d1, d1)
        return float(out[0]) if np.ndim(theta) == 0 else out

    def _integrate_sqrt_g(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                val, _ = quad(lambda t: math.sqrt(self.metric_g(t)), a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
            except IntegrationWarning as e:
                raise QuadratureError(f"Quadratuur van √g_T op [{a}, {b}] convergeert niet: {e}") from e
        return float(val)

    def metric_G(self, theta: float) -> float:
        th = float(self.domain.check(theta)[0])
        return self._integrate_sqrt_g(self.domain.mid, th)

    def dist(self, theta: float, theta_p: float) -> float:
        a = float(self.domain.check(theta)[0])
        b = float(self.domain.check(theta_p)[0])
        return abs(self._integrate_sqrt_g(min(a, b), max(a, b)))

    def _arc_table(self) -> Tuple[CubicHermiteSpline, CubicHermiteSpline, float, float]:
        with self._lock:
            if self._arc is None:
                lo, hi = self.domain.lo, self.domain.hi
                breaks = np.linspace(lo, hi, self.table_intervals + 1)
                h = breaks[1] - breaks[0]
                nodes = (breaks[:-1, None] + 0.5 * h * (_GL_NODES[None, :] + 1.0)).ravel()
                root_g = np.sqrt(self.metric_g(nodes)).reshape(self.table_intervals, -1)
                pieces = 0.5 * h * root_g @ _GL_WEIGHTS
                G = np.concatenate([[0.0], np.cumsum(pieces)]) + self._integrate_sqrt_g(self.domain.mid, lo)
                slope = np.sqrt(self.metric_g(breaks))
                forward = CubicHermiteSpline(breaks, G, slope)
                inverse = CubicHermiteSpline(G, breaks, 1.0 / slope)
                self._arc = (forward, inverse, float(G[0]), float(G[-1]))
                logger.debug("Arclengte-tabel gebouwd: diameter %.6g", G[-1] - G[0])
            return self._arc

    def arclength(self, theta) -> np.ndarray:
        forward, _, _, _ = self._arc_table()
        G = forward(self.domain.check(theta))
        return float(G[0]) if np.ndim(theta) == 0 else G

    def inverse_arclength(self, G) -> np.ndarray:
        _, inverse, G_lo, G_hi = self._arc_table()
        th = inverse(np.clip(G, G_lo, G_hi))
        return np.clip(th, self.domain.lo, self.domain.hi)

    @property
    def diameter(self) -> float:
        _, _, G_lo, G_hi = self._arc_table()
        return G_hi - G_lo

    def metric_grid(self, step: float = DEFAULT_GRID_STEP) -> MetricGrid:
        if step <= 0:
            raise PreconditionError(f"grid_step moet > 0 zijn, kreeg {step!r}")
        key = float(step)
        _, _, G_lo, G_hi = self._arc_table()
        with self._lock:
            if key not in self._grids:
                m = max(1, int(math.ceil((G_hi - G_lo) / step - 1e-9)))
                G = np.linspace(G_lo, G_hi, m + 1)
                theta = self.inverse_arclength(G)
                theta[0], theta[-1] = self.domain.lo, self.domain.hi
                self._grids[key] = MetricGrid(theta, G, (G_hi - G_lo) / m)
            return self._grids[key]

    def grid_features(self, step: float, i: int) -> np.ndarray:
        grid = self.metric_grid(step)
        key = (float(step), int(i))
        with self._lock:
            cached = self._grid_features.get(key)
        if cached is None:
            cached = self.features(grid.theta, i)
            cached.setflags(write=False)
            with self._lock:
                self._grid_features.setdefault(key, cached)
        return cached


@lru_cache(maxsize=16)
def model_for(dictionary: Dictionary) -> KernelModel:
    return KernelModel(dictionary)


# -------------------- modulefuncties --------------------
def kernel(model: KernelModel, theta, theta_p):
    return model.kernel(theta, theta_p)


def kernel_cov(model: KernelModel, i: int, j: int, theta, theta_p):
    return model.kernel_cov(i, j, theta, theta_p)


def metric_g(model: KernelModel, theta):
    return model.metric_g(theta)


def metric_G(model: KernelModel, theta: float) -> float:
    return model.metric_G(theta)


def dist(model: KernelModel, theta: float, theta_p: float) -> float:
    return model.dist(theta, theta_p)


def h_fn(model: KernelModel, theta):
    return model.h_fn(theta)


def _polish(fn: Callable[[float], float], lo: float, hi: float) -> Tuple[float, float]:
    """Maximaliseert fn op [lo, hi] (arclengte-coördinaat); geeft (waarde, G)."""
    if hi - lo <= 1e-12:
        return fn(lo), lo
    res = minimize_scalar(lambda x: -fn(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return -float(res.fun), float(res.x)


def sup_correlation(
    model: KernelModel,
    R: np.ndarray,
    measure: DiscreteMeasure,
    q: float,
    order: int,
    grid_step: float = DEFAULT_GRID_STEP,
) -> Tuple[float, float]:
    """sup_θ ‖⟨R(·), φ^{[order]}(θ)⟩‖_{L^q(ν)} en de arg max (kleinste θ bij gelijkstand)."""
    R = np.asarray(R, dtype=float)
    grid = model.metric_grid(grid_step)
    vals = measure.lp_norm(R @ model.grid_features(grid_step, order).T, q)
    j = int(np.argmax(vals))
    best, best_theta = float(vals[j]), float(grid.theta[j])
    if best == 0.0:
        return 0.0, best_theta

    def corr(G: float) -> float:
        f = model.features(model.inverse_arclength(np.array([G])), order)
        return float(measure.lp_norm(R @ f.T, q)[0])

    lo = grid.arclength[max(j - 1, 0)]
    hi = grid.arclength[min(j + 1, grid.size - 1)]
    val, G = _polish(corr, lo, hi)
    if val > best:
        best, best_theta = val, float(model.inverse_arclength(np.array([G]))[0])
    return best, best_theta


def _pair_scan(model: KernelModel, grid_step: float, i: int, j: int, keep: Callable, score: Callable):
    grid = model.metric_grid(grid_step)
    Fi = model.grid_features(grid_step, i)
    Fj = model.grid_features(grid_step, j)
    G = grid.arclength
    best, arg = -math.inf, None
    for start in range(0, grid.size, CHUNK):
        stop = min(start + CHUNK, grid.size)
        D = np.abs(G[start:stop, None] - G[None, :])
        S = np.where(keep(D), score(Fi[start:stop] @ Fj.T), -math.inf)
        k = int(np.argmax(S))
        if S.flat[k] > best:
            a, b = divmod(k, grid.size)
            best, arg = float(S.flat[k]), (start + a, b)
    return best, arg, grid


def eps_far(model: KernelModel, r: float, grid_step: float = DEFAULT_GRID_STEP) -> GridValue:
    """1 − sup{|K(θ,θ')| : 𝔡(θ,θ') ≥ r}; 1 met empty-vlag als geen paar r-gescheiden is."""
    if r <= 0:
        raise PreconditionError(f"r moet > 0 zijn, kreeg {r!r}")
    best, arg, grid = _pair_scan(model, grid_step, 0, 0, lambda D: D >= r - 1e-12, np.abs)
    if arg is None:
        logger.info("Geen r-gescheiden paren voor r=%.4g (diameter %.4g)", r, model.diameter)
        return GridValue(1.0, grid.step, True)
    a, b = arg
    Ga, Gb = grid.arclength[a], grid.arclength[b]
    lo_end, hi_end = grid.arclength[0], grid.arclength[-1]
    th_a = grid.theta[a]
    if Gb >= Ga:
        lo, hi = max(Gb - grid.step, Ga + r), min(Gb + grid.step, hi_end)
    else:
        lo, hi = max(Gb - grid.step, lo_end), min(Gb + grid.step, Ga - r)
    if hi > lo:
        val, _ = _polish(lambda G: abs(model.kernel(th_a, float(model.inverse_arclength(np.array([G]))[0]))), lo, hi)
        best = max(best, val)
    return GridValue(1.0 - best, grid.step, False)


def nu_near(model: KernelModel, r: float, grid_step: float = DEFAULT_GRID_STEP) -> GridValue:
    """−sup{K^[0,2](θ,θ') : 𝔡(θ,θ') ≤ r}; de diagonaal (waarde −1) telt mee."""
    if r < 0:
        raise PreconditionError(f"r moet >= 0 zijn, kreeg {r!r}")
    best, arg, grid = _pair_scan(model, grid_step, 0, 2, lambda D: D <= r + 1e-12, lambda K: K)
    a, b = arg
    Ga, Gb = grid.arclength[a], grid.arclength[b]
    th_a = grid.theta[a]
    lo = max(Gb - grid.step, Ga - r, grid.arclength[0])
    hi = min(Gb + grid.step, Ga + r, grid.arclength[-1])
    if hi > lo:
        val, _ = _polish(lambda G: model.kernel_cov(0, 2, th_a, float(model.inverse_arclength(np.array([G]))[0])), lo, hi)
        best = max(best, val)
    return GridValue(-best, grid.step, False)


# -------------------- limietkernel --------------------
def _hermite_sup(n: int) -> float:
    d = np.linspace(-14.0, 14.0, 280001)
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    vals = np.abs(hermite_e.hermeval(d, coef) * np.exp(-0.5 * d * d))
    k = int(np.argmax(vals))
    res = minimize_scalar(
        lambda x: -abs(hermite_e.hermeval(x, coef) * math.exp(-0.5 * x * x)),
        bounds=(d[max(k - 1, 0)], d[min(k + 1, d.size - 1)]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(vals[k]), -float(res.fun))


@dataclass(frozen=True, eq=False)
class LimitKernelSpec:
    name: str
    kernel_cov: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    eps: Callable[[float], float]
    nu: Callable[[float], float]
    m_g: float
    L: Dict[Tuple[int, int], float]
    L3: float
    domain_inf: DomainInterval
    dist: Callable[[float, float], float]
    grid_step: Optional[float] = None

    def __post_init__(self):
        if not self.m_g > 0:
            raise PreconditionError(f"m_g moet > 0 zijn, kreeg {self.m_g!r}")
        if not math.isfinite(self.L3):
            raise PreconditionError("L_3 moet eindig zijn")

    def K(self, theta, theta_p) -> np.ndarray:
        return self.kernel_cov(0, 0, np.atleast_1d(theta), np.atleast_1d(theta_p))

    @classmethod
    def gaussian(cls, sigma: float, domain_inf: Optional[DomainInterval] = None) -> "LimitKernelSpec":
        """K_∞^{[i,j]}(θ,θ') = (−1)^i He_{i+j}(d) e^{−d²/2}, d = (θ−θ')/(√2σ)."""
        if sigma <= 0:
            raise PreconditionError(f"sigma moet > 0 zijn, kreeg {sigma!r}")
        scale = 1.0 / (math.sqrt(2.0) * sigma)
        g_inf = 1.0 / (2.0 * sigma ** 2)
        dom = domain_inf or DomainInterval(-1e300, 1e300)

        def kcov(i: int, j: int, a, b) -> np.ndarray:
            d = (np.atleast_1d(a)[:, None] - np.atleast_1d(b)[None, :]) * scale
            coef = np.zeros(i + j + 1)
            coef[i + j] = 1.0
            return (-1.0) ** i * hermite_e.hermeval(d, coef) * np.exp(-0.5 * d * d)

        def nu(r: float) -> float:
            r = min(abs(r), math.sqrt(3.0))
            return (1.0 - r * r) * math.exp(-0.5 * r * r)

        L = {(i, j): _hermite_sup(i + j) for i in range(3) for j in range(3)}
        return cls(
            name=f"gaussian(sigma={sigma:g})",
            kernel_cov=kcov,
            g=lambda th: np.full(np.shape(np.atleast_1d(th)), g_inf),
            h=lambda th: np.full(np.shape(np.atleast_1d(th)), 15.0),
            eps=lambda r: 1.0 - math.exp(-0.5 * r * r),
            nu=nu,
            m_g=g_inf,
            L=L,
            L3=15.0,
            domain_inf=dom,
            dist=lambda a, b: abs(a - b) * scale,
        )

    @classmethod
    def from_model(cls, model: KernelModel, grid_step: float = DEFAULT_GRID_STEP) -> "LimitKernelSpec":
        """Getabuleerde limiet gelijk aan de eigen kernel van het model."""
        grid = model.metric_grid(grid_step)
        L: Dict[Tuple[int, int], float] = {}
        for i in range(3):
            for j in range(3):
                best, _, _ = _pair_scan(model, grid_step, i, j, lambda D: D >= 0.0, np.abs)
                L[(i, j)] = best
        h_grid = model.h_fn(grid.theta)
        return cls(
            name=f"self({model.dictionary.kind})",
            kernel_cov=lambda i, j, a, b: model.gram(a, b, i, j),
            g=model.metric_g,
            h=model.h_fn,
            eps=lambda r: eps_far(model, r, grid_step).value,
            nu=lambda r: nu_near(model, r, grid_step).value,
            m_g=float(np.min(model.metric_g(grid.theta))),
            L=L,
            L3=float(np.max(np.abs(h_grid))),
            domain_inf=model.domain,
            dist=model.dist,
            grid_step=grid_step,
        )


def proximity(model: KernelModel, limit: LimitKernelSpec, grid_step: float = DEFAULT_GRID_STEP) -> ProximityReport:
    dom, inf = model.domain, limit.domain_inf
    if dom.lo < inf.lo or dom.hi > inf.hi:
        raise PreconditionError(f"Θ_T = [{dom.lo}, {dom.hi}] ligt niet in Θ_∞ = [{inf.lo}, {inf.hi}]")
    grid = model.metric_grid(grid_step)
    th = grid.theta
    F = [model.grid_features(grid_step, i) for i in range(3)]
    V1 = 0.0
    for start in range(0, grid.size, CHUNK):
        stop = min(start + CHUNK, grid.size)
        for i in range(3):
            for j in range(3):
                diff = F[i][start:stop] @ F[j].T - limit.kernel_cov(i, j, th[start:stop], th)
                V1 = max(V1, float(np.max(np.abs(diff))))
    F3 = model.grid_features(grid_step, 3)
    V2 = float(np.max(np.abs(_rowdot(F3, F3) - limit.h(th))))
    ratio = model.metric_g(th) / limit.g(th)
    rho = float(max(np.max(np.sqrt(ratio)), np.max(np.sqrt(1.0 / ratio)), 1.0))
    V_T = max(V1, V2)
    feasible = V_T <= min(limit.L[(2, 2)], limit.L3)
    if not feasible:
        logger.info("𝒱_T=%.4g groter dan L22 ∧ L3=%.4g", V_T, min(limit.L[(2, 2)], limit.L3))
    return ProximityReport(V_T=V_T, rho_T=rho, grid_step=grid.step, V1=V1, V2=V2, feasible=feasible)
