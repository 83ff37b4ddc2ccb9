"""Gaussian noise, suprema statistics M_i, χ² tail bounds and the tuning rules for κ."""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from certificates import CertificateConstants
from kernel_geometry import DEFAULT_GRID_STEP, model_for, sup_correlation
from measure_model import DiscreteMeasure
from utils_offgrid import PreconditionError, get_logger

logger = get_logger("noise_tails")


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    delta_T: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0 or self.delta_T <= 0:
            raise PreconditionError(f"Vereist σ >= 0 en Δ_T > 0, kreeg σ={self.sigma!r}, Δ_T={self.delta_T!r}")

    @property
    def variance(self) -> float:
        return self.sigma ** 2 * self.delta_T


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Onafhankelijke Philox-stroom per (seed, replicate)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


def sample_noise(model: NoiseModel, n: int, T: int, replicate: int = 0) -> np.ndarray:
    if n < 1 or T < 1:
        raise PreconditionError(f"n en T moeten >= 1 zijn, kreeg n={n!r}, T={T!r}")
    if model.sigma == 0:
        return np.zeros((n, T))
    rng = replicate_rng(model.seed, replicate)
    return rng.standard_normal((n, T)) * math.sqrt(model.variance)


def sup_stat(
    W: np.ndarray,
    dictionary,
    measure: DiscreteMeasure,
    i: int,
    q: float,
    grid_step: float = DEFAULT_GRID_STEP,
) -> float:
    """M_i = sup_θ ‖⟨W, φ^{[i]}(θ)⟩‖_{L^q(ν)}."""
    if i not in (0, 1, 2):
        raise PreconditionError(f"i moet 0, 1 of 2 zijn, kreeg {i!r}")
    value, _ = sup_correlation(model_for(dictionary), W, measure, q, i, grid_step)
    return value


def chi2_process_sup(W: np.ndarray, dictionary, measure: DiscreteMeasure, grid_step: float = DEFAULT_GRID_STEP) -> float:
    """sup_θ Σ_z a_z ⟨W_z, φ(θ)⟩² via een eigen gridscan."""
    model = model_for(dictionary)
    grid = model.metric_grid(grid_step)
    X = np.asarray(W, dtype=float) @ model.grid_features(grid_step, 0).T
    Y = measure.weights @ (X * X)
    j = int(np.argmax(Y))
    best = float(Y[j])
    if best == 0.0:
        return 0.0

    def chi2(G: float) -> float:
        x = W @ model.features(model.inverse_arclength(np.array([G])), 0)[0]
        return float(measure.weights @ (x * x))

    lo = grid.arclength[max(j - 1, 0)]
    hi = grid.arclength[min(j + 1, grid.size - 1)]
    res = minimize_scalar(lambda G: -chi2(G), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return max(best, -float(res.fun))


# -------------------- staartfuncties --------------------
def f_tail(n: float, x: float) -> float:
    if x <= 0:
        raise PreconditionError(f"x moet > 0 zijn, kreeg {x!r}")
    return math.exp(-x * (1.0 - 2.0 * math.sqrt(n / x)))


def g_tail(n: float, x: float) -> float:
    if x <= 0:
        raise PreconditionError(f"x moet > 0 zijn, kreeg {x!r}")
    return math.exp(0.5 * n * math.log(x) - 0.5 * x - gammaln(0.5 * n))


def chi2_bound(
    u: float, n: int, C1: float, C2: float, sigma: float, delta_T: float, a_max: float, diam: float
) -> float:
    """f_n(x) + 4C2·diam/(C1·2^{n/2})·g_n(x) met x = u/(σ² a_max Δ_T C1²); ruwe waarde, niet afgekapt."""
    scale = sigma ** 2 * a_max * delta_T * C1 ** 2
    if scale <= 0:
        raise PreconditionError("σ² a_max Δ_T C1² moet > 0 zijn")
    if u < (n + 1) * scale:
        raise PreconditionError(f"u={u:.4g} ligt onder de drempel (n+1)·schaal={(n + 1) * scale:.4g}")
    x = u / scale
    return f_tail(n, x) + 4.0 * C2 * diam / (C1 * 2.0 ** (0.5 * n)) * g_tail(n, x)


@dataclass(frozen=True)
class TheoreticalConstants:
    C_cal: float
    C_prime: float
    C_big: float
    C0: float
    C1: float
    C2: float
    C3: float
    C4: float
    certificate: CertificateConstants
    L22: float
    L3: float


def event_constants(
    cc: CertificateConstants,
    L22: float,
    L3: float,
    *,
    C_cal: Optional[float] = None,
    C4_prime: float = 1.0,
) -> TheoreticalConstants:
    if L22 <= 0 or L3 < 0:
        raise PreconditionError(f"Vereist L22 > 0 en L3 >= 0, kreeg {L22!r}, {L3!r}")
    if C_cal is None:
        C_cal = min(
            cc.C_F / (2.0 * (2.0 - cc.C_F + cc.c_F)),
            cc.C_N / (2.0 * (cc.C_N_prime + cc.c_N + 0.5)),
        )
    if C_cal <= 0:
        raise PreconditionError(f"𝒞 moet > 0 zijn, kreeg {C_cal!r}")
    Cp = max(C_cal, 1.0)
    C_big = 4.0 * Cp * (
        1.0
        + Cp / cc.C_N * (2.0 * cc.C_N_prime + cc.c_N + 1.0)
        + Cp / cc.C_F * (3.0 - 2.0 * cc.C_F + cc.c_F)
    )
    C1p = math.sqrt(C_cal ** 2 / max(2.0 * L22, 1.0))
    C2p = 4.0 * max(1.0, math.sqrt(2.0 * L22), math.sqrt(L3) / math.sqrt(L22))
    return TheoreticalConstants(
        C_cal=C_cal,
        C_prime=Cp,
        C_big=C_big,
        C0=(cc.c_B + 2.0 * cc.C_B) * C_big,
        C1=math.sqrt(2.0) / C1p,
        C2=3.0 * max(1.0, C2p),
        C3=(2.0 / C_cal) * max(1.0, math.sqrt(2.0 * L22)),
        C4=3.0 * C4_prime,
        certificate=cc,
        L22=L22,
        L3=L3,
    )


def implied_event_constant(p: int, kappa_constant: float, L22: float) -> float:
    """𝒞 dat hoort bij een vast gekozen prefactor C1 (p=2) of C3 (p=1)."""
    if kappa_constant <= 0:
        raise PreconditionError(f"κ-prefactor moet > 0 zijn, kreeg {kappa_constant!r}")
    if p == 2:
        return math.sqrt(2.0) * math.sqrt(max(2.0 * L22, 1.0)) / kappa_constant
    return 2.0 * max(1.0, math.sqrt(2.0 * L22)) / kappa_constant


# -------------------- afstemming van κ --------------------
def _check_tau(tau: float) -> None:
    if not tau > 1:
        raise PreconditionError(f"τ moet > 1 zijn, kreeg {tau!r}")


def kappa_p2(tau: float, n: int, sigma: float, delta_T: float, a_max: float, nu_mass: float, C1: float) -> float:
    _check_tau(tau)
    return C1 * sigma * math.sqrt(a_max * delta_T * n / nu_mass ** 2) * (1.0 + math.sqrt(1.0 + math.log(tau) / n))


def kappa_p1(tau: float, sigma: float, delta_T: float, nu_mass: float, C3: float) -> float:
    _check_tau(tau)
    return C3 * sigma * math.sqrt(delta_T * math.log(tau)) / nu_mass


def F_n(n: float) -> float:
    return g_tail(n, n) * math.exp(-0.5 * n) / 2.0 ** (0.5 * n)


def failure_prob_p2(tau: float, n: int, diam: float, C2: float = 1.0) -> float:
    _check_tau(tau)
    return C2 * (1.0 / tau + diam * F_n(n) / math.sqrt(tau))


def failure_prob_p1(tau: float, n: int, diam: float, C4: float = 3.0) -> float:
    _check_tau(tau)
    return C4 * n * max(diam / (tau * math.sqrt(math.log(tau))), 1.0 / tau)


def reference_rate(p: int, sigma: float, delta_T: float, s: int, n: int, tau: float) -> float:
    """Verwachte orde van R̂²: σ²Δ_T s(1 + log τ/n) voor p=2, σ²Δ_T s log τ voor p=1."""
    _check_tau(tau)
    if p == 2:
        return sigma ** 2 * delta_T * s * (1.0 + math.log(tau) / n)
    return sigma ** 2 * delta_T * s * math.log(tau)


def suprema(W: np.ndarray, dictionary, measure: DiscreteMeasure, q: float, grid_step: float) -> Tuple[float, float, float]:
    return tuple(sup_stat(W, dictionary, measure, i, q, grid_step) for i in range(3))  # type: ignore[return-value]
