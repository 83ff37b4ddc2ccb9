"""Continuous dictionaries θ ↦ φ_T(θ) ∈ ℝ^T with analytic derivatives up to order 3.

Every dictionary exposes the raw jet (φ, φ', φ'', φ''') and derives from it
the normalized feature φ/‖φ‖ and the covariant features φ^{[i]} = (g^{-1/2}∂_θ)^i φ
with g = ‖∂_θ φ‖².
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from catalog import DICTIONARY_KINDS
from measure_model import DomainInterval
from utils_offgrid import DegenerateMetricError, PreconditionError, ZeroFeatureError, get_logger

logger = get_logger("dictionary")

METRIC_TOL = 1e-12
Jet = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def _rowdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("nt,nt->n", a, b)


@dataclass(frozen=True, eq=False)
class FeatureJet:
    theta: np.ndarray
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    def __post_init__(self):
        for name in ("value", "d1", "d2", "d3"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise PreconditionError(f"Jet bevat niet-eindige waarden in {name}")

    def order(self, k: int) -> np.ndarray:
        return (self.value, self.d1, self.d2, self.d3)[k]


@dataclass(frozen=True, eq=False)
class CovariantFeatures:
    theta: np.ndarray
    features: np.ndarray  # (4, N, T): φ^{[0]} .. φ^{[3]}
    g: np.ndarray


class Dictionary(ABC):
    kind: str = ""
    domain: DomainInterval

    @property
    @abstractmethod
    def T(self) -> int: ...

    @abstractmethod
    def _raw_jet(self, theta: np.ndarray) -> Jet: ...

    def jet(self, theta) -> FeatureJet:
        th = self.domain.check(theta)
        return FeatureJet(th, *self._raw_jet(th))

    def eval(self, theta) -> np.ndarray:
        out = self.jet(theta).value
        return out[0] if np.ndim(theta) == 0 else out

    def deriv(self, theta, k: int) -> np.ndarray:
        if k not in (1, 2, 3):
            raise PreconditionError(f"Afgeleide-orde moet 1, 2 of 3 zijn, kreeg {k!r}")
        out = self.jet(theta).order(k)
        return out[0] if np.ndim(theta) == 0 else out

    def normalized_jet(self, theta) -> FeatureJet:
        raw = self.jet(theta)
        psi, d1, d2, d3 = raw.value, raw.d1, raw.d2, raw.d3
        q = _rowdot(psi, psi)
        if np.any(q <= 0.0):
            raise ZeroFeatureError(f"Feature met norm 0 bij θ={raw.theta[q <= 0.0][:3]!r}")
        q1 = 2.0 * _rowdot(psi, d1)
        q2 = 2.0 * (_rowdot(d1, d1) + _rowdot(psi, d2))
        q3 = 2.0 * (3.0 * _rowdot(d1, d2) + _rowdot(psi, d3))
        m0 = q ** -0.5
        m1 = -0.5 * q ** -1.5 * q1
        m2 = 0.75 * q ** -2.5 * q1 ** 2 - 0.5 * q ** -1.5 * q2
        m3 = -1.875 * q ** -3.5 * q1 ** 3 + 2.25 * q ** -2.5 * q1 * q2 - 0.5 * q ** -1.5 * q3
        m0, m1, m2, m3 = (m[:, None] for m in (m0, m1, m2, m3))
        return FeatureJet(
            raw.theta,
            psi * m0,
            d1 * m0 + psi * m1,
            d2 * m0 + 2.0 * d1 * m1 + psi * m2,
            d3 * m0 + 3.0 * d2 * m1 + 3.0 * d1 * m2 + psi * m3,
        )

    def normalized(self, theta) -> np.ndarray:
        out = self.normalized_jet(theta).value
        return out[0] if np.ndim(theta) == 0 else out

    def covariant(self, theta) -> CovariantFeatures:
        nj = self.normalized_jet(theta)
        f1, f2, f3 = nj.d1, nj.d2, nj.d3
        g = _rowdot(f1, f1)
        if np.any(g <= METRIC_TOL):
            raise DegenerateMetricError(f"g_T <= {METRIC_TOL} bij θ={nj.theta[g <= METRIC_TOL][:3]!r}")
        gp = 2.0 * _rowdot(f1, f2)
        gpp = 2.0 * (_rowdot(f2, f2) + _rowdot(f1, f3))
        s = g ** -0.5
        sp = -0.5 * g ** -1.5 * gp
        spp = 0.75 * g ** -2.5 * gp ** 2 - 0.5 * g ** -1.5 * gpp
        s, sp, spp = s[:, None], sp[:, None], spp[:, None]
        feats = np.stack([
            nj.value,
            s * f1,
            s * sp * f1 + s ** 2 * f2,
            s * (sp ** 2 + s * spp) * f1 + 3.0 * s ** 2 * sp * f2 + s ** 3 * f3,
        ])
        return CovariantFeatures(nj.theta, feats, g)


def normalized_feature(dictionary: Dictionary, theta: float) -> np.ndarray:
    return dictionary.normalized(float(theta))


def phi_cov(dictionary: Dictionary, theta: float, i: int) -> np.ndarray:
    """φ^{[i]}(θ) = D̃_i[φ](θ) voor i = 0..3."""
    if i not in (0, 1, 2, 3):
        raise PreconditionError(f"i moet in 0..3 liggen, kreeg {i!r}")
    return dictionary.covariant(float(theta)).features[i, 0]


# -------------------- Ingebouwde dictionaries --------------------
@dataclass(frozen=True, eq=False)
class GaussianLocation(Dictionary):
    sigma: float
    grid: np.ndarray
    domain: DomainInterval
    kind: str = "gaussian_location"

    def __post_init__(self):
        if self.sigma <= 0:
            raise PreconditionError(f"sigma moet > 0 zijn, kreeg {self.sigma!r}")

    @property
    def T(self) -> int:
        return int(self.grid.size)

    def _raw_jet(self, theta: np.ndarray) -> Jet:
        D = self.grid[None, :] - theta[:, None]
        s2 = self.sigma ** 2
        e = np.exp(-0.5 * D * D / s2)
        return (
            e,
            D / s2 * e,
            (D * D / s2 ** 2 - 1.0 / s2) * e,
            (D ** 3 / s2 ** 3 - 3.0 * D / s2 ** 2) * e,
        )


@dataclass(frozen=True, eq=False)
class FourierLowpass(Dictionary):
    """e^{i2πfθ}, |f| ≤ f_c, ingebed als 2f_c+1 reële coördinaten (1, √2 cos, √2 sin)."""
    fc: int
    domain: DomainInterval
    kind: str = "fourier_lowpass"

    def __post_init__(self):
        if self.fc < 1:
            raise PreconditionError(f"fc moet >= 1 zijn, kreeg {self.fc!r}")

    @property
    def T(self) -> int:
        return 2 * self.fc + 1

    def _raw_jet(self, theta: np.ndarray) -> Jet:
        w = 2.0 * math.pi * np.arange(1, self.fc + 1)
        arg = theta[:, None] * w[None, :]
        c, s = math.sqrt(2.0) * np.cos(arg), math.sqrt(2.0) * np.sin(arg)
        one = np.ones((theta.size, 1))
        zero = np.zeros((theta.size, 1))
        return (
            np.hstack([one, c, s]),
            np.hstack([zero, -w * s, w * c]),
            np.hstack([zero, -w ** 2 * c, -w ** 2 * s]),
            np.hstack([zero, w ** 3 * s, -w ** 3 * c]),
        )


@dataclass(frozen=True, eq=False)
class ExponentialDecay(Dictionary):
    grid: np.ndarray
    domain: DomainInterval
    kind: str = "exponential_decay"

    def __post_init__(self):
        if np.any(self.grid < 0):
            raise PreconditionError("Sample grid van exponential_decay moet >= 0 zijn")

    @property
    def T(self) -> int:
        return int(self.grid.size)

    def _raw_jet(self, theta: np.ndarray) -> Jet:
        t = self.grid[None, :]
        e = np.exp(-theta[:, None] * t)
        return e, -t * e, t * t * e, -(t ** 3) * e


# -------------------- Herparametrisatie --------------------
Warp = Callable[[np.ndarray], Jet]


def exp_warp(lo: float, hi: float, gamma: float) -> Warp:
    """θ = lo + (hi−lo)(e^{γu}−1)/(e^γ−1) op u ∈ [0, 1]; strikt stijgend."""
    if gamma == 0:
        raise PreconditionError("gamma = 0 geeft een lineaire warp; gebruik een affiene map")
    scale = (hi - lo) / math.expm1(gamma)

    def warp(u: np.ndarray) -> Jet:
        e = np.exp(gamma * u)
        return lo + scale * (e - 1.0), scale * gamma * e, scale * gamma ** 2 * e, scale * gamma ** 3 * e

    return warp


@dataclass(frozen=True, eq=False)
class Reparametrized(Dictionary):
    base: Dictionary
    warp: Warp
    domain: DomainInterval
    kind: str = "reparametrized"

    @property
    def T(self) -> int:
        return self.base.T

    def _raw_jet(self, theta: np.ndarray) -> Jet:
        th, w1, w2, w3 = (np.asarray(a, dtype=float) for a in self.warp(theta))
        bj = self.base.jet(th)
        w1, w2, w3 = w1[:, None], w2[:, None], w3[:, None]
        return (
            bj.value,
            bj.d1 * w1,
            bj.d2 * w1 ** 2 + bj.d1 * w2,
            bj.d3 * w1 ** 3 + 3.0 * bj.d2 * w1 * w2 + bj.d1 * w3,
        )


# -------------------- Config --------------------
def _domain_from_cfg(cfg: Dict[str, Any], default_inf: Tuple[float, float]) -> DomainInterval:
    lo, hi = (float(x) for x in cfg["domain"])
    lo_inf, hi_inf = (float(x) for x in cfg.get("domain_inf", default_inf))
    return DomainInterval(lo, hi, lo_inf, hi_inf)


def build_dictionary(cfg: Dict[str, Any]) -> Dictionary:
    """Bouwt een dictionary uit `{kind, params, T, domain:[lo,hi]}`."""
    kind = cfg.get("kind")
    if kind not in DICTIONARY_KINDS:
        raise PreconditionError(f"Onbekende dictionary kind {kind!r}; kies uit {sorted(DICTIONARY_KINDS)}")
    if "domain" not in cfg:
        raise PreconditionError("dictionary.domain ontbreekt")
    params: Dict[str, Any] = dict(cfg.get("params", {}))
    T: Optional[int] = cfg.get("T")

    if kind == "fourier_lowpass":
        fc = int(params.get("fc", 0))
        if T is not None and int(T) != 2 * fc + 1:
            raise PreconditionError(f"fourier_lowpass met fc={fc} vereist T={2 * fc + 1}, kreeg T={T}")
        return FourierLowpass(fc, _domain_from_cfg(cfg, (0.0, 1.0)))

    if T is None or int(T) < 2:
        raise PreconditionError(f"dictionary.T ontbreekt of is te klein: {T!r}")
    if kind == "gaussian_location":
        t_lo, t_hi = params.get("t_range", [0.0, 1.0])
        grid = np.linspace(float(t_lo), float(t_hi), int(T))
        return GaussianLocation(float(params.get("sigma", 0.05)), grid, _domain_from_cfg(cfg, (-math.inf, math.inf)))
    t_lo, t_hi = params.get("t_range", [0.0, 1.0])
    grid = np.linspace(float(t_lo), float(t_hi), int(T))
    return ExponentialDecay(grid, _domain_from_cfg(cfg, (0.0, math.inf)))
