"""Measure ν, signals Y, mixture parameters (B, ϑ) and the forward model."""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from utils_offgrid import DomainError, PreconditionError, get_logger

logger = get_logger("measure_model")

ArrayLike = Union[Sequence[float], np.ndarray]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def conjugate(p: float) -> float:
    if not 1.0 <= p <= 2.0:
        raise PreconditionError(f"p moet in [1, 2] liggen, kreeg {p!r}")
    return math.inf if p == 1.0 else p / (p - 1.0)


@dataclass(frozen=True)
class DomainInterval:
    lo: float
    hi: float
    lo_inf: float = -math.inf
    hi_inf: float = math.inf

    def __post_init__(self):
        if not self.lo < self.hi:
            raise PreconditionError(f"Domein ongeldig: lo={self.lo!r} >= hi={self.hi!r}")
        if self.lo < self.lo_inf or self.hi > self.hi_inf:
            raise PreconditionError(
                f"[{self.lo}, {self.hi}] ligt niet in Θ_∞ = [{self.lo_inf}, {self.hi_inf}]"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def check(self, theta: ArrayLike) -> np.ndarray:
        """Valideert θ; waarden binnen afrondingsruis van de rand worden op de rand gezet."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        tol = 1e-12 * self.width
        bad = (th < self.lo - tol) | (th > self.hi + tol) | ~np.isfinite(th)
        if np.any(bad):
            raise DomainError(f"θ buiten domein [{self.lo}, {self.hi}]: {th[bad][:5]!r}")
        return np.clip(th, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if idx.shape != w.shape:
            raise PreconditionError("indices en weights hebben verschillende lengte")
        if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise PreconditionError(f"Gewichten moeten eindig en >= 0 zijn: {w[:5]!r}")
        if w.sum() <= 0:
            raise PreconditionError("Totale massa ν(𝒵) moet > 0 zijn")
        if np.unique(idx).size != idx.size:
            raise PreconditionError("Atoom-indices zijn niet uniek")
        frozen_idx = np.array(idx, copy=True)
        frozen_idx.setflags(write=False)
        object.__setattr__(self, "indices", frozen_idx)
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, n: int, weight: float = 1.0) -> "DiscreteMeasure":
        return cls(np.arange(n), np.full(n, float(weight)))

    @classmethod
    def from_weights(cls, weights: ArrayLike) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float).ravel()
        return cls(np.arange(w.size), w)

    @property
    def n(self) -> int:
        return int(self.weights.size)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def a_max(self) -> float:
        return float(self.weights.max())

    @property
    def positive(self) -> np.ndarray:
        return self.weights > 0

    def lp_norm(self, f: np.ndarray, p: float) -> np.ndarray:
        """‖f‖_{L^p(ν)} langs as 0; p = inf is het maximum over atomen met positief gewicht."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n:
            raise PreconditionError(f"Verwacht {self.n} rijen, kreeg {f.shape[0]}")
        if math.isinf(p):
            return np.abs(f[self.positive]).max(axis=0)
        w = self.weights.reshape((-1,) + (1,) * (f.ndim - 1))
        if p == 2:
            return np.sqrt(np.sum(w * f * f, axis=0))
        if p == 1:
            return np.sum(w * np.abs(f), axis=0)
        return np.sum(w * np.abs(f) ** p, axis=0) ** (1.0 / p)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        w = self.weights.reshape((-1,) + (1,) * (np.ndim(f) - 1))
        return np.sum(w * np.asarray(f) * np.asarray(g), axis=0)


def mixed_norm(B: np.ndarray, measure: DiscreteMeasure, p: float) -> float:
    """‖B‖_{ℓ1, L^p(ν)} = Σ_k ‖B_k‖_{L^p(ν)}."""
    B = np.asarray(B, dtype=float)
    if not 1.0 <= p <= 2.0:
        raise PreconditionError(f"p moet in [1, 2] liggen, kreeg {p!r}")
    if B.ndim != 2 or B.shape[0] != measure.n:
        raise PreconditionError(f"B heeft vorm {B.shape}, verwacht ({measure.n}, K)")
    if B.shape[1] == 0:
        return 0.0
    return float(np.sum(measure.lp_norm(B, p)))


def dual_unit(f: ArrayLike, measure: DiscreteMeasure, p: float) -> np.ndarray:
    """v(f) = sign(f)|f|^{p−1}/‖f‖_p^{p−1}, zodat ‖v(f)‖_{L^q(ν)} = 1."""
    f = np.asarray(f, dtype=float)
    q = conjugate(p)
    norm = float(measure.lp_norm(f, p))
    if norm == 0.0:
        return np.full(f.shape, measure.mass ** (-1.0 / q) if not math.isinf(q) else 1.0)
    if p == 1.0:
        return np.sign(f)
    return np.sign(f) * np.abs(f) ** (p - 1.0) / norm ** (p - 1.0)


@dataclass(frozen=True, eq=False)
class SignalSet:
    data: np.ndarray
    measure: DiscreteMeasure

    def __post_init__(self):
        Y = np.asarray(self.data, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != self.measure.n:
            raise PreconditionError(f"Signalen hebben vorm {Y.shape}, verwacht ({self.measure.n}, T)")
        if not np.all(np.isfinite(Y)):
            raise PreconditionError("Signalen bevatten niet-eindige waarden")
        object.__setattr__(self, "data", _frozen(Y))

    @property
    def T(self) -> int:
        return int(self.data.shape[1])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.data, columns=[f"y_{t}" for t in range(self.T)])
        df.insert(0, "z", self.measure.indices)
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, measure: DiscreteMeasure) -> "SignalSet":
        df = df.sort_values("z").reset_index(drop=True)
        cols = sorted([c for c in df.columns if c.startswith("y_")], key=lambda c: int(c[2:]))
        return cls(df[cols].to_numpy(dtype=float), measure)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    B: np.ndarray
    theta: np.ndarray
    capacity: Optional[int] = None

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        th = np.asarray(self.theta, dtype=float).ravel()
        if B.ndim != 2 or B.shape[1] != th.size:
            raise PreconditionError(f"B heeft vorm {B.shape} maar ϑ heeft {th.size} atomen")
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "theta", _frozen(th))
        if self.capacity is not None and self.support.size > self.capacity:
            raise PreconditionError(f"|support|={self.support.size} > capaciteit {self.capacity}")

    @property
    def K(self) -> int:
        return int(self.theta.size)

    @property
    def n(self) -> int:
        return int(self.B.shape[0])

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.B != 0, axis=0))

    def to_frame(self, measure: Optional[DiscreteMeasure] = None) -> pd.DataFrame:
        """Eén rij per atoom k; kolom b_<z> per atoom z van de maat (zonder maat z = 0..n-1)."""
        labels = np.arange(self.n) if measure is None else measure.indices
        if len(labels) != self.n:
            raise PreconditionError(f"Maat heeft {len(labels)} atomen, B heeft {self.n} rijen")
        df = pd.DataFrame(self.B.T, columns=[f"b_{z}" for z in labels])
        df.insert(0, "theta", self.theta)
        df.insert(0, "k", np.arange(self.K))
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "MixtureParams":
        df = df.sort_values("k").reset_index(drop=True)
        cols = sorted([c for c in df.columns if c.startswith("b_")], key=lambda c: int(c[2:]))
        return cls(df[cols].to_numpy(dtype=float).T, df["theta"].to_numpy(dtype=float))


def _prediction(params: MixtureParams, dictionary) -> np.ndarray:
    if params.K == 0:
        return np.zeros((params.n, dictionary.T))
    return params.B @ dictionary.normalized(params.theta)


def synthesize(
    params: MixtureParams,
    dictionary,
    measure: DiscreteMeasure,
    noise: Optional[np.ndarray] = None,
) -> SignalSet:
    """Y = B Φ(ϑ) + W met genormaliseerde features."""
    if params.n != measure.n:
        raise PreconditionError(f"B heeft {params.n} rijen, maat heeft {measure.n} atomen")
    if params.K:
        dictionary.domain.check(params.theta)
    Y = _prediction(params, dictionary)
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != Y.shape:
            raise PreconditionError(f"Ruis heeft vorm {noise.shape}, verwacht {Y.shape}")
        Y = Y + noise
    return SignalSet(Y, measure)


def prediction_error(
    est: MixtureParams,
    truth: MixtureParams,
    dictionary,
    measure: DiscreteMeasure,
) -> float:
    """R̂_T = ν(𝒵)^{-1/2} ‖B̂Φ(ϑ̂) − B*Φ(ϑ*)‖_{L_T}."""
    if est.n != measure.n or truth.n != measure.n:
        raise PreconditionError("Aantal signalen past niet bij de maat")
    diff = _prediction(est, dictionary) - _prediction(truth, dictionary)
    sq = float(np.dot(measure.weights, np.sum(diff * diff, axis=1)))
    return math.sqrt(max(sq, 0.0) / measure.mass)
