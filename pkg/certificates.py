"""Separation, Gram matrices and dual certificates η(z,θ) = ⟨φ(θ), P(z)⟩ with their verification."""
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from kernel_geometry import DEFAULT_GRID_STEP, KernelModel, LimitKernelSpec
from measure_model import DiscreteMeasure
from utils_offgrid import (
    CertificateInfeasibleError,
    ConditioningError,
    PreconditionError,
    get_logger,
    rows_to_df,
)

logger = get_logger("certificates")

INTERPOLATING = "interpolating"
DERIVATIVE = "derivative"
SC_REFUSAL = 0.99
ANCHOR_TOL = 1e-9


def op_norm_inf(A: np.ndarray) -> float:
    """‖A‖_{op,ℓ∞} = max_k Σ_ℓ |A_kℓ|."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.abs(A).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class GramBundle:
    theta_star: np.ndarray
    G00: np.ndarray
    G10: np.ndarray
    G11: np.ndarray
    G20: np.ndarray
    G21: np.ndarray
    G12: np.ndarray
    Gamma: np.ndarray

    @property
    def s(self) -> int:
        return int(self.theta_star.size)


def gram_bundle(model: KernelModel, theta_star) -> GramBundle:
    th = model.domain.check(theta_star)
    F = model.covariant_features(th, orders=(0, 1, 2))
    G00, G10, G11 = F[0] @ F[0].T, F[1] @ F[0].T, F[1] @ F[1].T
    return GramBundle(
        theta_star=th,
        G00=G00,
        G10=G10,
        G11=G11,
        G20=F[2] @ F[0].T,
        G21=F[2] @ F[1].T,
        G12=F[1] @ F[2].T,
        Gamma=np.block([[G00, G10.T], [G10, G11]]),
    )


def A_inf(model: KernelModel, theta) -> float:
    gb = gram_bundle(model, theta)
    I = np.eye(gb.s)
    return max(
        op_norm_inf(I - gb.G00),
        op_norm_inf(I - gb.G11),
        op_norm_inf(I + gb.G20),
        op_norm_inf(gb.G10),
        op_norm_inf(gb.G10.T),
        op_norm_inf(gb.G12),
    )


def equispaced_theta(model: KernelModel, s: int, spacing: float) -> np.ndarray:
    """s atomen, uniform in arclengte met onderlinge afstand `spacing`, gecentreerd in Θ_T."""
    if s < 1:
        raise PreconditionError(f"s moet >= 1 zijn, kreeg {s!r}")
    grid = model.metric_grid()
    G_lo, G_hi = grid.arclength[0], grid.arclength[-1]
    span = (s - 1) * spacing
    if span > G_hi - G_lo:
        raise PreconditionError(
            f"{s} atomen met afstand {spacing:.4g} passen niet in diameter {G_hi - G_lo:.4g}"
        )
    G = 0.5 * (G_lo + G_hi) + (np.arange(s) - 0.5 * (s - 1)) * spacing
    return model.inverse_arclength(G)


def required_separation(r: float, rho_T: float, delta: float) -> float:
    return 2.0 * max(r, rho_T * delta)


def delta_search(
    model: KernelModel,
    u: float,
    s: int,
    grid_step: float = DEFAULT_GRID_STEP,
    *,
    restarts: int = 64,
    slides: int = 9,
    seed: int = 0,
) -> float:
    """Bovenschatting van δ_T(u,s): kleinste δ op een dalende reeks waarvoor de slechtste
    gevonden configuratie in Θ^s_δ nog A_inf ≤ u heeft. +inf als zelfs δ = diam/(s−1) faalt."""
    if u <= 0:
        raise PreconditionError(f"u moet > 0 zijn, kreeg {u!r}")
    if s < 1:
        raise PreconditionError(f"s moet >= 1 zijn, kreeg {s!r}")
    if s == 1:
        return float(grid_step)
    grid = model.metric_grid(grid_step)
    G_lo, diam = grid.arclength[0], model.diameter
    ranks = np.arange(s)

    def feasible(delta: float, tag: int) -> bool:
        slack = diam - (s - 1) * delta
        if slack < 0:
            return False
        configs = [G_lo + off + ranks * delta for off in np.linspace(0.0, slack, slides)]
        rng = np.random.default_rng([seed, s, tag])
        for _ in range(restarts):
            configs.append(G_lo + np.sort(rng.uniform(0.0, slack, s)) + ranks * delta)
        for G in configs:
            if A_inf(model, model.inverse_arclength(G)) > u:
                return False
        return True

    delta = diam / (s - 1)
    if not feasible(delta, 0):
        logger.info("δ-zoektocht: zelfs δ=diam/(s−1)=%.4g faalt voor u=%.3g, s=%d", delta, u, s)
        return math.inf
    tag = 1
    passed = delta
    while True:
        trial = passed * 0.85
        if trial < grid_step or not feasible(trial, tag):
            break
        passed = trial
        tag += 1
    # lineaire verfijning tussen laatste succes en eerste falen
    trial = passed - grid_step
    while trial >= grid_step and feasible(trial, tag):
        passed = trial
        trial -= grid_step
        tag += 1
    logger.info("δ-schatting (grid %.3g): %.4g voor u=%.3g, s=%d", grid_step, passed, u, s)
    return float(passed)


def thresholds(limit: LimitKernelSpec, r: float, rho: float) -> Tuple[float, float]:
    """(H^(1)_∞(r,ρ), H^(2)_∞(r,ρ))."""
    if r <= 0 or rho < 1:
        raise PreconditionError(f"Vereist r > 0 en ρ >= 1, kreeg r={r!r}, ρ={rho!r}")
    eps = limit.eps(r / rho)
    nu = limit.nu(rho * r)
    if eps <= 0 or nu <= 0:
        raise CertificateInfeasibleError(f"ε_∞(r/ρ)={eps:.4g}, ν_∞(ρr)={nu:.4g}: certificaat niet haalbaar")
    L = limit.L
    H1 = min(0.5, L[(2, 0)], L[(2, 1)], nu / 10.0, eps / 10.0)
    H2 = min(
        1.0 / 6.0,
        8.0 * eps / (10.0 * (5.0 + 2.0 * L[(1, 0)])),
        8.0 * nu / (9.0 * (2.0 * L[(2, 0)] + 2.0 * L[(2, 1)] + 4.0)),
    )
    return H1, H2


@dataclass(frozen=True)
class CertificateConstants:
    C_N: float
    C_N_prime: float
    C_F: float
    C_B: float
    c_N: float
    c_F: float
    c_B: float
    r: float
    rho: float
    u_inf: float
    u_inf_prime: float

    def __post_init__(self):
        values = (self.C_N, self.C_N_prime, self.C_F, self.C_B, self.c_N, self.c_F, self.c_B, self.r, self.rho)
        if min(values) <= 0:
            raise PreconditionError(f"Certificaatconstanten moeten positief zijn: {values!r}")
        if self.C_F > 1:
            raise PreconditionError(f"C_F moet <= 1 zijn, kreeg {self.C_F!r}")


def certificate_constants(
    limit: LimitKernelSpec, r: float, rho: float, u_inf: float, u_inf_prime: Optional[float] = None
) -> CertificateConstants:
    L = limit.L
    if r >= 1.0 / math.sqrt(2.0 * L[(2, 0)]):
        raise CertificateInfeasibleError(f"r={r:.4g} moet kleiner zijn dan 1/√(2 L20)={1 / math.sqrt(2 * L[(2, 0)]):.4g}")
    thresholds(limit, r, rho)
    return CertificateConstants(
        C_N=limit.nu(rho * r) / 180.0,
        C_N_prime=0.625 * L[(2, 0)] + 0.125 * L[(2, 1)] + 0.5,
        C_F=limit.eps(r / rho) / 10.0,
        C_B=2.0,
        c_N=0.125 * L[(2, 0)] + 0.625 * L[(2, 1)] + 0.875,
        c_F=1.25 * L[(1, 0)] + 1.75,
        c_B=2.0,
        r=r,
        rho=rho,
        u_inf=u_inf,
        u_inf_prime=u_inf if u_inf_prime is None else u_inf_prime,
    )


# -------------------- certificaten --------------------
@dataclass(frozen=True, eq=False)
class Certificate:
    kind: str
    alpha: np.ndarray
    xi: np.ndarray
    theta_star: np.ndarray
    V: np.ndarray
    q: float
    gram: GramBundle
    sc_estimate: float

    def evaluate(self, model: KernelModel, theta, order: int = 0) -> np.ndarray:
        """η^{(order)}(z, θ) voor alle z; vorm (n, N)."""
        if order not in (0, 1, 2):
            raise PreconditionError(f"order moet 0, 1 of 2 zijn, kreeg {order!r}")
        th = model.domain.check(theta)
        F = model.features(th, order)
        A = model.covariant_features(self.theta_star, orders=(0, 1))
        return self.alpha @ (A[0] @ F.T) + self.xi @ (A[1] @ F.T)


def build_certificate(
    model: KernelModel,
    theta_star,
    V: np.ndarray,
    kind: str,
    *,
    measure: Optional[DiscreteMeasure] = None,
    q: float = 2.0,
) -> Certificate:
    if kind not in (INTERPOLATING, DERIVATIVE):
        raise PreconditionError(f"Onbekend certificaattype {kind!r}")
    gb = gram_bundle(model, theta_star)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[1] != gb.s:
        raise PreconditionError(f"V heeft {V.shape[1]} kolommen, verwacht s={gb.s}")
    if measure is not None:
        norms = measure.lp_norm(V, q)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise PreconditionError(f"Kolommen van V hebben geen eenheids-L^q-norm: {norms!r}")
    I = np.eye(gb.s)
    u11 = op_norm_inf(I - gb.G11)
    if u11 >= 1.0:
        raise ConditioningError("Γ^[1,1] niet (zeker) inverteerbaar", u11)
    try:
        c11 = cho_factor(gb.G11)
        X = cho_solve(c11, gb.G10)
        SC = gb.G00 - gb.G10.T @ X
        u_sc = op_norm_inf(I - SC)
        if u_sc >= SC_REFUSAL:
            raise ConditioningError("Schur-complement Γ_SC bijna singulier", u_sc)
        csc = cho_factor(SC)
    except LinAlgError as e:
        raise ConditioningError(f"Factorisatie faalt: {e}", float("inf")) from e
    Vbar = V.T
    if kind == INTERPOLATING:
        alpha = cho_solve(csc, Vbar)
        xi = -X @ alpha
    else:
        Y = cho_solve(c11, Vbar)
        alpha = -cho_solve(csc, gb.G10.T @ Y)
        xi = Y - X @ alpha
    return Certificate(kind, alpha.T, xi.T, gb.theta_star, V, float(q), gb, u_sc)


def eval_certificate(cert: Certificate, model: KernelModel, z: int, theta, order: int = 0):
    out = cert.evaluate(model, theta, order)[z]
    return float(out[0]) if np.ndim(theta) == 0 else out


def certificate_norm(cert: Certificate, measure: DiscreteMeasure) -> float:
    """‖P‖_{L_T} = (Σ_z a_z [α;ξ]_zᵀ Γ [α;ξ]_z)^{1/2}."""
    C = np.hstack([cert.alpha, cert.xi])
    per_z = np.einsum("zi,ij,zj->z", C, cert.gram.Gamma, C)
    return float(math.sqrt(max(float(np.dot(measure.weights, per_z)), 0.0)))


def star_norm(field: np.ndarray, measure: DiscreteMeasure, q: float) -> float:
    """‖f‖_{*,q} = max_k ‖f_k‖_{L^q(ν)}."""
    return float(np.max(measure.lp_norm(np.atleast_2d(field), q)))


def coefficient_bounds(u: float) -> Dict[str, float]:
    if not 0 <= u < 0.5:
        raise PreconditionError(f"Coëfficiëntgrenzen vereisen u < 1/2, kreeg {u!r}")
    return {
        "alpha": (1.0 - u) / (1.0 - 2.0 * u),
        "xi": u / (1.0 - 2.0 * u),
        "alpha_minus_V": u / (1.0 - 2.0 * u),
        "sc_inverse": (1.0 - u) / (1.0 - 2.0 * u),
    }


# -------------------- verificatie --------------------
@dataclass(frozen=True)
class VerificationRow:
    point: str
    assumption: str
    region: str
    theta: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    rows: Tuple[VerificationRow, ...]
    grid_step: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return rows_to_df([
            {"point": r.point, "assumption": r.assumption, "region": r.region,
             "theta": r.theta, "margin": r.margin, "pass": r.passed}
            for r in self.rows
        ])


def _worst(point: str, assumption: str, region: str, slack: np.ndarray, theta: np.ndarray) -> VerificationRow:
    if slack.size == 0:
        return VerificationRow(point, assumption, region, math.nan, math.inf, True)
    k = int(np.argmin(slack))
    return VerificationRow(point, assumption, region, float(theta[k]), float(slack[k]), bool(slack[k] >= 0))


def verify_assumptions(
    cert_pair: Tuple[Certificate, Certificate],
    model: KernelModel,
    measure: DiscreteMeasure,
    q: float,
    r: float,
    constants: CertificateConstants,
    grid_step: float = 0.01,
) -> VerificationReport:
    """Controleert de voorwaarden i–iv van het interpolerende certificaat (1) en i–iii van het
    afgeleide certificaat (2) op een 𝔡-grid."""
    interp, deriv = cert_pair
    s = interp.theta_star.size
    G_star = model.arclength(interp.theta_star)
    if s > 1 and np.min(np.diff(np.sort(G_star))) <= 2.0 * r:
        raise PreconditionError(
            f"Atomen niet 2r-gescheiden: min afstand {np.min(np.diff(np.sort(G_star))):.4g} <= {2 * r:.4g}"
        )
    grid = model.metric_grid(grid_step)
    th, G = grid.theta, grid.arclength
    D = G[:, None] - G_star[None, :]
    k = np.argmin(np.abs(D), axis=1)
    signed = D[np.arange(G.size), k]
    d = np.abs(signed)
    near = d <= r
    inner = near & (d > ANCHOR_TOL)
    far = ~near

    etaP = interp.evaluate(model, th, 0)
    etaQ = deriv.evaluate(model, th, 0)
    nP = measure.lp_norm(etaP, q)
    nPV = measure.lp_norm(etaP - interp.V[:, k], q)
    nQ = measure.lp_norm(etaQ, q)
    nQV = measure.lp_norm(etaQ - deriv.V[:, k] * (np.sign(signed) * d)[None, :], q)

    p = 1.0 if math.isinf(q) else q / (q - 1.0)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    scale = math.sqrt(s) * measure.mass ** (0.5 / p - 0.5 * inv_q)
    c = constants
    rows = [
        _worst("i", "1", "near", ((1.0 - c.C_N * d * d) - nP)[inner], th[inner]),
        _worst("ii", "1", "near", (c.C_N_prime * d * d - nPV)[inner], th[inner]),
        _worst("iii", "1", "far", ((1.0 - c.C_F) - nP)[far], th[far]),
        _worst("iv", "1", "global", np.array([c.C_B * scale - certificate_norm(interp, measure)]), np.array([math.nan])),
        _worst("i", "2", "near", (c.c_N * d * d - nQV)[inner], th[inner]),
        _worst("ii", "2", "far", (c.c_F - nQ)[far], th[far]),
        _worst("iii", "2", "global", np.array([c.c_B * scale - certificate_norm(deriv, measure)]), np.array([math.nan])),
    ]
    report = VerificationReport(tuple(rows), grid.step)
    for row in rows:
        if not row.passed:
            logger.error("Voorwaarde %s.%s (%s) faalt: marge %.3g bij θ=%.6g",
                         row.assumption, row.point, row.region, row.margin, row.theta)
    return report


def quadratic_decay_check(
    eta_norm: np.ndarray,
    dist: np.ndarray,
    *,
    r: float,
    delta: float,
    eps: Optional[float] = None,
    L: Optional[float] = None,
    tol: float = 1e-10,
) -> bool:
    """Conclusie van het kwadratisch-vervallemma op de gridpunten binnen de bal 𝔡 ≤ r.

    Zonder eps: deel (i), ‖η‖ ≤ (δ/2)𝔡². Met eps (en L): deel (ii), ‖η‖ ≤ 1 − ((ε−δ)/2)𝔡²;
    vereist dan δ < ε en r < L^{-1/2}.
    """
    eta_norm = np.asarray(eta_norm, dtype=float)
    dist = np.asarray(dist, dtype=float)
    ball = dist <= r
    if eps is None:
        return bool(np.all(eta_norm[ball] <= 0.5 * delta * dist[ball] ** 2 + tol))
    if not delta < eps:
        return False
    if L is not None and L > 0 and not r < L ** -0.5:
        return False
    return bool(np.all(eta_norm[ball] <= 1.0 - 0.5 * (eps - delta) * dist[ball] ** 2 + tol))


def decay_measurements(
    cert: Certificate,
    model: KernelModel,
    measure: DiscreteMeasure,
    k: int,
    r: float,
    grid_step: float = 0.01,
) -> Dict[str, object]:
    """Meet op de bal rond θ*_k de grootheden van deel (ii) voor een interpolerend certificaat:
    δ = sup ‖D̃₂η − V_k K^[0,2](θ*_k,·)‖, ε = inf −K^[0,2](θ*_k,·) en L = sup |K^[0,2](θ*_k,·)|."""
    grid = model.metric_grid(grid_step)
    anchor = np.array([cert.theta_star[k]])
    G0 = model.arclength(anchor)[0]
    # gridpunten in de bal plus de randpunten 𝔡 = r, geklemd op het domein
    G_edge = np.clip([G0 - r, G0 + r], grid.arclength[0], grid.arclength[-1])
    G = np.unique(np.concatenate([grid.arclength[np.abs(grid.arclength - G0) <= r], G_edge]))
    th = model.inverse_arclength(G)
    d = np.abs(G - G0)
    K02 = model.gram(anchor, th, 0, 2)[0]
    eta2 = cert.evaluate(model, th, 2)
    resid = measure.lp_norm(eta2 - cert.V[:, [k]] * K02[None, :], cert.q)
    return {
        "dist": d,
        "eta_norm": measure.lp_norm(cert.evaluate(model, th, 0), cert.q),
        "delta": float(np.max(resid)),
        "eps": float(np.min(-K02)),
        "L": float(np.max(np.abs(K02))),
    }
