"""Config-gedreven experimenten: certificaatrapport, losse trials en Monte-Carlo-studies."""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

import noise_tails as nt
from catalog import DICTIONARY_KINDS, LIMIT_KINDS
from certificates import (
    DERIVATIVE,
    INTERPOLATING,
    A_inf,
    CertificateConstants,
    build_certificate,
    certificate_constants,
    certificate_norm,
    delta_search,
    equispaced_theta,
    required_separation,
    thresholds,
    verify_assumptions,
)
from dictionary import Dictionary, build_dictionary
from kernel_geometry import DEFAULT_GRID_STEP, KernelModel, LimitKernelSpec, model_for, proximity
from measure_model import DiscreteMeasure, MixtureParams, conjugate, prediction_error, synthesize
from solver import SolverConfig, solve
from utils_offgrid import (
    CertificateInfeasibleError,
    ConditioningError,
    PreconditionError,
    frame_to_csv,
    get_logger,
    rows_to_df,
)

logger = get_logger("experiments")


# -------------------- Config --------------------
def _section(cfg: Dict[str, Any], name: str) -> Dict[str, Any]:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise PreconditionError(f"Config-sectie [{name}] moet een tabel zijn, kreeg {type(sec).__name__}")
    return sec


def _int_list(values: Any, name: str) -> Tuple[int, ...]:
    if isinstance(values, (int, float)):
        values = [values]
    out = tuple(int(v) for v in values)
    if not out:
        raise PreconditionError(f"{name} mag niet leeg zijn")
    return out


@dataclass(frozen=True)
class DictionarySpec:
    kind: str = "gaussian_location"
    T: int = 256
    domain: Tuple[float, float] = (0.1, 0.9)
    params: Dict[str, Any] = field(default_factory=dict)
    domain_inf: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in DICTIONARY_KINDS:
            raise PreconditionError(f"Onbekende dictionary kind {self.kind!r}; kies uit {sorted(DICTIONARY_KINDS)}")

    def build(self, T: Optional[int] = None) -> Dictionary:
        cfg: Dict[str, Any] = {"kind": self.kind, "T": int(T or self.T), "domain": list(self.domain),
                               "params": dict(self.params)}
        if self.domain_inf is not None:
            cfg["domain_inf"] = list(self.domain_inf)
        return build_dictionary(cfg)


@dataclass(frozen=True)
class LimitSpec:
    kind: str = "auto"

    def resolve(self, dict_kind: str) -> str:
        kind = LIMIT_KINDS[dict_kind] if self.kind == "auto" else self.kind
        if kind not in ("gaussian", "self"):
            raise PreconditionError(f"Onbekende limietkernel {kind!r}; kies 'gaussian' of 'self'")
        if kind == "gaussian" and dict_kind != "gaussian_location":
            raise PreconditionError(f"Gaussische limiet vereist gaussian_location, kreeg {dict_kind!r}")
        return kind

    def build(self, model: KernelModel, grid_step: float) -> LimitKernelSpec:
        if self.resolve(model.dictionary.kind) == "gaussian":
            return LimitKernelSpec.gaussian(float(model.dictionary.sigma))
        return LimitKernelSpec.from_model(model, grid_step)


@dataclass(frozen=True)
class MeasureSpec:
    n: int = 4
    weights: Optional[Tuple[float, ...]] = None

    def build(self, n: Optional[int] = None) -> DiscreteMeasure:
        n = int(n or self.n)
        if self.weights is None:
            return DiscreteMeasure.uniform(n)
        w = np.resize(np.asarray(self.weights, dtype=float), n)
        return DiscreteMeasure.from_weights(w)


@dataclass(frozen=True)
class TruthSpec:
    s: int = 2
    theta: Optional[Tuple[float, ...]] = None
    spacing: Optional[float] = None
    amplitudes: Tuple[float, ...] = (1.0,)
    separation_multiplier: float = 4.0

    def __post_init__(self):
        if self.separation_multiplier < 1:
            raise PreconditionError(f"separation_multiplier moet >= 1 zijn, kreeg {self.separation_multiplier!r}")
        if self.s < 1:
            raise PreconditionError(f"s moet >= 1 zijn, kreeg {self.s!r}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    delta_T: float = 1.0
    delta_T_power: float = 0.0
    C4_prime: float = 1.0

    def delta(self, T: int) -> float:
        return self.delta_T * float(T) ** (-self.delta_T_power)


@dataclass(frozen=True)
class SolverSpec:
    K_max: Optional[int] = None
    kappa: Optional[float] = None
    kappa_min: float = 1e-8
    insertion_grid_step: float = DEFAULT_GRID_STEP
    max_outer_iters: int = 50
    max_inner_iters: int = 2000
    tol_obj: float = 1e-12
    tol_dual: float = 1e-3
    refine: bool = True


@dataclass(frozen=True)
class CertificateSpec:
    r: float = 0.5
    rho: Union[str, float] = "auto"
    u_fraction: float = 0.5
    grid_step: float = 0.01
    delta_grid_step: float = DEFAULT_GRID_STEP
    restarts: int = 64

    def __post_init__(self):
        if not 0 < self.u_fraction < 1:
            raise PreconditionError(f"u_fraction moet in (0, 1) liggen, kreeg {self.u_fraction!r}")


@dataclass(frozen=True)
class StudySpec:
    p: int = 2
    tau: Union[str, float] = "T"
    kappa_constant: Union[str, float] = "theory"
    T_sweep: Tuple[int, ...] = ()
    s_sweep: Tuple[int, ...] = ()
    n_sweep: Tuple[int, ...] = ()
    replicates: int = 1
    seed: int = 0
    bound_slack: float = 0.05

    def __post_init__(self):
        if self.p not in (1, 2):
            raise PreconditionError(f"study.p moet 1 of 2 zijn, kreeg {self.p!r}")
        if self.replicates < 1:
            raise PreconditionError(f"replicates moet >= 1 zijn, kreeg {self.replicates!r}")

    def tau_for(self, T: int) -> float:
        return float(T) if self.tau == "T" else float(self.tau)


@dataclass(frozen=True)
class ExperimentConfig:
    dictionary: DictionarySpec
    limit: LimitSpec
    measure: MeasureSpec
    truth: TruthSpec
    noise: NoiseSpec
    solver: SolverSpec
    certificate: CertificateSpec
    study: StudySpec

    @classmethod
    def from_dict(cls, cfg: Dict[str, Any]) -> "ExperimentConfig":
        try:
            d = _section(cfg, "dictionary")
            dspec = DictionarySpec(
                kind=d.get("kind", "gaussian_location"),
                T=int(d.get("T", 256)),
                domain=tuple(float(x) for x in d.get("domain", (0.1, 0.9))),
                params=dict(d.get("params", {})),
                domain_inf=tuple(float(x) for x in d["domain_inf"]) if "domain_inf" in d else None,
            )
            m = _section(cfg, "measure")
            t = _section(cfg, "truth")
            n = _section(cfg, "noise")
            so = _section(cfg, "solver")
            c = _section(cfg, "certificate")
            st = _section(cfg, "study")
            return cls(
                dictionary=dspec,
                limit=LimitSpec(kind=_section(cfg, "limit").get("kind", "auto")),
                measure=MeasureSpec(
                    n=int(m.get("n", 4)),
                    weights=tuple(float(w) for w in m["weights"]) if "weights" in m else None,
                ),
                truth=TruthSpec(
                    s=int(t.get("s", 2)),
                    theta=tuple(float(x) for x in t["theta"]) if "theta" in t else None,
                    spacing=float(t["spacing"]) if "spacing" in t else None,
                    amplitudes=tuple(float(a) for a in t.get("amplitudes", (1.0,))),
                    separation_multiplier=float(t.get("separation_multiplier", 4.0)),
                ),
                noise=NoiseSpec(
                    sigma=float(n.get("sigma", 0.0)),
                    delta_T=float(n.get("delta_T", 1.0)),
                    delta_T_power=float(n.get("delta_T_power", 0.0)),
                    C4_prime=float(n.get("C4_prime", 1.0)),
                ),
                solver=SolverSpec(
                    K_max=int(so["K_max"]) if "K_max" in so else None,
                    kappa=float(so["kappa"]) if "kappa" in so else None,
                    kappa_min=float(so.get("kappa_min", 1e-8)),
                    insertion_grid_step=float(so.get("insertion_grid_step", DEFAULT_GRID_STEP)),
                    max_outer_iters=int(so.get("max_outer_iters", 50)),
                    max_inner_iters=int(so.get("max_inner_iters", 2000)),
                    tol_obj=float(so.get("tol_obj", 1e-12)),
                    tol_dual=float(so.get("tol_dual", 1e-3)),
                    refine=bool(so.get("refine", True)),
                ),
                certificate=CertificateSpec(
                    r=float(c.get("r", 0.5)),
                    rho=c.get("rho", "auto") if c.get("rho", "auto") == "auto" else float(c["rho"]),
                    u_fraction=float(c.get("u_fraction", 0.5)),
                    grid_step=float(c.get("grid_step", 0.01)),
                    delta_grid_step=float(c.get("delta_grid_step", DEFAULT_GRID_STEP)),
                    restarts=int(c.get("restarts", 64)),
                ),
                study=StudySpec(
                    p=int(st.get("p", 2)),
                    tau=st.get("tau", "T") if st.get("tau", "T") == "T" else float(st["tau"]),
                    kappa_constant=(st.get("kappa_constant", "theory") if st.get("kappa_constant", "theory") == "theory"
                                    else float(st["kappa_constant"])),
                    T_sweep=_int_list(st.get("T_sweep", [dspec.T]), "study.T_sweep"),
                    s_sweep=_int_list(st.get("s_sweep", [int(t.get("s", 2))]), "study.s_sweep"),
                    n_sweep=_int_list(st.get("n_sweep", [int(m.get("n", 4))]), "study.n_sweep"),
                    replicates=int(st.get("replicates", 1)),
                    seed=int(st.get("seed", 0)),
                    bound_slack=float(st.get("bound_slack", 0.05)),
                ),
            )
        except PreconditionError:
            raise
        except (TypeError, KeyError, ValueError) as e:
            raise PreconditionError(f"Ongeldige config: {e}") from e

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        if seed is None:
            return self
        return replace(self, study=replace(self.study, seed=int(seed)))


# -------------------- Certificaat-opzet --------------------
@dataclass
class CertificateSetup:
    """Alles wat uit kernel en limiet volgt voor één (T, s)."""
    limit: LimitKernelSpec
    V_T: float
    V1: float
    V2: float
    rho_T: float
    rho: float
    r: float
    H1: float
    H2: float
    u_inf: float
    u_T: float
    delta_hat: float
    separation: float
    constants: Optional[CertificateConstants]
    hyp_prop1: bool
    hyp_prop2: bool
    grid_step: float
    failures: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.constants is not None and self.hyp_prop1 and self.hyp_prop2 and not self.failures


def certificate_setup(model: KernelModel, config: ExperimentConfig, s: int) -> CertificateSetup:
    cs = config.certificate
    grid_step = cs.delta_grid_step
    limit = config.limit.build(model, grid_step)
    prox = proximity(model, limit, grid_step)
    rho = max(prox.rho_T, 1.0) if cs.rho == "auto" else float(cs.rho)
    failures: List[Tuple[str, str]] = []
    H1 = H2 = u_inf = math.nan
    constants = None
    try:
        H1, H2 = thresholds(limit, cs.r, rho)
        u_inf = cs.u_fraction * H2
        constants = certificate_constants(limit, cs.r, rho, u_inf, u_inf + (s - 1) * prox.V_T)
    except CertificateInfeasibleError as e:
        logger.error("Certificaat niet haalbaar: %s", e)
        failures.append(("certificate_constants", str(e)))
    u_T = u_inf + (s - 1) * prox.V_T
    hyp1 = bool(
        constants is not None
        and prox.V_T <= H1
        and (s - 1) * prox.V_T <= H2 - u_inf
        and prox.rho_T <= rho
        and cs.r < 1.0 / math.sqrt(2.0 * limit.L[(2, 0)])
    )
    hyp2 = bool(constants is not None and u_inf < 1.0 / 6.0 and prox.V_T <= 1.0 and u_T <= 1.0 / 6.0)
    delta_hat = math.inf
    if constants is not None:
        delta_hat = delta_search(model, u_inf, s, grid_step, restarts=cs.restarts, seed=config.study.seed)
    sep = required_separation(cs.r, prox.rho_T, delta_hat)
    if not math.isfinite(sep) and s > 1:
        failures.append(("delta_search", f"geen δ gevonden met A_inf <= {u_inf:.4g} voor s={s}"))
    return CertificateSetup(
        limit=limit, V_T=prox.V_T, V1=prox.V1, V2=prox.V2, rho_T=prox.rho_T, rho=rho, r=cs.r,
        H1=H1, H2=H2, u_inf=u_inf, u_T=u_T, delta_hat=delta_hat, separation=sep, constants=constants,
        hyp_prop1=hyp1, hyp_prop2=hyp2, grid_step=prox.grid_step, failures=failures,
    )


def _min_separation(model: KernelModel, theta: np.ndarray) -> float:
    if theta.size < 2:
        return math.inf
    return float(np.min(np.diff(np.sort(model.arclength(theta)))))


def truth_theta(model: KernelModel, truth: TruthSpec, s: int, separation: float) -> np.ndarray:
    """ϑ* uit de config, of equidistant in 𝔡_T met multiplier × vereiste scheiding."""
    if truth.theta is not None:
        th = model.domain.check(np.sort(np.asarray(truth.theta, dtype=float)))
        if th.size != s:
            raise PreconditionError(f"truth.theta heeft {th.size} atomen, verwacht s={s}")
        return th
    if s == 1:
        return np.array([model.domain.mid])
    spacing = truth.spacing if truth.spacing is not None else truth.separation_multiplier * separation
    if not math.isfinite(spacing):
        raise PreconditionError("Geen eindige scheiding bekend; zet truth.spacing of truth.theta")
    return equispaced_theta(model, s, spacing)


def truth_weights(truth: TruthSpec, n: int, s: int, seed: int) -> np.ndarray:
    amps = np.resize(np.asarray(truth.amplitudes, dtype=float), s)
    rng = np.random.default_rng([int(seed), int(s), int(n)])
    return amps[None, :] * rng.uniform(0.5, 1.5, size=(n, s))


# -------------------- Certificaatrapport --------------------
@dataclass
class CertificateReport:
    diagnostics: pd.DataFrame
    verification: pd.DataFrame
    passed: bool

    def to_csv(self) -> str:
        return frame_to_csv(self.diagnostics) + "\n" + frame_to_csv(self.verification)


def _diag(rows: List[Dict[str, Any]], quantity: str, value: float, grid_step: float = math.nan, note: str = "") -> None:
    rows.append({"quantity": quantity, "value": float(value), "grid_step": grid_step, "note": note})


def run_certificate_report(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> CertificateReport:
    s, n, p = config.truth.s, config.measure.n, config.study.p
    q = conjugate(p)
    dictionary = config.dictionary.build()
    model = model_for(dictionary)
    measure = config.measure.build()
    setup = certificate_setup(model, config, s)
    cs = config.certificate

    rows: List[Dict[str, Any]] = []
    gs = setup.grid_step
    for name, val in (("V_T", setup.V_T), ("V1", setup.V1), ("V2", setup.V2), ("rho_T", setup.rho_T)):
        _diag(rows, name, val, gs)
    _diag(rows, "rho", setup.rho)
    _diag(rows, "r", setup.r)
    if math.isfinite(setup.H1):
        _diag(rows, "eps_inf(r/rho)", setup.limit.eps(setup.r / setup.rho), setup.limit.grid_step or math.nan)
        _diag(rows, "nu_inf(rho*r)", setup.limit.nu(setup.r * setup.rho), setup.limit.grid_step or math.nan)
    for (i, j), val in sorted(setup.limit.L.items()):
        _diag(rows, f"L{i}{j}", val, setup.limit.grid_step or math.nan)
    _diag(rows, "L3", setup.limit.L3, setup.limit.grid_step or math.nan)
    _diag(rows, "m_g", setup.limit.m_g, setup.limit.grid_step or math.nan)
    for name, val in (("H1", setup.H1), ("H2", setup.H2), ("u_inf", setup.u_inf), ("u_T", setup.u_T)):
        _diag(rows, name, val)
    _diag(rows, "delta_hat", setup.delta_hat, cs.delta_grid_step)
    _diag(rows, "required_separation", setup.separation, cs.delta_grid_step)
    _diag(rows, "diam", model.diameter)
    _diag(rows, "hyp_prop1", float(setup.hyp_prop1))
    _diag(rows, "hyp_prop2", float(setup.hyp_prop2))
    for name, msg in setup.failures:
        _diag(rows, "failure", math.nan, note=f"{name}: {msg}")

    verification = pd.DataFrame(columns=["point", "assumption", "region", "theta", "margin", "pass"])
    passed = False
    if setup.constants is not None:
        cc = setup.constants
        for name in ("C_N", "C_N_prime", "C_F", "C_B", "c_N", "c_F", "c_B"):
            _diag(rows, name, getattr(cc, name))
        tc = nt.event_constants(cc, setup.limit.L[(2, 2)], setup.limit.L3, C4_prime=config.noise.C4_prime)
        _diag(rows, "C_cal", tc.C_cal)
        _diag(rows, "C0", tc.C0)
        try:
            theta_star = truth_theta(model, config.truth, s, setup.separation)
        except PreconditionError as e:
            _diag(rows, "failure", math.nan, note=f"truth_theta: {e}")
            theta_star = None
        if theta_star is not None:
            sep = _min_separation(model, theta_star)
            _diag(rows, "separation", sep)
            if s > 1 and not sep > setup.separation and math.isfinite(setup.separation):
                raise PreconditionError(
                    f"Atomen te dicht: scheiding {sep:.4g} <= vereist {setup.separation:.4g}"
                )
            _diag(rows, "A_inf", A_inf(model, theta_star))
            rng = np.random.default_rng([config.study.seed, s, n])
            V = rng.standard_normal((n, s))
            V = V / measure.lp_norm(V, q)[None, :]
            try:
                pair = (
                    build_certificate(model, theta_star, V, INTERPOLATING, measure=measure, q=q),
                    build_certificate(model, theta_star, V, DERIVATIVE, measure=measure, q=q),
                )
                _diag(rows, "sc_estimate", pair[0].sc_estimate)
                _diag(rows, "certificate_norm", certificate_norm(pair[0], measure))
                report = verify_assumptions(pair, model, measure, q, setup.r, cc, cs.grid_step)
                verification = report.to_frame()
                passed = report.passed and setup.certified
            except ConditioningError as e:
                logger.error("Certificaat geweigerd: %s", e)
                _diag(rows, "failure", e.estimate, note=f"build_certificate: {e}")

    diagnostics = rows_to_df(rows)
    logger.info("Certificaatrapport: %s", "alles geslaagd" if passed else "niet alles geslaagd")
    result = CertificateReport(diagnostics, verification, passed)
    if out_dir is not None:
        out = Path(out_dir)
        frame_to_csv(diagnostics, out / "certificate_diagnostics.csv")
        frame_to_csv(verification, out / "certificate_verification.csv")
    return result


# -------------------- Trials --------------------
@dataclass(frozen=True, eq=False)
class TrialContext:
    """Alles wat per sweeppunt vastligt; picklebaar voor de worker-pool."""
    T: int
    s: int
    n: int
    p: int
    dictionary: Dictionary
    measure: DiscreteMeasure
    truth: MixtureParams
    noise: nt.NoiseModel
    solver: SolverConfig
    kappa: float
    threshold: float
    bound: float
    tau: float
    failure_prob: float
    rate_ref: float
    certified: bool
    grid_step: float
    bound_slack: float


@dataclass(frozen=True)
class TrialResult:
    rep: int
    R_hat: float
    bound: float
    M0: float
    M1: float
    M2: float
    event_ok: bool
    kappa: float
    runtime_ms: int
    K_hat: int
    solver_warning: bool
    bound_violation: bool

    def to_row(self, include_runtime: bool = True) -> Dict[str, Any]:
        row = {
            "rep": self.rep, "R_hat": self.R_hat, "bound": self.bound, "M0": self.M0, "M1": self.M1,
            "M2": self.M2, "event_ok": self.event_ok, "kappa": self.kappa, "K_hat": self.K_hat,
            "solver_warning": self.solver_warning, "bound_violation": self.bound_violation,
        }
        if include_runtime:
            row["runtime_ms"] = self.runtime_ms
        return row


def prepare(config: ExperimentConfig, T: Optional[int] = None, s: Optional[int] = None,
            n: Optional[int] = None) -> TrialContext:
    T = int(T or config.dictionary.T)
    s = int(s or config.truth.s)
    n = int(n or config.measure.n)
    p, st = config.study.p, config.study
    dictionary = config.dictionary.build(T)
    model = model_for(dictionary)
    measure = config.measure.build(n)
    setup = certificate_setup(model, config, s)
    if setup.constants is None:
        raise CertificateInfeasibleError("; ".join(msg for _, msg in setup.failures))
    L22 = setup.limit.L[(2, 2)]
    C_cal = None
    if st.kappa_constant != "theory":
        C_cal = nt.implied_event_constant(p, float(st.kappa_constant), L22)
    tc = nt.event_constants(setup.constants, L22, setup.limit.L3, C_cal=C_cal, C4_prime=config.noise.C4_prime)

    theta_star = truth_theta(model, config.truth, s, setup.separation)
    certified = setup.certified and _min_separation(model, theta_star) > setup.separation
    if not certified:
        logger.info("T=%d s=%d: hypothesen niet geverifieerd; bound wordt alleen gerapporteerd", T, s)
    truth = MixtureParams(truth_weights(config.truth, n, s, st.seed), theta_star)

    delta_T = config.noise.delta(T)
    tau = st.tau_for(T)
    sigma = config.noise.sigma
    if config.solver.kappa is not None:
        kappa = float(config.solver.kappa)
    elif p == 2:
        C1 = tc.C1 if st.kappa_constant == "theory" else float(st.kappa_constant)
        kappa = nt.kappa_p2(tau, n, sigma, delta_T, measure.a_max, measure.mass, C1)
    else:
        C3 = tc.C3 if st.kappa_constant == "theory" else float(st.kappa_constant)
        kappa = nt.kappa_p1(tau, sigma, delta_T, measure.mass, C3)
    kappa = max(kappa, config.solver.kappa_min)

    diam = model.diameter
    if p == 2:
        failure = nt.failure_prob_p2(tau, n, diam)
        logger.info("failure_prob_p2(τ=%.4g, n=%d, diam=%.4g) = %.4g", tau, n, diam, failure)
    else:
        failure = nt.failure_prob_p1(tau, n, diam, C4=tc.C4)
    sv = config.solver
    return TrialContext(
        T=T, s=s, n=n, p=p, dictionary=dictionary, measure=measure, truth=truth,
        noise=nt.NoiseModel(sigma, delta_T, st.seed),
        solver=SolverConfig(
            kappa=kappa, p=p, K_max=sv.K_max or s + 3, insertion_grid_step=sv.insertion_grid_step,
            max_outer_iters=sv.max_outer_iters, max_inner_iters=sv.max_inner_iters,
            tol_obj=sv.tol_obj, tol_dual=sv.tol_dual, refine=sv.refine,
        ),
        kappa=kappa,
        threshold=tc.C_cal * kappa * measure.mass,
        bound=tc.C0 * math.sqrt(s) * measure.mass ** (1.0 / p) * kappa,
        tau=tau,
        failure_prob=failure,
        rate_ref=nt.reference_rate(p, sigma, delta_T, s, n, tau),
        certified=certified,
        grid_step=DEFAULT_GRID_STEP,
        bound_slack=st.bound_slack,
    )


def run_trial(context: Union[TrialContext, ExperimentConfig], rep: int) -> TrialResult:
    """synthese → solve → R̂ → M_0..M_2 → event-check; deterministisch in (seed, rep)."""
    t0 = time.perf_counter()
    ctx = prepare(context) if isinstance(context, ExperimentConfig) else context
    W = nt.sample_noise(ctx.noise, ctx.n, ctx.T, replicate=rep)
    Y = synthesize(ctx.truth, ctx.dictionary, ctx.measure, W)
    est, trace = solve(Y, ctx.dictionary, ctx.measure, ctx.solver)
    R_hat = prediction_error(est, ctx.truth, ctx.dictionary, ctx.measure)
    M = nt.suprema(W, ctx.dictionary, ctx.measure, conjugate(ctx.p), ctx.grid_step)
    event_ok = all(m <= ctx.threshold for m in M)
    violation = bool(ctx.certified and event_ok and R_hat > ctx.bound * (1.0 + ctx.bound_slack))
    if violation:
        logger.error("Bound geschonden: R̂=%.6g > %.6g (T=%d, s=%d, n=%d, rep=%d)",
                     R_hat, ctx.bound, ctx.T, ctx.s, ctx.n, rep)
    return TrialResult(
        rep=int(rep), R_hat=R_hat, bound=ctx.bound, M0=M[0], M1=M[1], M2=M[2], event_ok=event_ok,
        kappa=ctx.kappa, runtime_ms=int(round(1000 * (time.perf_counter() - t0))), K_hat=int(est.K),
        solver_warning=trace.warning is not None and not trace.converged, bound_violation=violation,
    )


# -------------------- Studies --------------------
_WORKER_CONTEXT: Optional[TrialContext] = None


def _init_worker(context: TrialContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _run_replicate(rep: int) -> TrialResult:
    assert _WORKER_CONTEXT is not None
    return run_trial(_WORKER_CONTEXT, rep)


def _replicates(context: TrialContext, R: int, threads: int) -> List[TrialResult]:
    if threads <= 1 or R == 1:
        return [run_trial(context, r) for r in range(R)]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(context,)) as pool:
        results = list(pool.map(_run_replicate, range(R)))
    return sorted(results, key=lambda r: r.rep)


@dataclass
class StudyResult:
    summary: pd.DataFrame
    replicates: pd.DataFrame
    plots: Dict[str, pd.DataFrame]


def _slopes(summary: pd.DataFrame) -> pd.Series:
    slope = pd.Series(math.nan, index=summary.index)
    for _, grp in summary.groupby(["s", "n"]):
        ok = grp[grp["median_R2"] > 0]
        if ok["T"].nunique() >= 2:
            fit = np.polyfit(np.log(ok["T"].to_numpy(float)), np.log(ok["median_R2"].to_numpy(float)), 1)
            slope.loc[grp.index] = float(fit[0])
    return slope


def _plot_frames(summary: pd.DataFrame, study: StudySpec) -> Dict[str, pd.DataFrame]:
    sweeps = {"T": study.T_sweep, "n": study.n_sweep, "s": study.s_sweep}
    axis = next((k for k in ("T", "n", "s") if len(sweeps[k]) > 1), "T")
    others = [k for k in ("T", "s", "n") if k != axis]
    plots: Dict[str, pd.DataFrame] = {}
    for key, grp in summary.groupby(others):
        name = f"plot_{axis}_" + "_".join(f"{o}{v}" for o, v in zip(others, key))
        grp = grp.sort_values(axis)
        plots[name] = pd.DataFrame({
            "x": grp[axis].to_numpy(float), "y": grp["median_R2"].to_numpy(float),
            "lo": grp["q10_R2"].to_numpy(float), "hi": grp["q90_R2"].to_numpy(float),
        })
    return plots


def run_study(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None, threads: int = 1) -> StudyResult:
    st = config.study
    points = [(T, s, n) for T in st.T_sweep for s in st.s_sweep for n in st.n_sweep]
    summary_rows: List[Dict[str, Any]] = []
    rep_rows: List[Dict[str, Any]] = []
    for i, (T, s, n) in enumerate(points, start=1):
        ctx = prepare(config, T, s, n)
        logger.info("Sweeppunt %d/%d: T=%d s=%d n=%d κ=%.4g (%d replicaties)", i, len(points), T, s, n,
                    ctx.kappa, st.replicates)
        results = _replicates(ctx, st.replicates, threads)
        R2 = np.array([r.R_hat ** 2 for r in results])
        summary_rows.append({
            "p": st.p, "T": T, "s": s, "n": n, "replicates": st.replicates, "kappa": ctx.kappa,
            "median_R2": float(np.median(R2)), "q10_R2": float(np.quantile(R2, 0.1)),
            "q90_R2": float(np.quantile(R2, 0.9)),
            "frac_event_ok": float(np.mean([r.event_ok for r in results])),
            "failure_prob": ctx.failure_prob,
            "bound_violations": int(sum(r.bound_violation for r in results)),
            "rate_ref": ctx.rate_ref,
        })
        for r in results:
            rep_rows.append({"T": T, "s": s, "n": n, **r.to_row(include_runtime=False)})
    summary = rows_to_df(summary_rows, sort_by=["T", "s", "n"])
    summary["slope"] = _slopes(summary)
    replicates = rows_to_df(rep_rows, sort_by=["T", "s", "n", "rep"])
    plots = _plot_frames(summary, st)
    if out_dir is not None:
        out = Path(out_dir)
        frame_to_csv(summary, out / "summary.csv")
        frame_to_csv(replicates, out / "replicates.csv")
        for name, df in plots.items():
            frame_to_csv(df, out / f"{name}.csv")
    return StudyResult(summary, replicates, plots)


def load_experiment(cfg: Dict[str, Any], seed: Optional[int] = None) -> ExperimentConfig:
    return ExperimentConfig.from_dict(cfg).with_seed(seed)


