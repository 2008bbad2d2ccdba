"""Convergence experiments on the log-normal diffusion toy problem."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .leastsq import _generator, jackknife_rms
from .multiindex import WeightSystem, enumerate_threshold_set
from .multilevel import (
    ContractViolation,
    LevelPiece,
    RecoveryResult,
    comp_account,
    lsq_regime,
    plan,
    plan_interp,
    rate_exponents,
    recover_ml_interp,
    recover_ml_lsq,
)
from .sparsegrid import interpolate_set, interpolation_regime, raw_point_count
from .spatial import ExactSolution, GalerkinSolution, ProblemConfig, SpatialHierarchy, h1_error_rule

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

METHODS = ("ml-lsq", "ml-interp", "single-level-lsq", "sparse-interp")


class CalibrationError(RuntimeError):
    pass


@dataclass
class WeightConfig:
    """Weights for b_j = c j^-theta with summability exponents p1 <= p2.

    Each system gets its own holomorphy parameter; with rho_first set, it is
    chosen so that rho_1 equals rho_first and xi1, xi2 are ignored.
    """

    p1: float = 0.45
    p2: float = 0.6
    eta: int = 2
    rho_first: float | None = 2.2
    xi1: float = 700.0
    xi2: float = 30.0

    def __post_init__(self):
        if not (0 < self.p1 <= self.p2 < 2 / 3):
            raise ValueError("need 0 < p1 <= p2 < 2/3 so that q1 <= q2 < 2")

    def holomorphy(self, problem: ProblemConfig) -> tuple[float, float]:
        if self.rho_first is None:
            return self.xi1, self.xi2
        unit = [WeightSystem.from_decay(problem.c, problem.theta, p, 1.0, self.eta).rho(1) for p in (self.p1, self.p2)]
        return self.rho_first / unit[0], self.rho_first / unit[1]

    def systems(self, problem: ProblemConfig) -> tuple[WeightSystem, WeightSystem]:
        xi1, xi2 = self.holomorphy(problem)
        ws1 = WeightSystem.from_decay(problem.c, problem.theta, self.p1, xi1, self.eta)
        ws2 = WeightSystem.from_decay(problem.c, problem.theta, self.p2, xi2, self.eta)
        return ws1, ws2

    @property
    def q1(self) -> float:
        return self.p1 / (1 - self.p1)

    @property
    def q2(self) -> float:
        return self.p2 / (1 - self.p2)


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    method: str = "ml-lsq"
    ladder: list[int] = field(default_factory=lambda: [2**e for e in range(6, 13)])
    n_mc: int = 256
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    mc_seed: int = 2024
    alpha: float | None = None
    variant: str = "bar"
    c_os: float = 2.0
    conservative_basis: bool = False
    reference: str = "exact"
    norm: str = "h1"
    single_level: int = 6
    ambient: str = "gaussian"
    output_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("budget ladder must be strictly increasing")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.reference not in ("exact", "galerkin"):
            raise ValueError("reference must be 'exact' or 'galerkin'")
        if self.norm not in ("h1", "l2"):
            raise ValueError("norm must be 'h1' or 'l2'")


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    prob = ProblemConfig(**data.pop("problem", {}))
    wts = WeightConfig(**data.pop("weights", {}))
    exp = data.pop("experiment", {})
    exp.update(data)
    return ExperimentConfig(problem=prob, weights=wts, **exp)


@dataclass
class RateReport:
    method: str
    budgets: list[int]
    median_error: list[float]
    median_stderr: list[float]
    rows: list[dict]
    slope: float
    slope_stderr: float
    slope_ci: tuple[float, float]
    alpha: float
    beta: float
    predicted_rate: float
    regime: str
    monotone_fraction: float
    violations: int
    passed: bool
    runtime: float
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        d = asdict(self)
        d["slope_ci"] = list(self.slope_ci)
        return json.dumps(d, indent=2)

    def errors_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "n", "seed", "error", "stderr", "comp", "points"])
        for r in self.rows:
            w.writerow([r["method"], r["n"], r["seed"], repr(r["error"]), repr(r["stderr"]), r["comp"], r["points"]])
        return buf.getvalue()


def predicted_rate(method: str, alpha: float, q1: float, q2: float) -> dict:
    """Predicted polynomial rate min(alpha, beta) of the chosen method with its regime tag."""
    delta, beta_lsq = rate_exponents(alpha, q1, q2)
    if method in ("ml-interp", "sparse-interp"):
        beta = (1 / q1 - 0.5) * alpha / (alpha + delta)
        regime = interpolation_regime(alpha, q1, q2)
    else:
        beta = beta_lsq
        regime = lsq_regime(alpha, q1, q2)
    return {"alpha": alpha, "beta": beta, "rate": min(alpha, beta), "regime": regime}


def _solution_model(cfg: ExperimentConfig, hier: SpatialHierarchy):
    field_ = cfg.problem.field()
    if cfg.reference == "galerkin":
        ref_hier = SpatialHierarchy(cfg.problem.K + 3, cfg.problem.n0, cfg.problem.r_sp)
        return GalerkinSolution(field_, ref_hier, cfg.problem.K + 3, cfg.problem.rhs)
    return ExactSolution(field_, cfg.problem.rhs, quad_level=max(cfg.problem.K + 1, 10))


def calibrate_alpha(cfg: ExperimentConfig, draws: int = 5, seed: int = 7, k_min: int = 4) -> float:
    """Mean slope of log2 |u(y0) - P_k u(y0)|_{H^1} over k_min..K for a few draws of y0."""
    K = cfg.problem.K
    if K < 6:
        raise CalibrationError("calibration needs K >= 6")
    hier = cfg.problem.hierarchy()
    model = ExactSolution(cfg.problem.field(), cfg.problem.rhs, quad_level=K + 2)
    xq, wq = h1_error_rule(hier, K + 1)
    Y0 = _generator(seed).standard_normal((draws, cfg.problem.J_a))
    du = model.derivative(xq, Y0)
    slopes = []
    for y, d in zip(Y0, du):
        errs = []
        for k in range(k_min, K + 1):
            P = hier.project(k, lambda x: model(x, y[None, :])[0])
            errs.append(math.sqrt(np.sum(wq * (d - P.derivative(xq)) ** 2)))
        errs = np.array(errs)
        if not np.all(errs > 0):
            raise CalibrationError("spatial errors vanish; the solution is resolved exactly (zero right-hand side?)")
        if np.any(np.diff(errs) >= 0):
            raise CalibrationError("spatial error does not decay monotonically")
        slopes.append(-np.polyfit(np.arange(k_min, K + 1), np.log2(errs), 1)[0])
    return float(np.mean(slopes))


class ErrorProbe:
    """Fixed Monte Carlo test set and reference derivatives (or values) on a fine rule."""

    def __init__(self, cfg: ExperimentConfig, hier: SpatialHierarchy, model):
        self.hier = hier
        self.norm = cfg.norm
        self.Y = _generator(cfg.mc_seed).standard_normal((cfg.n_mc, cfg.problem.J_a))
        self.xq, self.wq = h1_error_rule(hier, hier.max_level + 1)
        ref = model.derivative(self.xq, self.Y) if self.norm == "h1" else self._values(model)
        self.reference = ref * np.sqrt(self.wq)

    def _values(self, model):
        if isinstance(model, ExactSolution):
            # values at Gauss points are not dyadic; interpolate the exact solution on a fine level
            K = self.hier.max_level + 1
            fine = SpatialHierarchy(K, self.hier.n0, self.hier.order)
            nodal = model(fine.interior_nodes(K), self.Y)
            return (fine.basis_matrix(K, self.xq) @ nodal.T).T
        return model(self.xq, self.Y)

    def squared_errors(self, result: RecoveryResult) -> np.ndarray:
        if self.norm == "h1":
            approx = result.derivative(self.xq, self.Y)
        else:
            approx = result.values(self.xq, self.Y)
        return np.sum((approx * np.sqrt(self.wq) - self.reference) ** 2, axis=1)


def _single_level_lsq(n, cfg, ws1, ws2, alpha, q1, q2, hier, model, seed):
    """All of the budget on one spatial level: S_N(P_K v) with N = n / dim V_K."""
    from .leastsq import basis_size_for, build_density, draw_batch, estimate_tail_deviation, lsq_fit
    from .multiindex import first_by_weight

    K = cfg.single_level
    N = n // hier.dimension(K)
    m = basis_size_for(N, cfg.c_os, cfg.conservative_basis)
    if m < 1:
        raise ValueError(f"budget {n} too small for level {K}")
    ordered, logw = first_by_weight([(ws1, 1.0)], 8 * m)
    dens = build_density(ordered, m, 8 * m, log_weights=logw, tail_deviation=estimate_tail_deviation(logw, m, 8 * m))
    batch = draw_batch(dens, N, np.random.SeedSequence(seed), cfg.problem.J_a, cfg.ambient)
    vals = model(hier.interior_nodes(K), batch.points)
    fit = lsq_fit(batch, ordered[:m], vals)
    # a single level is delta-free: express P_K v as level K with an empty coarse half
    coarse = hier.dimension(K - 1) if K > 0 else 0
    coef = np.hstack([fit.coefficients.reshape(m, -1), np.zeros((m, coarse))])
    piece = LevelPiece(K, ordered[:m], coef, N, N, None, fit, spatial_width=hier.dimension(K))
    return RecoveryResult("single-level-lsq", [piece], hier, {"seed": seed})


def _sparse_interp(n, cfg, ws1, hier, model, q1):
    """I_Lambda(P_K v) with Lambda = {sigma_1 <= T}, T the largest threshold within budget."""
    K = cfg.single_level
    dim = hier.dimension(K)

    def cost(T):
        return dim * raw_point_count(enumerate_threshold_set(ws1, q1, T).members)

    lo, hi = 1.0, 2.0
    while cost(hi) <= n:
        lo, hi = hi, 2 * hi
    for _ in range(50):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if cost(mid) <= n else (lo, mid)
    lam = enumerate_threshold_set(ws1, q1, lo)
    nodes = hier.interior_nodes(K)
    interp = interpolate_set(lam, lambda Y: model(nodes, Y), record_points=False)
    coarse = hier.dimension(K - 1) if K > 0 else 0
    coef = np.hstack([interp.coefficients, np.zeros((len(lam), coarse))])
    piece = LevelPiece(
        K, interp.members, coef, interp.ledger.raw_count, interp.ledger.evaluated_count, lam,
        spatial_width=dim,
    )
    return RecoveryResult("sparse-interp", [piece], hier, {"T": lo})


def build_recovery(cfg: ExperimentConfig, n: int, seed: int, context: dict) -> RecoveryResult:
    hier, model = context["hier"], context["model"]
    ws1, ws2 = context["ws"]
    alpha, q1, q2 = context["alpha"], cfg.weights.q1, cfg.weights.q2
    if cfg.method == "ml-lsq":
        lp = plan(n, alpha, q1, q2, ws1, ws2, hier, variant=cfg.variant, c_os=cfg.c_os, conservative_basis=cfg.conservative_basis)
        return recover_ml_lsq(lp, model, hier, seed, cfg.problem.J_a, cfg.ambient)
    if cfg.method == "ml-interp":
        ip = plan_interp(n, ws1, ws2, q1, q2, alpha, hier)
        res = recover_ml_interp(ip.xi, model, hier, ws1, ws2, alpha, q1, q2)
        res.meta["plan"] = ip
        return res
    if cfg.method == "single-level-lsq":
        return _single_level_lsq(n, cfg, ws1, ws2, alpha, q1, q2, hier, model, seed)
    return _sparse_interp(n, cfg, ws1, hier, model, q1)


def fit_slope(budgets, errors, drop_first: bool = True) -> tuple[float, float, tuple[float, float]]:
    """Least-squares slope of -log(error) against log(n), with stderr and a 95% interval.

    An exactly zero error makes the slope infinite.
    """
    x = np.log(np.asarray(budgets, dtype=float))
    e = np.asarray(errors, dtype=float)
    if drop_first:
        x, e = x[1:], e[1:]
    if x.size < 4:
        raise ValueError("slope fit needs at least 4 budget points")
    if np.any(e <= 0):
        return math.inf, 0.0, (math.inf, math.inf)
    y = -np.log(e)
    res = stats.linregress(x, y)
    t = stats.t.ppf(0.975, x.size - 2)
    return float(res.slope), float(res.stderr), (float(res.slope - t * res.stderr), float(res.slope + t * res.stderr))


def monotone_fraction(errors, stderrs, k: float = 2.0) -> float:
    pairs = list(zip(errors, errors[1:], stderrs, stderrs[1:]))
    ok = sum(b <= a + k * math.hypot(sa, sb) for a, b, sa, sb in pairs)
    return ok / len(pairs) if pairs else 1.0


def validate_reference(cfg: ExperimentConfig, draws: int = 32, seed: int = 11) -> float:
    """Largest relative H^1 gap between the closed-form reference and direct level-(K+3) solves."""
    hier = SpatialHierarchy(cfg.problem.K + 3, cfg.problem.n0, cfg.problem.r_sp)
    field_ = cfg.problem.field()
    exact = ExactSolution(field_, cfg.problem.rhs, quad_level=cfg.problem.K + 5)
    direct = GalerkinSolution(field_, hier, cfg.problem.K + 3, cfg.problem.rhs)
    xq, wq = h1_error_rule(hier, cfg.problem.K + 3)
    Y = _generator(seed).standard_normal((draws, cfg.problem.J_a))
    de, dg = exact.derivative(xq, Y), direct.derivative(xq, Y)
    gap = np.sqrt(np.sum(wq * (de - dg) ** 2, axis=1) / np.sum(wq * de**2, axis=1))
    return float(gap.max())


def run_experiment(cfg: ExperimentConfig, log=None, model=None) -> RateReport:
    """Error ladder, slope fit and report for one method.

    model(x, Y) with a derivative(x, Y) method replaces the PDE solution
    as both sampler and reference when given.
    """
    t0 = time.time()
    hier = cfg.problem.hierarchy()
    notes = []
    if model is None:
        model = _solution_model(cfg, hier)
    else:
        notes.append("user-supplied model")
    alpha = cfg.alpha
    if alpha is None:
        alpha = calibrate_alpha(cfg)
        notes.append(f"alpha calibrated to {alpha:.4f}")
    ws = cfg.weights.systems(cfg.problem)
    pred = predicted_rate(cfg.method, alpha, cfg.weights.q1, cfg.weights.q2)
    probe = ErrorProbe(cfg, hier, model)
    context = {"hier": hier, "model": model, "ws": ws, "alpha": alpha}
    seeds = cfg.seeds if cfg.method in ("ml-lsq", "single-level-lsq") else cfg.seeds[:1]

    rows, med, med_se, violations = [], [], [], 0
    for n in cfg.ladder:
        errs, ses = [], []
        for seed in seeds:
            try:
                res = build_recovery(cfg, n, seed, context)
            except Exception as exc:
                raise RuntimeError(f"recovery failed at n = {n}, seed = {seed}: {exc}") from exc
            try:
                ledger = comp_account(res, budget=n)
            except ContractViolation:
                violations += 1
                ledger = comp_account(res)
            est = jackknife_rms(probe.squared_errors(res))
            errs.append(est.value)
            ses.append(est.stderr)
            rows.append(
                {
                    "method": cfg.method, "n": n, "seed": seed, "error": est.value, "stderr": est.stderr,
                    "comp": ledger["comp"], "points": ledger["sample_points"],
                }
            )
            if log:
                log(f"{cfg.method} n={n} seed={seed} error={est.value:.4e} points={ledger['sample_points']}")
        order = np.argsort(errs)
        mid = order[len(order) // 2]
        med.append(float(np.median(errs)))
        med_se.append(float(ses[mid]))

    slope, slope_se, ci = fit_slope(cfg.ladder, med)
    mono = monotone_fraction(med, med_se)
    passed = slope >= 0.8 * pred["rate"] and mono >= 0.8 and violations == 0
    notes.append("slope fitted without the smallest budget")
    report = RateReport(
        cfg.method, list(cfg.ladder), med, med_se, rows, slope, slope_se, ci,
        alpha, pred["beta"], pred["rate"], pred["regime"], mono, violations, passed, time.time() - t0, notes,
    )
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "errors.csv").write_text(report.errors_csv())
    return report
