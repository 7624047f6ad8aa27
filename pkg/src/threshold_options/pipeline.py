"""solve / verify / simulate / sweep pipelines behind the command line.

Each command returns a :class:`RunReport`.  Rendering is deterministic:
same config and seed give the same bytes.  Wall-clock timings are kept
on the report but only printed on request.

Report entries are named after the operation that produced them, e.g.
``maximize_h.p_star`` or ``estimate_threshold_npv.mean``.
"""

from __future__ import annotations

import contextlib
import csv
import enum
import hashlib
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Optional

import numpy as np

from . import __version__
from .config import KEYS, ProblemConfig, lookup, serialize_config, validate_config, with_value
from .errors import ConfigError, NoInteriorMaximizer
from .fundamental import (
    SERIES_Z_CAP,
    FundamentalSolution,
    ode_residual,
    psi_closed_form,
    psi_numeric,
    psi_series,
    solve_characteristic_root,
)
from .kummer import MAX_TERMS
from .montecarlo import UNRELIABLE_FLAGGED_FRAC, SimConfig, StoppingEstimate, estimate_hitting_discount, estimate_threshold_npv
from .processes import DiffusionSpec, Family
from .threshold import (
    ThresholdSolution,
    closed_form_threshold,
    default_bracket,
    maximize_h,
    solve_smooth_pasting,
    value_function,
)
from .verification import (
    FBP_TOL,
    H_RTOL,
    PASTING_RTOL,
    ZERO_DERIV_RTOL,
    FbpClassification,
    Status,
    VerificationReport,
    classify_fbp_solutions,
    solve_free_boundary,
    verification_grid,
    verify_theorem1,
    verify_theorem2,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_NO_MAXIMIZER = 3
EXIT_VERIFY_FAIL = 4
EXIT_SIM_UNRELIABLE = 5

SWEEP_COLUMNS = ("param", "beta_or_none", "p_star", "h_star", "V_at_x0", "theorem2_status")


# --------------------------------------------------------------------------
# report


def fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {fmt(v)}" for k, v in value.items()) + "}"
    return str(value)


@dataclass
class RunReport:
    command: str
    config: ProblemConfig
    sections: list[tuple[str, list[tuple[str, Any]]]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    solution: Optional[ThresholdSolution] = None
    verification: dict[str, VerificationReport] = field(default_factory=dict)
    fbp: list[FbpClassification] = field(default_factory=list)
    simulation: dict[str, StoppingEstimate] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    table: Optional[str] = None

    def add(self, section: str, key: str, value: Any) -> None:
        for name, entries in self.sections:
            if name == section:
                entries.append((key, value))
                return
        self.sections.append((section, [(key, value)]))

    def get(self, section: str, key: str) -> Any:
        for name, entries in self.sections:
            if name == section:
                for k, v in entries:
                    if k == key:
                        return v
        raise KeyError(f"{section}.{key}")

    def render(self, include_timings: bool = False) -> str:
        out = io.StringIO()
        out.write(f"[provenance]\ncommand = {self.command}\nartifact_version = {__version__}\n")
        out.write(f"config_sha256 = {config_hash(self.config)}\nexit_code = {self.exit_code}\n")
        for name, entries in self.sections:
            out.write(f"\n[{name}]\n")
            for key, value in entries:
                out.write(f"{key} = {fmt(value)}\n")
        if include_timings and self.timings:
            out.write("\n[timings_seconds]\n")
            for stage, secs in self.timings.items():
                out.write(f"{stage} = {secs:.6f}\n")
        return out.getvalue()


def config_hash(cfg: ProblemConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


@contextlib.contextmanager
def stage(report: RunReport, name: str) -> Iterator[None]:
    """Time a stage and tag any error escaping it with the stage name."""
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    finally:
        report.timings[name] = report.timings.get(name, 0.0) + time.perf_counter() - t0


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NoInteriorMaximizer):
        return EXIT_NO_MAXIMIZER
    return EXIT_OTHER


# --------------------------------------------------------------------------
# shared pieces


def _record_config(report: RunReport) -> None:
    """Every key with its effective value, defaults included."""
    cfg = report.config
    for key in KEYS:
        report.add("config", key, lookup(cfg, key))
    validate_config(cfg)
    sc = sim_config(cfg, cfg.rho)
    for key, value in (
        ("simulation.step", sc.step),
        ("simulation.horizon", sc.horizon),
        ("simulation.unreliable_flagged_frac", UNRELIABLE_FLAGGED_FRAC),
        ("verification.h_rtol", H_RTOL),
        ("verification.pasting_rtol", PASTING_RTOL),
        ("verification.fbp_tol", FBP_TOL),
        ("verification.zero_deriv_rtol", ZERO_DERIV_RTOL),
        ("kummer.max_terms", MAX_TERMS),
        ("kummer.series_z_cap", SERIES_Z_CAP),
    ):
        report.add("defaults", key, value)


@dataclass(frozen=True)
class NumericRange:
    x0: float
    lower: float
    upper: float
    points: int


def numeric_range(cfg: ProblemConfig, spec: DiffusionSpec) -> NumericRange:
    """Range and normalisation point for the shooting construction of psi.

    Defaults cover [I, I + 20 scale] clipped to the state space, widened
    to include x0.
    """
    dom = spec.domain
    scale = spec.scale
    sc = cfg.solver
    lower = sc.numeric_lower
    if lower is None:
        lower = spec.invest_cost - 10.0 * scale if not dom.lower.is_finite else max(spec.invest_cost, dom.l + 1e-3 * scale)
        if cfg.x0 is not None:
            lower = min(lower, cfg.x0)
    upper = sc.numeric_upper
    if upper is None:
        upper = spec.invest_cost + 20.0 * scale
        if dom.upper.is_finite:
            upper = min(upper, dom.r - 1e-3 * max(1.0, abs(dom.r)))
        if cfg.x0 is not None:
            upper = max(upper, cfg.x0)
    x0 = sc.numeric_x0
    if x0 is None:
        x0 = cfg.x0 if cfg.x0 is not None and lower <= cfg.x0 <= upper else 0.5 * (lower + upper)
    return NumericRange(float(x0), float(lower), float(upper), sc.numeric_points)


def build_fundamental(cfg: ProblemConfig, spec: DiffusionSpec, report: RunReport) -> FundamentalSolution:
    """ClosedForm for GBM/ABM, KummerSeries for GeometricOU/CIR, NumericODE otherwise."""
    if spec.family in (Family.GBM, Family.ABM):
        root = solve_characteristic_root(spec)
        report.add("psi", "solve_characteristic_root.beta", root.beta)
        report.add("psi", "solve_characteristic_root.residual", root.residual)
        psi = psi_closed_form(spec, root)
        check = np.linspace(max(spec.invest_cost, spec.domain.l + 0.1) if spec.domain.lower.is_finite else spec.invest_cost - 1.0,
                            spec.invest_cost + 3.0 * spec.scale, 50)
    elif spec.family in (Family.GEOMETRIC_OU, Family.CIR):
        psi = psi_series(spec)
        check = np.linspace(0.1, 3.0, 50)
    else:
        nr = numeric_range(cfg, spec)
        report.add("psi", "psi_numeric.x0", nr.x0)
        report.add("psi", "psi_numeric.range", (nr.lower, nr.upper))
        report.add("psi", "psi_numeric.points", nr.points)
        check = np.linspace(nr.lower, nr.upper, nr.points)
        psi = psi_numeric(spec, nr.x0, check)
    report.add("psi", "provenance", psi.provenance)
    report.add("psi", "upper_limit", psi.upper_limit)
    report.add("psi", "ode_residual.grid", (float(check[0]), float(check[-1]), int(check.size)))
    report.add("psi", "ode_residual.max", ode_residual(spec, psi, check))
    return psi


def _bracket(cfg: ProblemConfig, psi: FundamentalSolution, invest_cost: float) -> tuple[float, float]:
    sc = cfg.solver
    if sc.bracket_lower is not None and sc.bracket_upper is not None:
        return sc.bracket_lower, sc.bracket_upper
    lo, hi = default_bracket(psi, invest_cost)
    return (sc.bracket_lower if sc.bracket_lower is not None else lo,
            sc.bracket_upper if sc.bracket_upper is not None else hi)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@dataclass(frozen=True)
class Solved:
    spec: DiffusionSpec
    psi: FundamentalSolution
    solution: ThresholdSolution
    bracket: tuple[float, float]
    beta: Optional[float]


def _solve(cfg: ProblemConfig, report: RunReport, record: bool = True) -> Solved:
    with stage(report, "spec"):
        spec = validate_config(cfg)
    with stage(report, "psi"):
        psi = build_fundamental(cfg, spec, report)
    cost = spec.invest_cost
    with stage(report, "threshold"):
        bracket = _bracket(cfg, psi, cost)
        sec = "solution"
        report.add(sec, "bracket", bracket)
        argmax = maximize_h(psi, cost, bracket, n_grid=cfg.solver.grid_points, rtol=cfg.solver.rtol)
        roots = solve_smooth_pasting(psi, cost, bracket, n_grid=cfg.solver.pasting_points)
        report.add(sec, "maximize_h.p_star", argmax.p_star)
        report.add(sec, "maximize_h.h_star", argmax.h_star)
        report.add(sec, "solve_smooth_pasting.roots", [r.p for r in roots])
        candidates = {"maximize_h": argmax.p_star}
        if roots:
            best = max(roots, key=lambda r: (r.p - cost) / float(psi.eval(r.p)))
            candidates["solve_smooth_pasting"] = best.p
        chosen = argmax
        beta = None
        if spec.family in (Family.GBM, Family.ABM):
            closed = closed_form_threshold(spec)
            beta = float(solve_characteristic_root(spec).beta)
            report.add(sec, "closed_form_threshold.p_star", closed.p_star)
            candidates["closed_form_threshold"] = closed.p_star
            chosen = replace(closed, psi_ref=psi)
        names = list(candidates)
        delta = max((_rel(candidates[a], candidates[b]) for i, a in enumerate(names) for b in names[i + 1:]), default=0.0)
        report.add(sec, "method_agreement.max_rel_delta", delta)
        report.add(sec, "p_star.method", chosen.method)
        report.add(sec, "p_star", chosen.p_star)
        report.add(sec, "h_star", chosen.h_star)
        if cfg.x0 is not None:
            report.add(sec, "value_function.x0", cfg.x0)
            report.add(sec, "value_function.V_at_x0", value_function(chosen, cost, cfg.x0))
    report.solution = chosen
    return Solved(spec, psi, chosen, bracket, beta)


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: ProblemConfig) -> RunReport:
    report = RunReport("solve", cfg)
    _record_config(report)
    _solve(cfg, report)
    return report


def _conditions(report: RunReport, section: str, rep: VerificationReport) -> None:
    report.add(section, "overall", rep.overall)
    for c in rep.conditions:
        report.add(section, f"{c.name}.status", c.status)
        report.add(section, f"{c.name}.margin", c.margin)
        if c.witness:
            report.add(section, f"{c.name}.witness", c.witness)
        if c.note:
            report.add(section, f"{c.name}.note", c.note)


def cmd_verify(cfg: ProblemConfig, p_star: Optional[float] = None) -> RunReport:
    report = RunReport("verify", cfg)
    _record_config(report)
    if p_star is None:
        solved = _solve(cfg, report)
        spec, psi, p = solved.spec, solved.psi, solved.solution.p_star
        bracket = solved.bracket
    else:
        with stage(report, "spec"):
            spec = validate_config(cfg)
        with stage(report, "psi"):
            psi = build_fundamental(cfg, spec, report)
        p = float(p_star)
        bracket = _bracket(cfg, psi, spec.invest_cost)
    cost = spec.invest_cost
    report.add("verification", "p_star", p)
    report.add("verification", "p_star.source", "override" if p_star is not None else "solve")
    with stage(report, "verify"):
        left, right = verification_grid(psi, cost, p, cfg.solver.verify_points)
        grid = np.concatenate([left, right])
        report.add("verification", "grid", {"below": (float(left[0]), float(left[-1]), int(left.size)),
                                            "above": (float(right[0]), float(right[-1]), int(right.size))})
        t1 = verify_theorem1(psi, cost, p, grid)
        t2 = verify_theorem2(spec, psi, p, grid)
        report.verification = {"verify_theorem1": t1, "verify_theorem2": t2}
        _conditions(report, "verify_theorem1", t1)
        _conditions(report, "verify_theorem2", t2)

        candidates = solve_free_boundary(psi, cost, bracket)
        sec = "free_boundary"
        report.add(sec, "solve_free_boundary.n_solutions", len(candidates))
        for k, c in enumerate(candidates):
            report.add(sec, f"solution{k}.root", c.root)
            report.add(sec, f"solution{k}.value_match_error", c.value_match_error)
            report.add(sec, f"solution{k}.smooth_paste_error", c.smooth_paste_error)
        if candidates:
            report.fbp = classify_fbp_solutions(psi, cost, candidates)
            for k, fc in enumerate(report.fbp):
                report.add(sec, f"classify_fbp_solutions{k}.root", fc.root)
                report.add(sec, f"classify_fbp_solutions{k}.psi2", fc.psi2)
                report.add(sec, f"classify_fbp_solutions{k}.class", fc.classification)
        else:
            report.add(sec, "classify_fbp_solutions", "skipped: no smooth-pasting root in the bracket")

    statuses = {"verify_theorem1": t1.overall, "verify_theorem2": t2.overall}
    for name, st in statuses.items():
        report.add("summary", name, st)
    if Status.FAIL in statuses.values():
        report.exit_code = EXIT_VERIFY_FAIL
    return report


def sim_config(cfg: ProblemConfig, rho: float) -> SimConfig:
    sim = cfg.simulation
    overrides = {"n_paths": sim.n_paths, "seed": sim.seed}
    if sim.step is not None:
        overrides["step"] = sim.step
    if sim.horizon is not None:
        overrides["horizon"] = sim.horizon
    return SimConfig.default(rho, **overrides)


def _z(est: float, se: float, target: float) -> float:
    if se > 0.0:
        return (est - target) / se
    return 0.0 if est == target else math.copysign(math.inf, est - target)


def cmd_simulate(cfg: ProblemConfig, p_star: Optional[float] = None) -> RunReport:
    report = RunReport("simulate", cfg)
    _record_config(report)
    if cfg.x0 is None:
        raise ConfigError("x0", "required for simulate")
    p = p_star if p_star is not None else cfg.simulation.threshold
    if p is None:
        solved = _solve(cfg, report)
        spec, psi, p = solved.spec, solved.psi, solved.solution.p_star
    else:
        with stage(report, "spec"):
            spec = validate_config(cfg)
        with stage(report, "psi"):
            psi = build_fundamental(cfg, spec, report)
    p = float(p)
    x0 = cfg.x0
    sc = sim_config(cfg, spec.rho)
    sec = "simulation"
    for key, value in (("threshold", p), ("x0", x0), ("step", sc.step), ("horizon", sc.horizon),
                       ("n_steps", sc.n_steps), ("n_paths", sc.n_paths), ("seed", sc.seed), ("scheme", sc.scheme)):
        report.add(sec, key, value)

    ratio = 1.0 if x0 >= p else float(psi.eval(x0)) / float(psi.eval(p))
    targets = {"estimate_hitting_discount": ratio,
               "estimate_threshold_npv": (x0 - spec.invest_cost) if x0 >= p else (p - spec.invest_cost) * ratio}
    with stage(report, "simulate"):
        hit = estimate_hitting_discount(spec, x0, p, sc)
        npv = estimate_threshold_npv(spec, x0, p, sc)
    report.simulation = {"estimate_hitting_discount": hit, "estimate_threshold_npv": npv}
    for name, est in report.simulation.items():
        target = targets[name]
        report.add(name, "mean", est.mean)
        report.add(name, "std_error", est.std_error)
        if name == "estimate_threshold_npv":
            report.add(name, "mean_at_threshold", est.mean_at_threshold)
            report.add(name, "std_error_at_threshold", est.std_error_at_threshold)
        report.add(name, "analytic_target", target)
        report.add(name, "z_score", _z(est.mean, est.std_error, target))
        if name == "estimate_threshold_npv":
            report.add(name, "z_score_at_threshold", _z(est.mean_at_threshold, est.std_error_at_threshold, target))
        report.add(name, "n_stopped", est.n_stopped)
        report.add(name, "never_stopped_frac", est.never_stopped_frac)
        report.add(name, "truncation_bound", est.truncation_bound)
        report.add(name, "flagged_frac", est.flagged_frac)
        report.add(name, "unreliable", est.unreliable)
    if hit.unreliable or npv.unreliable:
        report.exit_code = EXIT_SIM_UNRELIABLE
    return report


def sweep_values(cfg: ProblemConfig) -> list[float]:
    sw = cfg.sweep
    if sw.values is not None:
        if sw.values and sw.param is None:
            raise ConfigError("sweep.param", "required with sweep.values")
        return list(sw.values)
    if sw.count == 0:
        return []
    if sw.param is None or sw.start is None:
        raise ConfigError("sweep.param", "sweep needs sweep.param, sweep.start and sweep.count")
    if sw.count == 1:
        return [float(sw.start)]
    if sw.stop is None:
        raise ConfigError("sweep.stop", "required when sweep.count > 1")
    return [float(v) for v in np.linspace(sw.start, sw.stop, sw.count)]


def _csv_number(value: Optional[float]) -> str:
    return "none" if value is None else "%.17g" % value


def cmd_sweep(cfg: ProblemConfig) -> RunReport:
    """Re-solve across one parameter; the CSV lands in ``report.table``."""
    report = RunReport("sweep", cfg)
    _record_config(report)
    values = sweep_values(cfg)
    report.add("sweep", "param", cfg.sweep.param)
    report.add("sweep", "values", values)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(SWEEP_COLUMNS)
    for k, v in enumerate(values):
        point = with_value(cfg, cfg.sweep.param, v)
        scratch = RunReport("sweep", point)
        beta = p = h = V = None
        try:
            solved = _solve(point, scratch)
            beta = solved.beta
            p = solved.solution.p_star
            h = solved.solution.h_star
            if point.x0 is not None:
                V = value_function(solved.solution, solved.spec.invest_cost, point.x0)
            left, right = verification_grid(solved.psi, solved.spec.invest_cost, p, point.solver.verify_points)
            status = verify_theorem2(solved.spec, solved.psi, p, np.concatenate([left, right])).overall.value
        except NoInteriorMaximizer:
            status = "no_interior_maximizer"
        for name, secs in scratch.timings.items():
            report.timings[f"point{k}.{name}"] = secs
        writer.writerow([_csv_number(v), _csv_number(beta), _csv_number(p), _csv_number(h), _csv_number(V), status])
        report.add("sweep", f"point{k}", {"value": v, "p_star": p, "theorem2_status": status})
    report.table = buf.getvalue()
    return report


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "simulate": cmd_simulate, "sweep": cmd_sweep}
