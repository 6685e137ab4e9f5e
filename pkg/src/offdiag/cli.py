"""Scenario-driven verification runner.

``offdiag verify <scenario.json>`` builds the metric family described by the
scenario, evaluates the requested checks on a cell-centred grid and prints a
JSON report.  Exit codes: 0 all checks pass, 1 a check failed or errored,
2 scenario error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import jets as J
from .connection import SourceSpec, einstein_residual, metric_compat_residual
from .dsl import DSLError, bind
from .exact import (
    HorizonDomainError,
    KerrSenParams,
    RotoidParams,
    SolitonParams,
    coframe_metric,
    kerr_sen_primary,
    kdv_soliton,
    orthonormal_coframe,
    rotoid_metric,
    sol3d_residual,
    soliton_background_metric,
    soliton_mass_metric,
    target_metric,
)
from .fields import ONE, ZERO, ScalarField
from .solutions import (
    GeneratingData,
    PolarizationSet,
    QuadratureError,
    decoupled_residuals,
    generate_metric,
    lc_condition_residual,
    lcconstr_residual,
    liouville_psi,
    separable_solution,
)
from .symmetries import (
    SKTensor,
    cky_residual,
    coordinate_frame_vectors,
    coordinate_vector,
    h_torsion_form,
    kbar_analog,
    kbar_tensor,
    killing_residual,
    principal_cky,
    sk_anomaly,
    sk_residual,
    to_adapted,
)
from .tensor_core import DMetric, assemble_metric, random_dmetric

FAMILIES = ("custom-ansatz", "generated", "separable", "kerr-sen", "rotoid", "soliton-mass", "soliton-background")
CHECKS = ("assembly", "compat", "torsion", "lc", "decoupled", "einstein", "killing", "sk", "cky", "anomaly", "sol3d",
          "coframe")
DEFAULT_TOLERANCES = {
    "assembly": 1e-12, "compat": 1e-11, "torsion": 1e-9, "lc": 1e-9, "decoupled": 1e-7, "einstein": 1e-7,
    "killing": 1e-9, "sk": 1e-8, "cky": 1e-8, "anomaly": 1e-8, "sol3d": 1e-9, "coframe": 1e-12,
}
TOP_FIELDS = {"family", "params", "expressions", "grid", "checks", "tolerances", "w_sign", "sign_h4", "lambda"}

# grid axis names per family; "r" is converted to x~ where the family uses it
LAYOUTS = {
    "custom-ansatz": ("x1", "x2", "v", "t"),
    "generated": ("x1", "x2", "v", "t"),
    "separable": ("x1", "x2", "v", "t"),
    "kerr-sen": ("r", "t", "theta", "phi"),
    "rotoid": ("r", "theta", "phi", "t"),
    "soliton-mass": ("xt", "theta", "phi", "t"),
    "soliton-background": ("r", "theta", "phi", "t"),
}
AXIS_ALIASES = {"r": "x1", "theta": "x2", "phi": "v"}
KS_FAMILIES = ("kerr-sen", "rotoid", "soliton-background")

APPLICABLE = {
    "decoupled": set(FAMILIES) - {"kerr-sen"},
    "sk": {"kerr-sen", "rotoid", "soliton-background"},
    "cky": {"kerr-sen"},
    "sol3d": {"soliton-mass", "soliton-background"},
    "coframe": {"rotoid", "soliton-background"},
}
NEEDS_LAMBDA = {"generated", "separable", "rotoid", "soliton-mass", "soliton-background"}
REQUIRED_PARAMS = {
    "kerr-sen": ("M", "a"),
    "rotoid": ("M", "a", "eps"),
    "soliton-mass": ("speed", "tilt"),
    "soliton-background": ("M", "a", "eps"),
    "separable": ("iota",),
}
REQUIRED_EXPRESSIONS = {
    "custom-ansatz": ("g1", "g2", "h3", "h4"),
    "generated": ("phi",),
    "separable": ("phi0",),
}
DOMAIN_ERRORS = (ValueError, ArithmeticError, QuadratureError, np.linalg.LinAlgError)


class ScenarioError(Exception):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Scenario:
    name: str
    family: str
    params: dict[str, float] = field(default_factory=dict)
    expressions: dict[str, str] = field(default_factory=dict)
    grid: dict[str, dict[str, float]] = field(default_factory=dict)
    checks: list[str] = field(default_factory=list)
    tolerances: dict[str, float] = field(default_factory=dict)
    w_sign: int = 1
    sign_h4: int = 1
    lam: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out = {
            "family": self.family, "params": self.params, "expressions": self.expressions, "grid": self.grid,
            "checks": self.checks, "tolerances": self.tolerances, "w_sign": self.w_sign, "sign_h4": self.sign_h4,
        }
        if self.lam is not None:
            out["lambda"] = self.lam
        return out

    def tolerance(self, check: str) -> float:
        return float(self.tolerances.get(check, DEFAULT_TOLERANCES[check]))


# ---------------------------------------------------------------------------
# validation


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(path, f"expected a finite number, got {value!r}")
    return float(value)


def _sign(value, path: str) -> int:
    if value not in (1, -1) or isinstance(value, bool):
        raise ScenarioError(path, f"expected +1 or -1, got {value!r}")
    return int(value)


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, "expected an object")
    return value


def scenario_from_dict(data: Any, name: str = "scenario") -> Scenario:
    data = _mapping(data, "$")
    unknown = sorted(set(data) - TOP_FIELDS)
    if unknown:
        raise ScenarioError(f"$.{unknown[0]}", "unknown field")
    if "family" not in data:
        raise ScenarioError("$.family", "missing required field")
    family = data["family"]
    if family not in FAMILIES:
        raise ScenarioError("$.family", f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    params = {k: _number(v, f"$.params.{k}") for k, v in _mapping(data.get("params", {}), "$.params").items()}
    expressions = _mapping(data.get("expressions", {}), "$.expressions")
    for k, v in expressions.items():
        if not isinstance(v, str):
            raise ScenarioError(f"$.expressions.{k}", "expected a string")
    for k in REQUIRED_PARAMS.get(family, ()):
        if k not in params:
            raise ScenarioError(f"$.params.{k}", f"missing required parameter for family {family}")
    if not (family == "custom-ansatz" and params.get("random")):
        for k in REQUIRED_EXPRESSIONS.get(family, ()):
            if k not in expressions:
                raise ScenarioError(f"$.expressions.{k}", f"missing required expression for family {family}")
    lam = None
    if "lambda" in data:
        lam = _number(data["lambda"], "$.lambda")
    elif family in NEEDS_LAMBDA:
        raise ScenarioError("$.lambda", f"missing required field for family {family}")
    axes = LAYOUTS[family]
    grid = {}
    for k, spec in _mapping(data.get("grid", {}), "$.grid").items():
        path = f"$.grid.{k}"
        axis = k if k in axes else AXIS_ALIASES.get(k)
        if axis not in axes:
            raise ScenarioError(path, f"unknown axis; expected one of {', '.join(axes)}")
        spec = _mapping(spec, path)
        if set(spec) == {"value"}:
            grid[k] = {"value": _number(spec["value"], f"{path}.value")}
            continue
        extra = sorted(set(spec) - {"min", "max", "count"})
        if extra:
            raise ScenarioError(f"{path}.{extra[0]}", "unknown field")
        for f in ("min", "max", "count"):
            if f not in spec:
                raise ScenarioError(f"{path}.{f}", "missing required field")
        count = spec["count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 2:
            raise ScenarioError(f"{path}.count", "grid counts must be integers >= 2")
        lo, hi = _number(spec["min"], f"{path}.min"), _number(spec["max"], f"{path}.max")
        if not hi > lo:
            raise ScenarioError(path, "max must exceed min")
        grid[k] = {"min": lo, "max": hi, "count": count}
    checks = data.get("checks", [])
    if not isinstance(checks, list) or not checks:
        raise ScenarioError("$.checks", "expected a nonempty list")
    for i, c in enumerate(checks):
        if c not in CHECKS:
            raise ScenarioError(f"$.checks[{i}]", f"unknown check {c!r}")
        if c in APPLICABLE and family not in APPLICABLE[c]:
            raise ScenarioError(f"$.checks[{i}]", f"check {c!r} does not apply to family {family}")
    tolerances = {}
    for k, v in _mapping(data.get("tolerances", {}), "$.tolerances").items():
        if k not in CHECKS:
            raise ScenarioError(f"$.tolerances.{k}", "unknown check")
        tolerances[k] = _number(v, f"$.tolerances.{k}")
        if tolerances[k] < 0:
            raise ScenarioError(f"$.tolerances.{k}", "tolerance must be non-negative")
    sc = Scenario(
        name=name, family=family, params=params, expressions=dict(expressions), grid=grid, checks=list(checks),
        tolerances=tolerances, w_sign=_sign(data.get("w_sign", 1), "$.w_sign"),
        sign_h4=_sign(data.get("sign_h4", 1), "$.sign_h4"), lam=lam,
    )
    for k, text in sc.expressions.items():
        try:
            _expr_field(sc, k, text)
        except DSLError as exc:
            raise ScenarioError(f"$.expressions.{k}", str(exc)) from None
    return sc


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError("$", f"cannot read {p}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data, p.stem)


# ---------------------------------------------------------------------------
# metric construction


def _expr_field(sc: Scenario, key: str, text: str) -> ScalarField:
    table: dict[str, Any] = dict(sc.params)
    if sc.lam is not None:
        table.setdefault("lambda", sc.lam)
    return bind(text, table, name=key)


def _expr(sc: Scenario, key: str, default: ScalarField | None = None) -> ScalarField | None:
    if key in sc.expressions:
        return _expr_field(sc, key, sc.expressions[key])
    return default


@dataclass
class Context:
    metric: DMetric
    source: SourceSpec
    flavor: str = "canonical"
    ks: KerrSenParams | None = None
    layout: str | None = None
    eta: ScalarField | None = None
    eps_sol: int = 1
    killing: int = 3


def _ks(sc: Scenario) -> KerrSenParams:
    p = sc.params
    return KerrSenParams(p.get("M", 1.0), p.get("a", 0.0), p.get("b", 0.0))


def _rotoid_params(sc: Scenario) -> RotoidParams:
    p = sc.params
    return RotoidParams(eps=p["eps"], mu0=p.get("mu0", 1.0), q0=p.get("q0", 1.0), omega0=p.get("omega0", 1.0),
                        phi0=p.get("phi0", 0.0), mu1=p.get("mu1"))


def _soliton_params(sc: Scenario) -> SolitonParams:
    p = sc.params
    return SolitonParams(speed=p["speed"], phase=p.get("phase", 0.0), eps_sol=int(p.get("eps_sol", 1)),
                         tilt=p.get("tilt", 0.0), h4_base=p.get("h4_base"))


def build_context(sc: Scenario, seed: int = 42) -> Context:
    lam = sc.lam
    cosmo = SourceSpec.cosmological(lam if lam is not None else 0.0)
    fam = sc.family
    if fam == "custom-ansatz":
        if sc.params.get("random"):
            m = random_dmetric(np.random.default_rng(seed), omega="omega" in sc.expressions or bool(sc.params.get("omega")))
        else:
            names = ("g1", "g2", "h3", "h4", "omega", "n31", "n32", "n41", "n42")
            defaults = {"omega": ONE}
            f = {k: _expr(sc, k, defaults.get(k, ZERO)) for k in names}
            m = DMetric(**f)
        return Context(m, cosmo)
    if fam == "generated":
        src = SourceSpec(_expr(sc, "upsilon2", cosmo.upsilon2), _expr(sc, "upsilon4", cosmo.upsilon4), lam)
        n1 = (_expr(sc, "n1_1", ZERO), _expr(sc, "n1_2", ZERO))
        n2 = None
        if "n2_1" in sc.expressions or "n2_2" in sc.expressions:
            n2 = (_expr(sc, "n2_1", ZERO), _expr(sc, "n2_2", ZERO))
        gen = GeneratingData(
            phi=_expr(sc, "phi"), psi=_expr(sc, "psi") or liouville_psi(lam), h4_under=_expr(sc, "h4_under", ZERO),
            n1=n1, n2=n2, sign_h4=sc.sign_h4, w_sign=sc.w_sign, v0=sc.params.get("v0", 0.0),
        )
        return Context(generate_metric(gen, src), src)
    if fam == "separable":
        m = separable_solution(_expr(sc, "phi0"), sc.params["iota"], lam, psi=_expr(sc, "psi"),
                               n_potential=_expr(sc, "n_potential"), sign_h4=sc.sign_h4)
        return Context(m, cosmo)
    ks = _ks(sc)
    if fam == "kerr-sen":
        m = kerr_sen_primary(ks)
        return Context(m, cosmo, "levi-civita-adapted", ks, "ks", killing=m.extras.get("killing_t", 1))
    if fam == "rotoid":
        m = rotoid_metric(ks, _rotoid_params(sc), lam, psi=_expr(sc, "psi"))
        return Context(m, cosmo, ks=ks, layout="rot")
    if fam == "soliton-mass":
        sp = _soliton_params(sc)
        m = soliton_mass_metric(ks, sp, lam, psi=_expr(sc, "psi"))
        return Context(m, cosmo, ks=None, eta=m.extras["eta"], eps_sol=sp.eps_sol)
    # soliton-background
    eta = _expr(sc, "eta")
    eps_sol = int(sc.params.get("eps_sol", 1))
    if eta is None:
        sp = _soliton_params(sc) if "speed" in sc.params else None
        if sp is None:
            raise ScenarioError("$.params.speed", "soliton-background needs an 'eta' expression or soliton parameters")
        eta = kdv_soliton(sp)
    m = soliton_background_metric(ks, _rotoid_params(sc), eta, lam, psi=_expr(sc, "psi"))
    return Context(m, cosmo, ks=ks, layout="rot", eta=eta, eps_sol=eps_sol)


def grid_points(sc: Scenario, ctx: Context | None = None) -> np.ndarray:
    """Cell-centred grid in slot coordinates, ``(P, 4)``."""
    axes = LAYOUTS[sc.family]
    by_axis = {}
    for k, spec in sc.grid.items():
        axis = k if k in axes else AXIS_ALIASES[k]
        if "value" in spec:
            by_axis[axis] = np.array([spec["value"]])
        else:
            n = spec["count"]
            by_axis[axis] = spec["min"] + (np.arange(n) + 0.5) * (spec["max"] - spec["min"]) / n
    cols = [by_axis.get(a, np.array([0.0])) for a in axes]
    mesh = np.meshgrid(*cols, indexing="ij")
    pts = np.column_stack([g.ravel() for g in mesh])
    if axes[0] == "r":
        ks = ctx.ks if ctx is not None and ctx.ks is not None else _ks(sc)
        try:
            pts[:, 0] = ks.xt_of_r(pts[:, 0])
        except HorizonDomainError as exc:
            raise ScenarioError("$.grid.r", str(exc)) from None
    return pts


# ---------------------------------------------------------------------------
# checks: each returns one residual per point


def _per_point(arr, P: int) -> np.ndarray:
    a = np.abs(np.asarray(arr, dtype=float))
    if a.ndim == 0:
        return np.full(P, float(a))
    if a.shape[0] != P:
        a = np.moveaxis(a, -1, 0)
    return a.reshape(P, -1).max(axis=1)


def _check_assembly(ctx: Context, pts):
    g = assemble_metric(ctx.metric, pts)
    asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(1, 2))
    eig = np.linalg.eigvalsh(g)
    want = np.sort(np.asarray(ctx.metric.signature))
    bad = np.any(np.sign(eig) != want[None, :], axis=1)
    return asym + bad.astype(float)


def _check_einstein(ctx: Context, pts):
    return _per_point(einstein_residual(ctx.metric, ctx.source, pts, flavor=ctx.flavor).values, len(pts))


def _sk_tensor(ctx: Context) -> SKTensor:
    return to_adapted(ctx.metric, kbar_tensor(ctx.ks, layout=ctx.layout))


def _anomaly_tensor(ctx: Context) -> SKTensor:
    if ctx.ks is not None:
        return kbar_analog(ctx.metric, ctx.ks, ctx.layout)

    def fn(u):
        rows = [J.stack([u[a] * u[b] * 0.1 + (1.0 if a == b else 0.0) for b in range(4)]) for a in range(4)]
        return J.stack(rows)

    return SKTensor(fn, "uu", "adapted", "probe")


def _check_cky(ctx: Context, pts):
    ks = ctx.ks
    T = None if ks.b == 0 else h_torsion_form(ks, 1)
    return cky_residual(ctx.metric, principal_cky(ks, 1), T, pts, frame=coordinate_frame_vectors(ks))


def _check_coframe(ctx: Context, pts):
    out = np.empty(len(pts))
    pol = PolarizationSet()
    for i, p in enumerate(pts):
        target = target_metric(ctx.metric, ctx.ks, pol, p)
        got = coframe_metric(orthonormal_coframe(ctx.metric, ctx.ks, pol, p))
        out[i] = np.abs(got - target).max() / max(1.0, np.abs(target).max())
    return out


CHECK_FUNCS: dict[str, Callable[[Context, np.ndarray], np.ndarray]] = {
    "assembly": _check_assembly,
    "compat": lambda ctx, pts: metric_compat_residual(ctx.metric, pts),
    "torsion": lambda ctx, pts: lcconstr_residual(ctx.metric, pts),
    "lc": lambda ctx, pts: _per_point(lc_condition_residual(ctx.metric, pts), len(pts)),
    "decoupled": lambda ctx, pts: decoupled_residuals(ctx.metric, ctx.source, pts).max_abs(),
    "einstein": _check_einstein,
    "killing": lambda ctx, pts: killing_residual(ctx.metric, "levi-civita-adapted", coordinate_vector(ctx.killing), pts),
    "sk": lambda ctx, pts: sk_residual(ctx.metric, "levi-civita-adapted", _sk_tensor(ctx), pts),
    "cky": _check_cky,
    "anomaly": lambda ctx, pts: _per_point(sk_anomaly(ctx.metric, _anomaly_tensor(ctx), pts, ctx.flavor), len(pts)),
    "sol3d": lambda ctx, pts: np.abs(sol3d_residual(ctx.eta, pts, ctx.eps_sol)),
    "coframe": _check_coframe,
}


def evaluate_check(name: str, ctx: Context, pts: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Residual per point (``nan`` where evaluation failed) and the error messages."""
    func = CHECK_FUNCS[name]
    try:
        return np.asarray(func(ctx, pts), dtype=float).reshape(len(pts)), []
    except DOMAIN_ERRORS:
        pass
    out = np.full(len(pts), np.nan)
    errors = []
    for i in range(len(pts)):
        try:
            out[i] = float(np.asarray(func(ctx, pts[i : i + 1]), dtype=float).reshape(-1)[0])
        except DOMAIN_ERRORS as exc:
            errors.append(f"{pts[i].tolist()}: {type(exc).__name__}: {exc}")
    return out, errors


# ---------------------------------------------------------------------------
# running and reporting


def run_scenario(sc: Scenario, seed: int = 42, jobs: int = 1, timing: bool = False) -> dict[str, Any]:
    t0 = time.perf_counter()
    ctx = build_context(sc, seed)
    pts = grid_points(sc, ctx)
    records = []
    for check in sc.checks:
        if jobs > 1 and len(pts) > 1:
            chunks = [c for c in np.array_split(pts, min(jobs, len(pts))) if len(c)]
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                parts = list(ex.map(lambda c: evaluate_check(check, ctx, c), chunks))
            res = np.concatenate([p[0] for p in parts])
            errors = [e for p in parts for e in p[1]]
        else:
            res, errors = evaluate_check(check, ctx, pts)
        records.append(_record(check, sc.tolerance(check), pts, res, errors))
    return {
        "scenario": sc.name,
        "seed": int(seed),
        "checks": records,
        "wall_time_s": round(time.perf_counter() - t0, 3) if timing else 0.0,
        "version": __version__,
    }


def _record(name: str, tol: float, pts: np.ndarray, res: np.ndarray, errors: list[str]) -> dict[str, Any]:
    ok = np.isfinite(res)
    rec: dict[str, Any] = {"name": name, "points": int(len(pts))}
    if ok.any():
        k = int(np.nanargmax(np.where(ok, res, -np.inf)))
        rec["max_residual"] = float(res[k])
        rec["mean_residual"] = float(res[ok].mean())
        rec["argmax"] = [float(x) for x in pts[k]]
    else:
        rec["max_residual"] = None
        rec["mean_residual"] = None
        rec["argmax"] = None
    rec["tolerance"] = float(tol)
    rec["pass"] = bool(ok.all() and rec["max_residual"] < tol)
    if errors or not ok.all():
        n_bad = int((~ok).sum())
        rec["error"] = f"{n_bad} of {len(pts)} points failed" + (f"; first: {errors[0]}" if errors else "")
    return rec


def report_json(report: Any) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


CSV_FIELDS = ("scenario", "name", "points", "max_residual", "mean_residual", "argmax", "tolerance", "pass")


def report_csv(report: dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rec in report["checks"]:
        argmax = "" if rec["argmax"] is None else " ".join(repr(x) for x in rec["argmax"])
        w.writerow([report["scenario"], rec["name"], rec["points"], rec["max_residual"], rec["mean_residual"],
                    argmax, rec["tolerance"], rec["pass"]])
    return buf.getvalue()


def all_pass(reports) -> bool:
    return all(rec["pass"] for rep in reports for rec in rep["checks"])


def bundled_scenarios() -> list[Path]:
    """Paths of the scenario files shipped with the package."""
    root = resources.files("offdiag") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(path: str) -> str:
    p = Path(path)
    if p.exists():
        return path
    for b in bundled_scenarios():
        if b.stem == path or b.name == path:
            return str(b)
    return path


def _parse_values(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ScenarioError("--values", f"expected comma-separated numbers, got {text!r}") from None


def sweep(sc: Scenario, param: str, values: list[float], seed: int, jobs: int, timing: bool = False) -> list[dict]:
    out = []
    for v in values:
        data = sc.to_dict()
        if param == "lambda":
            data["lambda"] = v
        else:
            data["params"] = dict(data["params"], **{param: v})
        sv = scenario_from_dict(data, sc.name)
        rep = run_scenario(sv, seed, jobs, timing)
        rep["param"] = {"name": param, "value": float(v)}
        out.append(rep)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="offdiag", description="Verify off-diagonal Einstein metrics from scenario files.")
    ap.add_argument("--seed", type=int, default=42, help="seed for randomized checks (default 42)")
    ap.add_argument("--jobs", type=int, default=1, help="worker threads for grid evaluation")
    ap.add_argument("--timing", action="store_true", help="record wall time (reports are then not byte-stable)")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="run the checks of one scenario and print a JSON report")
    v.add_argument("scenario")
    v.add_argument("--output", "-o", help="write the report here instead of stdout")
    s = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    s.add_argument("scenario")
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values (may be empty)")
    s.add_argument("--output", "-o")
    r = sub.add_parser("report", help="run a scenario and emit its report as JSON or CSV")
    r.add_argument("scenario")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--output", "-o")
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        return
    try:
        Path(output).write_text(text)
    except OSError as exc:
        raise ScenarioError("--output", f"cannot write {output}: {exc.strerror}") from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ScenarioError("--jobs", "must be at least 1")
        if args.command == "list":
            for p in bundled_scenarios():
                sys.stdout.write(p.stem + "\n")
            return 0
        sc = load_scenario(_resolve(args.scenario))
        if args.command == "sweep":
            reports = sweep(sc, args.param, _parse_values(args.values), args.seed, args.jobs, args.timing)
            _emit(report_json(reports), args.output)
        else:
            reports = [run_scenario(sc, args.seed, args.jobs, args.timing)]
            fmt = getattr(args, "format", "json")
            _emit(report_csv(reports[0]) if fmt == "csv" else report_json(reports[0]), args.output)
        return 0 if all_pass(reports) else 1
    except ScenarioError as exc:
        sys.stderr.write(f"scenario error: {exc}\n")
        return 2
    except DOMAIN_ERRORS as exc:
        # raised while building the metric itself: the scenario describes no valid metric
        sys.stderr.write(f"scenario error: {type(exc).__name__}: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
