"""Command-line entry point: JSON run configs, deterministic CSV/JSON outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 check or acceptance failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

RUN_KINDS = ("geodesic", "boltzmann", "hyvarinen-check", "kinematics-test", "orlicz-check")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------- schema

DEFAULTS: dict[str, dict] = {
    "geodesic": {
        "dimension": 1,
        "flow": "kl_first",
        "initial_condition": {"start": [0.3, 0.1], "target": [-0.2, 0.05]},
        "time": {"t_end": 5.0, "dt": 0.001, "integrator": "rk4"},
        "quadrature": {"hermite_nodes": 40},
    },
    "boltzmann": {
        "dimension": 3,
        "basis_degree": 4,
        "interaction": {"type": "maxwell", "strength": 1.0},
        "initial_condition": {"kind": "perturbed", "amplitude": 0.005},
        "time": {"t_end": 8.0, "dt": 0.001, "integrator": "rk4"},
        "quadrature": {"hermite_nodes": 16},
        "positivity": "clip-and-flag",
    },
    "hyvarinen-check": {},
    "kinematics-test": {"quadrature": {"sphere_polar": 128, "sphere_azimuthal": 16}},
    "orlicz-check": {},
}

COMMON = {"run", "seed", "threads", "output"}
ALLOWED = {
    "geodesic": COMMON | {"dimension", "basis", "flow", "initial_condition", "time", "quadrature"},
    "boltzmann": COMMON | {
        "dimension", "basis_degree", "interaction", "initial_condition", "time", "quadrature", "positivity",
    },
    "hyvarinen-check": COMMON,
    "kinematics-test": COMMON | {"quadrature"},
    "orlicz-check": COMMON,
}
NESTED = {
    "time": {"t_end", "dt", "integrator"},
    "interaction": {"type", "strength", "exponent"},
    "quadrature": {"hermite_nodes", "sphere_polar", "sphere_azimuthal"},
    "initial_condition": {"kind", "amplitude", "start", "target"},
}


@dataclass(frozen=True)
class RunConfig:
    run: str
    settings: dict
    seed: int
    threads: int
    output: str | None

    def resolved(self) -> dict:
        out = {"run": self.run, "seed": self.seed, "threads": self.threads, "output": self.output}
        out.update(copy.deepcopy(self.settings))
        return out


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _positive(value, path: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not (np.isfinite(value) and value > 0):
        raise ConfigError(path, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _nonnegative_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(path, f"expected a nonnegative integer, got {value!r}")
    return value


def _coef_list(value, path: str, size: int) -> list:
    if not isinstance(value, list) or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) for a in value
    ):
        raise ConfigError(path, "expected a list of numbers")
    if len(value) != size:
        raise ConfigError(path, f"expected {size} coefficients, got {len(value)}")
    return [float(a) for a in value]


def parse_config(text: str, run: str | None = None) -> RunConfig:
    """Validate a JSON run configuration and fill in defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"malformed JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be an object")
    kind = raw.get("run", run)
    if kind is None:
        raise ConfigError("run", "missing run kind")
    if kind not in RUN_KINDS:
        raise ConfigError("run", f"must be one of {list(RUN_KINDS)}, got {kind!r}")
    if run is not None and kind != run:
        raise ConfigError("run", f"config declares {kind!r} but the subcommand is {run!r}")
    for key, value in raw.items():
        if key not in ALLOWED[kind]:
            raise ConfigError(key, f"unknown key for run {kind!r}")
        if key in NESTED:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected an object")
            for sub in value:
                if sub not in NESTED[key]:
                    raise ConfigError(f"{key}.{sub}", "unknown key")

    seed = _nonnegative_int(raw.get("seed", 0), "seed")
    threads = _positive(raw.get("threads", 1), "threads", integer=True)
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string")
    settings = _merge(DEFAULTS[kind], {k: v for k, v in raw.items() if k not in COMMON})
    _validate(kind, settings)
    return RunConfig(kind, settings, seed, threads, output)


def parse_basis(records, dimension: int) -> tuple:
    """Chart basis from a list of {kind, multi_index | frequency} records."""
    from .manifold import BasisFunction

    if not isinstance(records, list) or not records:
        raise ConfigError("basis", "expected a nonempty list of records")
    out = []
    for i, rec in enumerate(records):
        path = f"basis[{i}]"
        if not isinstance(rec, dict):
            raise ConfigError(path, "expected an object")
        kind = rec.get("kind")
        field = "multi_index" if kind == "hermite" else "frequency"
        if kind not in ("hermite", "cos", "sin"):
            raise ConfigError(f"{path}.kind", f"must be hermite, cos or sin, got {kind!r}")
        extra = set(rec) - {"kind", field}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
        index = rec.get(field)
        if not isinstance(index, list) or len(index) != dimension:
            raise ConfigError(f"{path}.{field}", f"expected a list of length {dimension}")
        try:
            out.append(BasisFunction(kind, tuple(index)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.{field}", str(exc)) from exc
    if len(set(out)) != len(out):
        raise ConfigError("basis", "duplicate basis functions")
    return tuple(out)


def _validate(kind: str, s: dict) -> None:
    if "time" in s:
        t = s["time"]
        t["t_end"] = _positive(t["t_end"], "time.t_end")
        t["dt"] = _positive(t["dt"], "time.dt")
        if t["dt"] > t["t_end"]:
            raise ConfigError("time.dt", "must not exceed time.t_end")
        if t["integrator"] not in ("rk4", "euler"):
            raise ConfigError("time.integrator", f"must be rk4 or euler, got {t['integrator']!r}")
    q = s.get("quadrature", {})
    for key in ("hermite_nodes", "sphere_polar", "sphere_azimuthal"):
        if key in q:
            q[key] = _positive(q[key], f"quadrature.{key}", integer=True)
    if kind == "geodesic":
        n = s["dimension"] = _positive(s["dimension"], "dimension", integer=True)
        if n > 3:
            raise ConfigError("dimension", "geodesic runs support dimension <= 3")
        if s["flow"] not in ("kl_first", "kl_second"):
            raise ConfigError("flow", f"must be kl_first or kl_second, got {s['flow']!r}")
        if "basis" in s:
            s["basis"] = [r.to_record() for r in parse_basis(s["basis"], n)]
        else:
            from .manifold import hermite_basis

            s["basis"] = [r.to_record() for r in hermite_basis(n)]
        size = len(s["basis"])
        ic = s["initial_condition"]
        if size != 2 and ic == DEFAULTS["geodesic"]["initial_condition"]:
            raise ConfigError("initial_condition", f"give start and target with {size} coefficients")
        for key in ("start", "target"):
            ic[key] = _coef_list(ic.get(key), f"initial_condition.{key}", size)
    if kind == "boltzmann":
        if s["dimension"] != 3:
            raise ConfigError("dimension", "the Boltzmann solver works on R^3")
        d = s["basis_degree"]
        if isinstance(d, bool) or not isinstance(d, int) or not 2 <= d <= 8:
            raise ConfigError("basis_degree", f"must be an integer in [2, 8], got {d!r}")
        inter = s["interaction"]
        if inter.get("type") not in ("maxwell", "maxwell_constant", "power_law"):
            raise ConfigError("interaction.type", f"must be maxwell or power_law, got {inter.get('type')!r}")
        if inter["type"] == "power_law":
            raise ConfigError("interaction.type", "power_law kernels are not supported by the Galerkin flow")
        inter["strength"] = _positive(inter.get("strength", 1.0), "interaction.strength")
        ic = s["initial_condition"]
        if ic.get("kind") not in ("perturbed", "isotropic", "bimodal", "maxwell"):
            raise ConfigError(
                "initial_condition.kind", f"must be perturbed, isotropic, bimodal or maxwell, got {ic.get('kind')!r}"
            )
        amp = ic.get("amplitude", 0.0)
        if isinstance(amp, bool) or not isinstance(amp, (int, float)) or not np.isfinite(amp):
            raise ConfigError("initial_condition.amplitude", f"expected a finite number, got {amp!r}")
        if ic["kind"] in ("perturbed", "isotropic") and d < 4:
            raise ConfigError("basis_degree", f"initial condition {ic['kind']!r} needs degree >= 4")
        if ic["kind"] == "bimodal" and not 0.0 <= amp <= 1.0:
            raise ConfigError("initial_condition.amplitude", "bimodal amplitude must lie in [0, 1]")
        if s["positivity"] not in ("abort", "clip-and-flag"):
            raise ConfigError("positivity", f"must be abort or clip-and-flag, got {s['positivity']!r}")


# ---------------------------------------------------------------- output


def write_atomic(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(columns: Sequence[str], rows: np.ndarray) -> str:
    lines = [",".join(columns)]
    for row in np.atleast_2d(rows):
        lines.append(",".join("%.17g" % float(v) for v in row))
    return "\n".join(lines) + "\n"


def _time_grid(t: dict) -> np.ndarray:
    steps = int(round(t["t_end"] / t["dt"]))
    return np.linspace(0.0, steps * t["dt"], steps + 1)


# ---------------------------------------------------------------- runs


def _run_geodesic(cfg: RunConfig) -> tuple[int, str, str]:
    from . import divergence, manifold as mf
    from .quadrature import make_hermite_rule

    s = cfg.settings
    if s["time"]["integrator"] != "rk4":
        raise ConfigError("time.integrator", "geodesic flows are integrated with rk4")
    rule = make_hermite_rule(s["dimension"], s["quadrature"]["hermite_nodes"])
    basis = parse_basis(s["basis"], s["dimension"])
    q0 = mf.ExpDensity(mf.ChartVector.centered(basis, s["initial_condition"]["start"]), rule)
    q2 = mf.ExpDensity(mf.ChartVector.centered(basis, s["initial_condition"]["target"]), rule)
    times = _time_grid(s["time"])
    if s["flow"] == "kl_first":
        trace = divergence.kl_flow_first(q0, q2, times)
    else:
        trace = divergence.kl_flow_second(q0, q2, times)
    cols = ("t", "kl", "entropy", "norm_check")
    rows = np.column_stack([trace.times] + [trace.column(c) for c in cols[1:]])
    summary = f"geodesic {s['flow']}: kl {rows[0, 1]:.6g} -> {rows[-1, 1]:.6g} over {len(times)} times"
    return EXIT_OK, format_csv(cols, rows), summary


def _initial_density(s: dict):
    from .acceptance import perturbed_initial_condition
    from .boltzmann import PolyDensity, bimodal_density, isotropic_quartic

    d, ic = s["basis_degree"], s["initial_condition"]
    amp = float(ic.get("amplitude", 0.0))
    if ic["kind"] == "perturbed":
        return perturbed_initial_condition(amp, d)
    if ic["kind"] == "isotropic":
        c = amp * isotropic_quartic(d)
        c[0] = 1.0
        return PolyDensity(c, d)
    if ic["kind"] == "bimodal":
        return bimodal_density(amp, d)
    return PolyDensity.maxwell(d)


def _run_boltzmann(cfg: RunConfig) -> tuple[int, str, str]:
    from .boltzmann import TRACE_COLUMNS, Interaction, relax

    s = cfg.settings
    b = Interaction.maxwell(s["interaction"]["strength"])
    trace = relax(
        _initial_density(s), b, _time_grid(s["time"]), integrator=s["time"]["integrator"],
        positivity=s["positivity"], diagnostic_nodes=s["quadrature"]["hermite_nodes"],
    )
    rows = np.column_stack([trace.times] + [trace.column(c) for c in TRACE_COLUMNS[1:]])
    fl = trace.flags
    summary = (
        f"boltzmann: H {rows[0, 1]:.12g} -> {rows[-1, 1]:.12g}, final kl {rows[-1, 8]:.3g}, "
        f"mass drift {fl['mass_drift']:.2g}, energy drift {fl['energy_drift']:.2g}, clipped {fl['clipped']}"
    )
    return EXIT_OK, format_csv(TRACE_COLUMNS, rows), summary


def _json_ready(obj: Any):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(cfg: RunConfig, checks: dict) -> tuple[int, str, str]:
    ok = all(c["passed"] for c in checks.values())
    doc = {"run": cfg.run, "passed": ok, "checks": checks, "resolved_config": cfg.resolved()}
    text = json.dumps(_json_ready(doc), indent=2, sort_keys=True) + "\n"
    summary = f"{cfg.run}: {sum(c['passed'] for c in checks.values())}/{len(checks)} checks passed"
    return (EXIT_OK if ok else EXIT_CHECK), text, summary


def _run_kinematics(cfg: RunConfig):
    from .acceptance import criterion_kinematics, criterion_measure

    q = cfg.settings["quadrature"]
    return _report(cfg, {
        "kinematics": criterion_kinematics(cfg.seed),
        "measure_identities": criterion_measure(
            cfg.seed, sphere_polar=q["sphere_polar"], sphere_azimuthal=q["sphere_azimuthal"]
        ),
    })


def _run_hyvarinen(cfg: RunConfig):
    from . import hyvarinen as hy, manifold as mf
    from .acceptance import _sobolev_basis, criterion_sobolev
    from .quadrature import SeededSampler, make_hermite_rule

    rng = SeededSampler(cfg.seed).generator
    rule = make_hermite_rule(2, 30)
    u = mf.ChartVector.centered(_sobolev_basis(), 0.2 * rng.standard_normal(7))
    pts = rng.standard_normal((20, 2))
    product = hy.product_rule_error(u, rule, pts)
    square = max(hy.stein_square_expansion_error(u, j, pts) for j in range(2))
    grad_fd = hy.gradient_fd_error(u, pts)
    return _report(cfg, {
        "sobolev": criterion_sobolev(cfg.seed),
        "product_rule": {"passed": product <= 1e-10, "error": product},
        "stein_square_expansion": {"passed": square <= 1e-10, "error": square},
        "analytic_gradient": {"passed": grad_fd <= 1e-7, "error": grad_fd},
    })


def _run_orlicz(cfg: RunConfig):
    from .acceptance import criterion_orlicz

    return _report(cfg, {"orlicz": criterion_orlicz(cfg.seed)})


RUNNERS = {
    "geodesic": _run_geodesic,
    "boltzmann": _run_boltzmann,
    "hyvarinen-check": _run_hyvarinen,
    "kinematics-test": _run_kinematics,
    "orlicz-check": _run_orlicz,
}


def _numerical_errors() -> tuple:
    from .boltzmann import PositivityError, QuadratureOrderError
    from .divergence import FlowError
    from .manifold import DomainGuardError, NotRepresentableError
    from .orlicz import MembershipError
    from .quadrature import EvaluationDomainError, ResourceLimitError

    return (
        FlowError, PositivityError, QuadratureOrderError, DomainGuardError, NotRepresentableError,
        MembershipError, EvaluationDomainError, ResourceLimitError, FloatingPointError,
    )


def error_record(kind: str, exc: BaseException) -> str:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "path", None):
        record["path"] = exc.path
    if getattr(exc, "time", None) is not None:
        record["time"] = exc.time
    return json.dumps(record, sort_keys=True)


def run(cfg: RunConfig, out: str | None = None, stdout=None, stderr=None) -> int:
    """Execute a validated configuration; returns the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    print("resolved-config: " + json.dumps(cfg.resolved(), sort_keys=True), file=stderr)
    try:
        code, text, summary = RUNNERS[cfg.run](cfg)
    except ConfigError as exc:
        print(error_record("config", exc), file=stderr)
        return EXIT_CONFIG
    except _numerical_errors() as exc:
        print(error_record("numerical", exc), file=stderr)
        return EXIT_NUMERICAL
    target = out or cfg.output
    if target:
        write_atomic(target, text)
    elif cfg.run in ("geodesic", "boltzmann"):
        stdout.write(text)
    if cfg.run not in ("geodesic", "boltzmann"):
        stdout.write(text)
    print(summary, file=stderr)
    return code


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igboltz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in RUN_KINDS:
        p = sub.add_parser(kind, help=f"{kind} run")
        p.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
        p.add_argument("--out", help="output path, overrides the config")
        p.add_argument("--threads", type=int, help="worker threads (recorded in the resolved config)")
        p.add_argument("--seed", type=int, help="random seed, overrides the config")
    acc = sub.add_parser("acceptance", help="run the acceptance battery")
    acc.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    acc.add_argument("--out", help="write the pass/fail lines and measured values as JSON")
    return parser


def _run_acceptance(args, stdout) -> int:
    from .acceptance import CRITERIA, run_all

    numbers = args.only or sorted(CRITERIA)
    bad = [n for n in numbers if n not in CRITERIA]
    if bad:
        print(error_record("config", ConfigError("--only", f"unknown criteria {bad}")), file=sys.stderr)
        return EXIT_CONFIG
    results = run_all(numbers, echo=lambda line: print(line, file=stdout, flush=True))
    ok = all(r.passed and r.within_budget for r in results)
    if args.out:
        doc = [
            {"criterion": r.number, "name": r.name, "passed": r.passed, "runtime": r.runtime,
             "budget": r.budget, "details": r.details}
            for r in results
        ]
        write_atomic(args.out, json.dumps(_json_ready(doc), indent=2) + "\n")
    return EXIT_OK if ok else EXIT_CHECK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "acceptance":
        return _run_acceptance(args, sys.stdout)
    try:
        text = "{}"
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from exc
        doc = json.loads(text) if text.strip() else {}
        if isinstance(doc, dict):
            if args.seed is not None:
                doc["seed"] = args.seed
            if args.threads is not None:
                doc["threads"] = args.threads
            text = json.dumps(doc)
        cfg = parse_config(text, run=args.command)
    except json.JSONDecodeError as exc:
        err = ConfigError("<document>", f"malformed JSON ({exc.msg} at line {exc.lineno})")
        print(error_record("config", err), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(error_record("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
