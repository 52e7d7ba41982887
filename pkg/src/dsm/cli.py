"""Command-line front end: certify, solve and audit corpus problems, and run the demos.

Exit status: 0 certified and audited clean, 2 certificate failure, 3 audit
violations, 4 integration failure, 64 usage error.

Examples:
  dsm solve --problem twobytwo --field newton
  dsm certify --problem modified-newton-fail --field modified-newton
  dsm audit --problem affine-1d --field newton --c1-scale 2
  dsm demo linear --T 10
  dsm demo monotone
  dsm corpus list
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import corpus as corpus_mod
from .audit import (audit_trajectory, certify, check_ball_condition, check_theorem2_ball,
                    check_theorem3_condition, estimate_constants,
                    finite_time_horizon, residual_envelope)
from .core import Ball, Certificate, Check, ProblemSpec, RateFunctions, rates_from_spec
from .errors import DSMError, StepFailure
from .fields import FieldKind, build_field
from .integrate import IntegrationConfig, solve_ivp, solve_to_finite_horizon
from .linreg import (AlphaSchedule, evolve_linear, limit_state, minimal_norm_solution,
                     slow_convergence_witness)
from .monotone import audit_monotone_residual, solve_monotone, validate_alpha_schedule_A3

EXIT_OK = 0
EXIT_CERTIFICATE = 2
EXIT_AUDIT = 3
EXIT_INTEGRATION = 4
EXIT_USAGE = 64

DEFAULT_OUT_DIR = "dsm-runs"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _plain(obj):
    """Convert numpy values, enums and tuples into JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


@dataclass
class RunReport:
    """Everything one command produced, as JSON-native data."""

    command: str
    problem: str
    field_kind: str
    exit_status: int
    config: dict = field(default_factory=dict)
    certificate: Optional[dict] = None
    trajectory: Optional[dict] = None
    envelope: Optional[dict] = None
    extra: dict = field(default_factory=dict)
    timing: Optional[dict] = None

    def __post_init__(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, _plain(getattr(self, f.name)))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _trajectory_summary(traj) -> dict:
    return {"final_state": traj.final_state, "final_residual": traj.final_residual,
            "final_time": traj.final_time, "exit_reason": traj.exit_reason,
            "points": len(traj), "nsteps": traj.nsteps, "nfev": traj.nfev}


def write_trajectory_csv(path: Path, times, states, residuals, envelope, within) -> None:
    """One row per recorded time; floats use the shortest round-trip representation."""
    states = np.atleast_2d(states)
    header = ["t"] + [f"u_{i + 1}" for i in range(states.shape[1])] + \
        ["residual", "envelope", "within_ball"]
    lines = [",".join(header)]
    for i, t in enumerate(times):
        row = [repr(float(t))] + [repr(float(x)) for x in states[i]]
        row += [repr(float(residuals[i])), repr(float(envelope[i])), str(int(bool(within[i])))]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> dict:
    """Parse a trajectory CSV back into column arrays."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = np.array([[float(x) for x in line.split(",")] for line in text[1:]])
    return {name: rows[:, i] for i, name in enumerate(header)}


# --- problem setup -------------------------------------------------------------------------

@dataclass
class Setup:
    name: str
    problem: ProblemSpec
    entry: Optional[corpus_mod.CorpusEntry]
    kind: FieldKind
    ball: Ball
    integration: IntegrationConfig
    samples: int
    seed: int
    rates_spec: Optional[dict]
    root: Optional[np.ndarray]

    def echo(self) -> dict:
        return {"problem": self.name, "field": self.kind.value,
                "ball": {"center": self.ball.center, "radius": self.ball.radius},
                "integration": dataclasses.asdict(self.integration),
                "samples": self.samples, "seed": self.seed, "rates": self.rates_spec}


def _affine_problem(desc: dict) -> ProblemSpec:
    matrix = np.array(desc["matrix"], dtype=float)
    offset = np.array(desc["offset"], dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or offset.shape != (matrix.shape[0],):
        raise UsageError("affine problem needs a square matrix and a matching offset")
    try:
        root = np.linalg.solve(matrix, -offset)
    except np.linalg.LinAlgError:
        root = None
    return ProblemSpec(desc.get("name", "affine"), matrix.shape[0],
                       lambda u: matrix @ u + offset, lambda u: matrix, oracle_root=root)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def resolve_setup(args) -> Setup:
    cfg = _load_config(getattr(args, "config", None))
    problem_desc = args.problem if args.problem is not None else cfg.get("problem")
    if problem_desc is None:
        raise UsageError("a problem is required (--problem or config)")
    entry = None
    if isinstance(problem_desc, str):
        try:
            entry = corpus_mod.get(problem_desc)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        if entry.category != "nonlinear":
            raise UsageError(f"{problem_desc} is a {entry.category} entry; see the demo commands")
        problem = entry.problem
        name = entry.name
    elif isinstance(problem_desc, dict) and problem_desc.get("type") == "affine":
        problem = _affine_problem(problem_desc)
        name = problem.name
    else:
        raise UsageError("problem must be a corpus name or an affine description")

    field_name = args.field if args.field is not None else cfg.get("field")
    if field_name is None:
        if entry is None or not entry.recommended_fields:
            raise UsageError("a field is required (--field or config)")
        kind = entry.recommended_fields[0]
    else:
        try:
            kind = FieldKind(field_name)
        except ValueError:
            raise UsageError(f"unknown field {field_name!r}") from None
    if kind is FieldKind.CUSTOM and (entry is None or "a" not in entry.extras):
        raise UsageError("the custom field is available only on scaled-Newton corpus entries")

    ball_desc = cfg.get("ball")
    if ball_desc is not None:
        center = ball_desc.get("center", entry.recommended_ball.center if entry else None)
        radius = ball_desc.get("radius", entry.recommended_ball.radius if entry else None)
        if center is None or radius is None:
            raise UsageError("ball needs center and radius")
    elif entry is not None:
        center, radius = entry.recommended_ball.center, entry.recommended_ball.radius
    else:
        raise UsageError("inline problems need a ball in the config")
    if args.radius is not None:
        radius = args.radius
    try:
        ball = Ball(center, radius)
        if ball.dim != problem.dim:
            raise ValueError("ball dimension does not match the problem")
        integration = IntegrationConfig(**cfg.get("integration", {}))
        changes = {}
        if args.max_time is not None:
            changes["max_time"] = args.max_time
            if integration.record_every > args.max_time:
                changes["record_every"] = args.max_time
        if args.rel_tol is not None:
            changes["rel_tol"] = args.rel_tol
        if changes:
            integration = integration.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    samples = args.samples if args.samples is not None else int(cfg.get("samples", 256))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if samples < 100:
        raise UsageError("--samples must be at least 100")
    root = entry.oracle_root if entry is not None else problem.oracle_root
    return Setup(name, problem, entry, kind, ball, integration, samples, seed,
                 cfg.get("rates"), root)


# --- certification and audit rates ---------------------------------------------------------

def _certify_custom(setup: Setup) -> tuple[Certificate, RateFunctions, Optional[float]]:
    entry = setup.entry
    constants = estimate_constants(setup.problem, setup.ball, setup.samples, setup.seed)
    g0 = setup.problem.residual(setup.ball.center)
    rates = entry.exponent_rates(constants.m1, g0)
    info = {"kind": "custom", "a": rates.a, "b": rates.b, "g0": g0, "radius": setup.ball.radius}
    horizon = None
    if rates.a < 2.0:
        horizon = finite_time_horizon(rates, g0)
        info["horizon"] = horizon
        checks = [check_theorem2_ball(rates, g0, horizon, setup.ball.radius)]
    elif rates.a > 2.0:
        checks = [check_theorem3_condition(rates, g0, setup.ball.radius)]
    else:
        checks = [check_ball_condition(g0, rates, setup.ball)]
    g1 = float(entry.extras.get("g1", 1.0))
    cert = Certificate(checks=checks, constants=constants, c1=g1, c2=constants.m1 * g1, info=info)
    return cert, rates, horizon


def _scaled(rates: RateFunctions, scale: float) -> RateFunctions:
    if scale == 1.0:
        return rates
    return RateFunctions(g1=lambda t: scale * rates.g1(t), g2=rates.g2, a=rates.a, b=rates.b,
                         integral_g1=lambda t: scale * rates.int_g1(t))


def certify_setup(setup: Setup) -> tuple[Certificate, RateFunctions, Optional[float]]:
    """Certificate, the rates used to audit the run, and the finite horizon if any."""
    if setup.kind is FieldKind.CUSTOM:
        return _certify_custom(setup)
    cert = certify(setup.problem, setup.kind, setup.ball, setup.samples, setup.seed)
    if setup.rates_spec is not None:
        try:
            rates = rates_from_spec(setup.rates_spec)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad rates description: {exc}") from None
        g0 = setup.problem.residual(setup.ball.center)
        user = check_ball_condition(g0, rates, setup.ball)
        cert.checks.append(Check("ball-config-rates", user.lhs, user.rhs))
    else:
        rates = RateFunctions.constant(cert.c1, cert.c2) if cert.c1 > 0 else None
    return cert, rates, None


def _print_certificate(cert: Certificate) -> None:
    for c in cert.checks:
        status = "ok  " if c.satisfied else "FAIL"
        print(f"  [{status}] {c.condition_id:<20} lhs={c.lhs:.6g}  rhs={c.rhs:.6g}  "
              f"margin={c.margin:.6g}")
    print(f"  certificate {'passed' if cert.passed else 'FAILED'}")


# --- commands ------------------------------------------------------------------------------

def _out_dir(args) -> Path:
    base = args.out_dir or os.environ.get("DSM_OUT_DIR") or DEFAULT_OUT_DIR
    return Path(base)


def _write_report(run_dir: Path, report: RunReport) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.json").write_text(report.to_json() + "\n")


def _run_dir(args, *parts) -> Path:
    return _out_dir(args) / "-".join(parts)


def cmd_certify(args) -> int:
    start = time.perf_counter()
    setup = resolve_setup(args)
    cert, _, _ = certify_setup(setup)
    print(f"certify {setup.name} / {setup.kind.value}")
    _print_certificate(cert)
    status = EXIT_OK if cert.passed else EXIT_CERTIFICATE
    report = RunReport("certify", setup.name, setup.kind.value, status, setup.echo(),
                       certificate=cert.to_dict())
    if args.timing:
        report.timing = {"wall_seconds": time.perf_counter() - start}
    _write_report(_run_dir(args, "certify", setup.name, setup.kind.value), report)
    return status


def cmd_solve(args, command: str = "solve") -> int:
    start = time.perf_counter()
    setup = resolve_setup(args)
    cert, rates, horizon = certify_setup(setup)
    print(f"{command} {setup.name} / {setup.kind.value}")
    _print_certificate(cert)
    run_dir = _run_dir(args, command, setup.name, setup.kind.value)
    echo = setup.echo()
    echo.update({"force": args.force, "c1_scale": getattr(args, "c1_scale", 1.0)})
    report = RunReport(command, setup.name, setup.kind.value, EXIT_CERTIFICATE, echo,
                       certificate=cert.to_dict())
    if not cert.passed and not args.force:
        print("  not integrating: certificate failed (use --force to run anyway)")
        _write_report(run_dir, report)
        return EXIT_CERTIFICATE

    failure = None
    try:
        if setup.kind is FieldKind.CUSTOM:
            fld = setup.entry.custom_field()
        else:
            fld = build_field(setup.kind, setup.problem, setup.ball.center, cert.constants)
        if horizon is not None:
            traj = solve_to_finite_horizon(fld, setup.problem, setup.ball, horizon,
                                           setup.integration)
        else:
            traj = solve_ivp(fld, setup.problem, setup.ball, setup.integration)
    except StepFailure as exc:
        failure = str(exc)
        traj = exc.trajectory
    except DSMError as exc:
        failure = str(exc)
        traj = None

    envelope = None
    if traj is not None and rates is not None:
        audit_rates = _scaled(rates, getattr(args, "c1_scale", 1.0))
        cutoff = setup.entry.extras.get("contact_width") if setup.kind is FieldKind.CUSTOM \
            else None
        slack = getattr(args, "slack", None)
        env_report = audit_trajectory(traj, audit_rates, slack=slack, root=setup.root,
                                      residual_cutoff=cutoff)
        envelope = env_report.summary()
        envelope["violation_list"] = env_report.violations[:50]
        g0 = float(traj.residuals[0])
        env_values = [residual_envelope(audit_rates, g0, t) for t in traj.times]
    elif traj is not None:
        env_values = [math.nan] * len(traj)

    if traj is not None:
        report.trajectory = _plain(_trajectory_summary(traj))
        run_dir.mkdir(parents=True, exist_ok=True)
        within = [setup.ball.contains(u) for u in traj.states]
        write_trajectory_csv(run_dir / "trajectory.csv", traj.times, traj.states,
                             traj.residuals, env_values, within)
        print(f"  exit_reason={traj.exit_reason.value}  t={traj.final_time:.6g}  "
              f"residual={traj.final_residual:.6g}")
    if envelope is not None:
        report.envelope = _plain(envelope)
        print(f"  envelope violations={envelope['violations']}  "
              f"max_relative_overshoot={envelope['max_relative_overshoot']:.3g}")
        if "tail" in envelope and isinstance(envelope["tail"], dict):
            print(f"  tail violations={envelope['tail']['violations']}")

    if not cert.passed:
        status = EXIT_CERTIFICATE
    elif failure is not None:
        report.extra["integration_error"] = failure
        print(f"  integration failed: {failure}")
        status = EXIT_INTEGRATION
    elif envelope is not None and not envelope["clean"]:
        status = EXIT_AUDIT
    else:
        status = EXIT_OK
    if failure is not None:
        report.extra["integration_error"] = failure
    report.exit_status = status
    if args.timing:
        report.timing = {"wall_seconds": time.perf_counter() - start}
    _write_report(run_dir, report)
    return status


def cmd_audit(args) -> int:
    return cmd_solve(args, command="audit")


def cmd_demo_linear(args) -> int:
    start = time.perf_counter()
    entry = corpus_mod.get("psd-linear")
    setup = entry.problem
    op, f, u0 = setup.op, setup.f, setup.u0
    t_final = args.t_final

    zero = AlphaSchedule.zero()
    u_zero = evolve_linear(op, f, u0, zero, t_final)
    lim_zero = limit_state(op, f, u0, zero)
    err_zero = float(np.linalg.norm(u_zero - lim_zero))

    finite = AlphaSchedule.exponential(1.0)
    u_fin = evolve_linear(op, f, u0, finite, t_final)
    lim_fin = limit_state(op, f, u0, finite)
    err_fin = float(np.linalg.norm(u_fin - lim_fin))

    print(f"demo linear: A = diag{op.eigenvalues.tolist()}, f = {f.tolist()}, u0 = {u0.tolist()}")
    print(f"  alpha = 0:        u({t_final:g}) = {u_zero.tolist()}  limit {lim_zero.tolist()}  error {err_zero:.3g}")
    print(f"  alpha = exp(-t):  u({t_final:g}) = {u_fin.tolist()}  limit {lim_fin.tolist()}  error {err_fin:.3g}")
    rows = []
    print(f"  {'T':>8} {'lambda_m':>14} {'deviation':>12}   margin={args.margin:g}")
    for T in sorted({1.0, 10.0, 100.0, float(args.T)}):
        lam, dev = slow_convergence_witness(T, args.margin)
        rows.append({"T": T, "lambda_m": lam, "deviation": dev})
        print(f"  {T:>8g} {lam:>14.8g} {dev:>12.8g}")

    # residual |A u - f| of the unregularised run decays at least like exp(-lambda_min+ t)
    y = minimal_norm_solution(op, f)
    lam_pos = float(op.eigenvalues[op.eigenvalues > 0].min())
    r0 = float(np.linalg.norm(op.apply(u0) - f))
    times = np.linspace(0.0, t_final, int(round(t_final / 0.5)) + 1)
    states = np.array([evolve_linear(op, f, u0, zero, t) for t in times])
    residuals = [float(np.linalg.norm(op.apply(u) - f)) for u in states]
    envelope = [r0 * math.exp(-lam_pos * t) for t in times]
    ball = entry.recommended_ball
    ok = err_zero <= 1e-10 and err_fin <= 1e-6 and all(r["deviation"] > args.margin for r in rows)
    status = EXIT_OK if ok else EXIT_AUDIT
    report = RunReport("demo-linear", entry.name, "regularised-linear", status,
                       {"t_final": t_final, "T": args.T, "margin": args.margin},
                       trajectory={"final_state": u_zero, "final_residual": residuals[-1],
                                   "final_time": t_final, "exit_reason": "MaxTimeReached"},
                       extra={"minimal_norm_solution": y,
                              "alpha_zero": {"state": u_zero, "limit": lim_zero,
                                             "error": err_zero},
                              "finite_q": {"q": finite.total(), "state": u_fin,
                                           "limit": lim_fin, "error": err_fin},
                              "witness": rows})
    if args.timing:
        report.timing = {"wall_seconds": time.perf_counter() - start}
    run_dir = _out_dir(args) / "demo-linear"
    _write_report(run_dir, report)
    write_trajectory_csv(run_dir / "trajectory.csv", times, states, residuals, envelope,
                         [ball.contains(u) for u in states])
    return status


def cmd_demo_monotone(args) -> int:
    start = time.perf_counter()
    entry = corpus_mod.get("monotone-cubic")
    problem = entry.problem
    schedule = entry.extras["schedule"]
    u0 = entry.extras["u0"]
    max_time = args.max_time if args.max_time is not None else 200.0
    config = IntegrationConfig(max_time=max_time, record_every=min(0.1, max_time))
    if args.rel_tol is not None:
        config = config.replace(rel_tol=args.rel_tol)
    grid = np.linspace(0.0, max_time, 2001)
    a3 = validate_alpha_schedule_A3(schedule, grid)
    print(f"demo monotone: {entry.notes}")
    _print_certificate(a3)
    run_dir = _out_dir(args) / "demo-monotone"
    report = RunReport("demo-monotone", entry.name, "regularised-monotone", EXIT_OK,
                       {"max_time": max_time, "integration": dataclasses.asdict(config),
                        "schedule": schedule.spec},
                       certificate=a3.to_dict())
    try:
        traj = solve_monotone(problem, schedule, u0, config)
    except StepFailure as exc:
        report.exit_status = EXIT_INTEGRATION
        report.extra["integration_error"] = str(exc)
        _write_report(run_dir, report)
        print(f"  integration failed: {exc}")
        return EXIT_INTEGRATION
    env = audit_monotone_residual(traj, schedule, slack=getattr(args, "slack", None))
    err = float(np.linalg.norm(traj.final_state - entry.oracle_root))
    summary = env.summary()
    summary["violation_list"] = env.violations[:50]
    print(f"  u({traj.final_time:g}) = {traj.final_state.tolist()}  |u - y| = {err:.3g}")
    print(f"  phi-envelope violations={len(env.violations)} of {len(traj)}  "
          f"max_relative_overshoot={env.max_relative_overshoot:.3g}")
    report.trajectory = _plain(_trajectory_summary(traj))
    report.envelope = _plain(summary)
    report.extra["root_error"] = err
    status = EXIT_OK if a3.passed and env.clean else EXIT_AUDIT
    report.exit_status = status
    if args.timing:
        report.timing = {"wall_seconds": time.perf_counter() - start}
    _write_report(run_dir, report)
    ball = entry.recommended_ball
    write_trajectory_csv(run_dir / "trajectory.csv", traj.times, traj.states, traj.residuals,
                         env.envelope_values, [ball.contains(u) for u in traj.states])
    return status


def cmd_corpus_list(args) -> int:
    rows = []
    for e in corpus_mod.corpus():
        rows.append({"name": e.name, "category": e.category,
                     "dim": int(np.asarray(e.oracle_root).size),
                     "fields": [k.value for k in e.recommended_fields], "notes": e.notes})
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        for r in rows:
            fields = ",".join(r["fields"]) or "-"
            print(f"{r['name']:<22} {r['category']:<10} dim={r['dim']}  fields={fields}")
            print(f"{'':<22} {r['notes']}")
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------

def _common(p, problem_flags: bool = True):
    p.add_argument("--out-dir", help=f"output directory (default $DSM_OUT_DIR or {DEFAULT_OUT_DIR})")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock time in report.json (makes it non-deterministic)")
    if not problem_flags:
        return
    p.add_argument("--problem", help="corpus entry name")
    p.add_argument("--field", help="flow kind: " + ", ".join(k.value for k in FieldKind))
    p.add_argument("--radius", type=float, help="override the ball radius")
    p.add_argument("--samples", type=int, help="constant-estimation samples (default 256)")
    p.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p.add_argument("--max-time", type=float, help="integration horizon")
    p.add_argument("--rel-tol", type=float, help="integrator relative tolerance")
    p.add_argument("--config", help="JSON run description")
    p.add_argument("--force", action="store_true", help="integrate even if the certificate fails")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsm", description=__doc__.splitlines()[0],
                     epilog="\n".join(__doc__.splitlines()[2:]),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("solve", help="certify, integrate and audit")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="check the sufficient conditions only")
    _common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("audit", help="solve and audit, optionally with altered rates")
    _common(p)
    p.add_argument("--c1-scale", type=float, default=1.0,
                   help="multiply g1 in the audited envelope (2 gives a wrong, too fast envelope)")
    p.add_argument("--slack", type=float, help="relative audit slack (default 1e-6 + 10 rel_tol)")
    p.set_defaults(func=cmd_audit)

    demo = sub.add_parser("demo", help="regularised linear and monotone demonstrations")
    demo_sub = demo.add_subparsers(dest="demo", parser_class=_Parser, required=True)
    p = demo_sub.add_parser("linear", help="null-space limits and the slow-convergence witness")
    _common(p, problem_flags=False)
    p.add_argument("--T", type=float, default=10.0, help="witness horizon (default 10)")
    p.add_argument("--margin", type=float, default=0.5, help="witness margin (default 0.5)")
    p.add_argument("--t-final", type=float, default=40.0, help="evaluation time (default 40)")
    p.set_defaults(func=cmd_demo_linear)
    p = demo_sub.add_parser("monotone", help="regularised flow for the monotone cubic")
    _common(p, problem_flags=False)
    p.add_argument("--max-time", type=float, help="integration horizon (default 200)")
    p.add_argument("--rel-tol", type=float, help="integrator relative tolerance")
    p.add_argument("--slack", type=float, help="relative audit slack")
    p.set_defaults(func=cmd_demo_monotone)

    cp = sub.add_parser("corpus", help="inspect the built-in problems")
    corpus_sub = cp.add_subparsers(dest="corpus", parser_class=_Parser, required=True)
    p = corpus_sub.add_parser("list", help="list entries")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_corpus_list)
    return parser


def _validate(args):
    for name in ("T", "margin", "t_final", "max_time", "rel_tol", "radius", "c1_scale"):
        value = getattr(args, name, None)
        if value is not None and not (math.isfinite(value) and value > 0):
            raise UsageError(f"--{name.replace('_', '-')} must be positive and finite")
    margin = getattr(args, "margin", None)
    if margin is not None and not margin < 1:
        raise UsageError("--margin must lie in (0, 1)")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        print(f"dsm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
