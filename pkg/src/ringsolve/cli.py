"""Command-line front end for the solver pipeline.

Subcommands: solve, plan, scale, sfdr, metrics, sweep.  Every output
document embeds the fully resolved configuration so identical invocations
produce byte-identical files.  Exit codes: 0 success, 2 validation error,
3 solver divergence / no stable orientation, 4 singular matrix.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import metrics as metrics_mod
from . import phase as phase_mod
from .dynamics import (
    Mode,
    MultiPathRow,
    SolveOptions,
    SolveResult,
    SolverConfig,
    UnstableSystem,
    bandwidth,
    solve,
)
from .netlist import (
    CountScheme,
    MemristorBank,
    NonFiniteEntry,
    OutOfRange,
    PlanOptions,
    QuantizerSpec,
    TargetOutOfDeviceRange,
    integrator_count,
    plan as compile_plan,
    plan_to_dict,
    program_memristors,
)
from .problem import (
    LinearProblem,
    RangeViolation,
    ScalePolicy,
    SingularMatrix,
    load_problem,
    scale_problem,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_SINGULAR = 4


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved settings for one invocation."""

    subcommand: str
    input_path: Optional[str]
    output_path: Optional[str]
    mode: Mode
    k_vco: float
    k_pd: float
    eps: float
    t_max: float
    dt: float
    quantize_bits: Optional[int]
    r_in: float
    r_unit: float
    r_on: float
    memristor: bool
    write_noise: float
    seed: int
    scale: Optional[ScalePolicy]
    scale_c: float
    trace_path: Optional[str]
    decimation: int

    def __post_init__(self) -> None:
        if self.k_vco <= 0 or self.k_pd <= 0:
            raise ValueError("--kvco and --kpd must be positive")
        if self.eps <= 0 or self.t_max <= 0:
            raise ValueError("--eps and --tmax must be positive")
        if self.dt < 0:
            raise ValueError("--dt must be nonnegative (0 = auto)")
        if self.r_in <= 0 or self.r_unit <= 0:
            raise ValueError("--r-in and --r-unit must be positive")
        if self.r_on < 0:
            raise ValueError("--r-on must be nonnegative")
        if self.quantize_bits is not None and not 1 <= self.quantize_bits <= 16:
            raise ValueError("--quantize-bits must be in [1, 16]")
        if self.write_noise < 0:
            raise ValueError("--write-noise must be nonnegative")
        if self.decimation < 0:
            raise ValueError("--decimation must be nonnegative (0 = auto)")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["mode"] = self.mode.value
        doc["scale"] = self.scale.value if self.scale else "off"
        # where the document lands does not affect the computation
        doc.pop("output_path")
        return doc


def _add_solver_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--kvco", type=float, default=300e6, help="VCO gain, Hz/V")
    sp.add_argument(
        "--kpd",
        type=float,
        default=1.0 / math.pi,
        help="phase-detector gain (default v_dd/pi with v_dd = 1 V)",
    )
    sp.add_argument("--mode", choices=["structural", "ideal"], default="structural")
    sp.add_argument("--eps", type=float, default=1e-3, help="residual threshold, V")
    sp.add_argument("--tmax", type=float, default=10e-6, help="horizon, s")
    sp.add_argument("--dt", type=float, default=0.0, help="step, s (0 = auto)")
    sp.add_argument("--quantize-bits", type=int, default=None)
    sp.add_argument("--r-in", type=float, default=2000.0, help="input resistance, ohm")
    sp.add_argument("--r-unit", type=float, default=1000.0, help="ladder unit, ohm")
    sp.add_argument("--r-on", type=float, default=0.0, help="switch on-resistance, ohm")
    sp.add_argument("--memristor", action="store_true", help="program memristors")
    sp.add_argument("--write-noise", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", choices=["off", "exact", "estimate"], default="off")
    sp.add_argument("--scale-c", type=float, default=1e3)
    sp.add_argument("--trace", dest="trace_path", default=None, help="trace CSV path")
    sp.add_argument("--decimation", type=int, default=0)
    sp.add_argument("--plot-stub", action="store_true", help="emit a plot script stub next to the trace")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringsolve",
        description="Analog linear-equation solver: planner, simulator, and reports",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_solve = sub.add_parser("solve", help="solve a problem file dynamically")
    p_solve.add_argument("input", help="problem JSON file")
    p_solve.add_argument("--out", default=None)
    _add_solver_flags(p_solve)

    p_plan = sub.add_parser("plan", help="compile and dump the netlist plan")
    p_plan.add_argument("input")
    p_plan.add_argument("--out", default=None)
    _add_solver_flags(p_plan)

    p_scale = sub.add_parser("scale", help="report norms and the scaling factor")
    p_scale.add_argument("input")
    p_scale.add_argument("--out", default=None)
    p_scale.add_argument("--policy", choices=["exact", "estimate"], default="exact")
    p_scale.add_argument("--scale-c", type=float, default=1e3)

    p_sfdr = sub.add_parser("sfdr", help="phase-domain integrator spectral report")
    p_sfdr.add_argument("--out", default=None)
    p_sfdr.add_argument("--m-phases", type=int, default=32)
    p_sfdr.add_argument("--f0", type=float, default=5e6, help="VCO center, Hz")
    p_sfdr.add_argument("--f-ref", type=float, default=0.0, help="reference, Hz (0 = f0 after divider)")
    p_sfdr.add_argument("--kvco", type=float, default=10e6)
    p_sfdr.add_argument("--vdd", type=float, default=1.0)
    p_sfdr.add_argument(
        "--method",
        choices=[m.value for m in phase_mod.PhaseMethod],
        default=phase_mod.PhaseMethod.DIRECT_LEVEL_SHIFT_16.value,
    )
    p_sfdr.add_argument("--dt", type=float, default=0.0)
    p_sfdr.add_argument("--samples", type=int, default=32768)
    p_sfdr.add_argument("--tone-bin", type=int, default=12, help="tone frequency in DFT bins")
    p_sfdr.add_argument("--tone-amp", type=float, default=0.02, help="tone amplitude, V")
    p_sfdr.add_argument("--spectrum", default=None, help="spectrum CSV path")

    p_metrics = sub.add_parser("metrics", help="energy/throughput report row")
    p_metrics.add_argument("--out", default=None)
    p_metrics.add_argument("--n", type=int, default=8, help="matrix dimension")
    p_metrics.add_argument("--input", default=None, help="problem file; census from its plan")
    p_metrics.add_argument("--time-us", type=float, required=True, help="convergence time, us")
    p_metrics.add_argument("--per-integrator-mw", type=float, default=0.15)
    p_metrics.add_argument(
        "--phase-method",
        choices=[m.value for m in phase_mod.PhaseMethod],
        default=None,
        help="also report the method's level-shifter relative cost",
    )
    p_metrics.add_argument("--method-label", default="this-work")

    p_sweep = sub.add_parser("sweep", help="repeat solve over a list of k_vco values")
    p_sweep.add_argument("input")
    p_sweep.add_argument("--kvco-list", required=True, help="comma-separated Hz/V values")
    p_sweep.add_argument("--out", default=None)
    _add_solver_flags(p_sweep)

    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand,
        input_path=getattr(args, "input", None),
        output_path=getattr(args, "out", None),
        mode=Mode(args.mode),
        k_vco=args.kvco,
        k_pd=args.kpd,
        eps=args.eps,
        t_max=args.tmax,
        dt=args.dt,
        quantize_bits=args.quantize_bits,
        r_in=args.r_in,
        r_unit=args.r_unit,
        r_on=args.r_on,
        memristor=args.memristor,
        write_noise=args.write_noise,
        seed=args.seed,
        scale={"off": None, "exact": ScalePolicy.EXACT, "estimate": ScalePolicy.ESTIMATE}[args.scale],
        scale_c=args.scale_c,
        trace_path=args.trace_path,
        decimation=args.decimation,
    )


def _solver_pieces(rc: RunConfig) -> tuple[SolverConfig, SolveOptions]:
    cfg = SolverConfig(
        k_vco=rc.k_vco,
        k_pd=rc.k_pd,
        eps_residual=rc.eps,
        t_max=rc.t_max,
        dt=rc.dt,
        mode=rc.mode,
    )
    quantizer = None
    if rc.quantize_bits is not None:
        quantizer = QuantizerSpec(
            bits=rc.quantize_bits, r_unit=rc.r_unit, r_in=rc.r_in, r_on=rc.r_on
        )
    options = SolveOptions(
        r_in=rc.r_in,
        plan_options=PlanOptions(quantizer=quantizer),
        memristor=MemristorBank(write_noise_sigma=rc.write_noise) if rc.memristor else None,
        memristor_seed=rc.seed,
        scale=rc.scale,
        estimate_c=rc.scale_c,
        trace_decimation=rc.decimation,
    )
    return cfg, options


def _emit(doc: dict, out_path: Optional[str]) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_text(text: str, out_path: Optional[str]) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_PLOT_STUB = """#!/usr/bin/env python3
# Minimal plot stub for a solver trace; plotting itself is out of scope.
import csv, sys

path = {path!r}
with open(path) as fh:
    rows = list(csv.DictReader(fh))
print(f"{{len(rows)}} trace rows in {{path}}; columns: {{list(rows[0].keys())}}")
print("Plot t_s against x* columns with the tool of your choice.")
"""


def _result_document(result: SolveResult, problem: LinearProblem, rc: RunConfig) -> dict:
    residual_original = float(np.abs(problem.b - problem.a @ result.x).max())
    doc = {
        "x": result.x.tolist(),
        "residual_inf": result.residual_inf,
        "residual_original_inf": residual_original,
        "converged": result.converged,
        "t_converge_s": result.t_converge,
        "stability": {
            "max_re_eig": result.stability.max_re_eig,
            "stable": result.stability.stable,
            "fallback_mode": result.fallback,
        },
        "scale_factor": result.scale_factor,
        "diagnostics": result.diagnostics,
        "plan_summary": plan_to_dict(result.plan)["census"] | {
            "negated": result.plan.negated
        } if result.plan else None,
        "config": _run_config_dict(rc),
    }
    return doc


def _run_config_dict(rc: RunConfig) -> dict:
    return rc.to_dict()


def _cmd_solve(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    problem = load_problem(args.input)
    cfg, options = _solver_pieces(rc)
    result = solve(problem, cfg, options)
    _emit(_result_document(result, problem, rc), args.out)
    if rc.trace_path and result.trace is not None:
        result.trace.write_csv(rc.trace_path)
        if args.plot_stub:
            with open(rc.trace_path + ".plot.py", "w", encoding="utf-8") as fh:
                fh.write(_PLOT_STUB.format(path=rc.trace_path))
    if not result.converged:
        print(f"solver did not converge: {result.diagnostics or 'residual above threshold'}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    problem = load_problem(args.input)
    _, options = _solver_pieces(rc)
    circuit = compile_plan(problem, rc.r_in, options.plan_options)
    if options.memristor is not None:
        circuit = program_memristors(circuit, options.memristor, rc.seed)
    doc = plan_to_dict(circuit)
    doc["scheme_counts"] = {
        "before_reuse": integrator_count(problem.n, CountScheme.BEFORE_REUSE),
        "after_reuse": integrator_count(problem.n, CountScheme.AFTER_REUSE),
        "mimo_symmetric": integrator_count(problem.n, CountScheme.MIMO_SYMMETRIC),
    }
    # loop bandwidth is defined for rows with a single feedback path;
    # reported in both angular and cyclic units
    cfg, _ = _solver_pieces(rc)
    bandwidths = {}
    for i in range(problem.n):
        try:
            rad_s = bandwidth(circuit, i, cfg)
        except MultiPathRow:
            continue
        bandwidths[str(i)] = {"rad_per_s": rad_s, "hz": rad_s / (2.0 * math.pi)}
    doc["single_path_bandwidth"] = bandwidths
    doc["config"] = rc.to_dict()
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_scale(args: argparse.Namespace) -> int:
    problem = load_problem(args.input)
    policy = ScalePolicy(args.policy)
    sp = scale_problem(problem, policy, args.scale_c)
    doc = {
        "n": problem.n,
        "a_inf_norm": sp.a_inf_norm,
        "a_inv_inf_norm": sp.a_inv_inf_norm,
        "kappa_inf": sp.kappa_inf,
        "factor_scale": sp.factor_scale,
        "scaled_a": sp.scaled_a.tolist(),
        "config": {"policy": policy.value, "scale_c": args.scale_c},
    }
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_sfdr(args: argparse.Namespace) -> int:
    cfg = phase_mod.PhaseConfig(
        m_phases=args.m_phases,
        f0=args.f0,
        f_ref=args.f_ref,
        k_vco=args.kvco,
        v_dd=args.vdd,
        method=phase_mod.PhaseMethod(args.method),
        dt=args.dt,
    )
    n = args.samples
    if n < 4096 or n & (n - 1):
        raise ValueError("--samples must be a power of two >= 4096")
    t = np.arange(n) * cfg.dt
    f_sig = args.tone_bin / (n * cfg.dt)
    v_in = cfg.v0 + args.tone_amp * np.sin(2.0 * math.pi * f_sig * t)
    out = phase_mod.simulate_phase_integrator(v_in, cfg)
    report = phase_mod.sfdr(out, f_sig, cfg)
    doc = {
        "sfdr_db": report.sfdr_db,
        "fundamental_hz": report.fundamental_hz,
        "worst_spur_hz": report.worst_spur_hz,
        "config": {
            "m_phases": cfg.m_phases,
            "f0_hz": cfg.f0,
            "f_ref_hz": cfg.f_ref,
            "k_vco_hz_per_v": cfg.k_vco,
            "v_dd": cfg.v_dd,
            "method": cfg.method.value,
            "dt_s": cfg.dt,
            "samples": n,
            "tone_hz": f_sig,
            "tone_amp_v": args.tone_amp,
        },
    }
    _emit(doc, args.out)
    if args.spectrum:
        report.write_csv(args.spectrum)
    return EXIT_OK


def _cmd_metrics(args: argparse.Namespace) -> int:
    if args.time_us <= 0:
        raise ValueError("--time-us must be positive")
    if args.input:
        problem = load_problem(args.input)
        n = problem.n
        census = compile_plan(problem).total_integrators
        census_source = "plan"
    else:
        n = args.n
        census = integrator_count(n, CountScheme.AFTER_REUSE)
        census_source = "after-reuse-bound"
    power = metrics_mod.power_estimate(census, args.per_integrator_mw)
    report = metrics_mod.efficiency(
        metrics_mod.ops_count(n), power, args.time_us * 1e-6, integrator_count=census
    )
    row = metrics_mod.table_row(report, args.method_label, f"{n}x{n}")
    doc = {
        "n_ops": report.n_ops,
        "power_mw": report.power_mw,
        "t_converge_us": report.t_converge_us,
        "energy_uj": report.energy_uj,
        "mops_per_s": report.mops_per_s,
        "gops_per_w": report.gops_per_w,
        "integrator_count": report.integrator_count,
        "census_source": census_source,
        "table_row": row,
        "config": {
            "n": n,
            "time_us": args.time_us,
            "per_integrator_mw": args.per_integrator_mw,
            "method_label": args.method_label,
        },
    }
    if args.phase_method:
        gain = phase_mod.effective_kvco(
            phase_mod.PhaseConfig(method=phase_mod.PhaseMethod(args.phase_method))
        )
        doc["level_shifter_relative_cost"] = gain.level_shifters
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    rc = _run_config(args)
    problem = load_problem(args.input)
    try:
        kvcos = [float(v) for v in args.kvco_list.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --kvco-list: {exc}") from exc
    if not kvcos:
        raise ValueError("--kvco-list is empty")

    header = "k_vco_hz,converged,fallback,t_converge_s,residual_inf," + ",".join(
        f"x{i}" for i in range(problem.n)
    )
    lines = [header]
    worst = EXIT_OK
    for kvco in kvcos:  # fixed input order; points are independent
        point_rc = dataclasses.replace(rc, k_vco=kvco)
        cfg, options = _solver_pieces(point_rc)
        result = solve(problem, cfg, options)
        if not result.converged:
            worst = EXIT_DIVERGENCE
        lines.append(
            ",".join(
                [
                    f"{kvco:.9g}",
                    str(result.converged).lower(),
                    result.fallback,
                    "" if result.t_converge is None else f"{result.t_converge:.9g}",
                    f"{result.residual_inf:.9g}",
                ]
                + [f"{v:.9g}" for v in result.x]
            )
        )
    _emit_text("\n".join(lines) + "\n", args.out)
    return worst


_DISPATCH = {
    "solve": _cmd_solve,
    "plan": _cmd_plan,
    "scale": _cmd_scale,
    "sfdr": _cmd_sfdr,
    "metrics": _cmd_metrics,
    "sweep": _cmd_sweep,
}


def run(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return _DISPATCH[args.subcommand](args)
    except SingularMatrix as exc:
        print(f"singular matrix: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except UnstableSystem as exc:
        print(f"unstable system: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (
        RangeViolation,
        NonFiniteEntry,
        OutOfRange,
        TargetOutOfDeviceRange,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
