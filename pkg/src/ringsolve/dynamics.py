"""Continuous-time dynamics of a compiled plan and the end-to-end solver.

The main integrator at node i is inverting: dx_i/dt = -g * v_node,i with
g = k_vco * k_pd, and the passive summing node divides by
gamma_i = 1 + sum_j w_ij, so

    dx_i/dt = -(g / gamma_i) * (b_i + sum_direct w_ij x_j + sum_inv w_ij y_j)

with each inverter stage a unity-gain inverting lag dy/dt = -g (x_src + y)/2.
The unique equilibrium of that system solves the realized A_hat x = b_hat.
The inverting convention is the one under which the single-path transfer
function has DC gain -R_f/R_in and under which all-negative matrices settle;
saddle-spectrum systems are stable in neither orientation, so solve() walks a
ladder: planned orientation, negated orientation, then the always-stable
normal-equations (Gram) system, and reports which rung produced the answer.

Integration is classical fixed-step 4th-order Runge-Kutta.  For a linear
system one RK4 step is the exact linear map z' = R z + S f, so the engine
precomputes (R, S) and applies powers of R in blocks; this is the same
arithmetic regrouped for throughput and it is byte-deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Optional, Union

import numpy as np

from .netlist import (
    CircuitPlan,
    MemristorBank,
    Orientation,
    PathSign,
    PlanOptions,
    plan as compile_plan,
    program_memristors,
    realized_matrix,
)
from .problem import (
    RANGE_LIMIT,
    LinearProblem,
    RangeViolation,
    ScalePolicy,
    _lu_factor,
    scale_problem,
)

# States beyond this magnitude are reported as divergence, not a crash.
OVERFLOW_LIMIT = 1e6

# Residual must stay below threshold for this many consecutive steps.
CONVERGENCE_WINDOW = 10

_EIG_DIM_LIMIT = 256


class EigenFailure(RuntimeError):
    """The eigenvalue iteration did not converge."""


class MultiPathRow(ValueError):
    """AC analysis asked for a row with more than one feedback path."""


class UnstableSystem(RuntimeError):
    """No orientation (nor the Gram fallback, if enabled) is stable."""


class Mode(Enum):
    IDEAL = "ideal"          # integrate b - A x directly, no netlist
    STRUCTURAL = "structural"  # full plan with summing nodes and inverters


@dataclass(frozen=True)
class SolverConfig:
    """Loop gains, convergence threshold, and integration horizon.

    k_vco is in Hz/V and k_pd in V per radian-equivalent; their product g is
    the loop rate constant in 1/s.  dt = 0 picks the step automatically as
    0.1 / (g * max_i gamma_i).
    """

    k_vco: float = 300e6
    k_pd: float = 1.0 / math.pi
    eps_residual: float = 1e-3
    t_max: float = 10e-6
    dt: float = 0.0
    mode: Mode = Mode.STRUCTURAL

    def __post_init__(self) -> None:
        if self.k_vco <= 0 or self.k_pd <= 0:
            raise ValueError("k_vco and k_pd must be positive")
        if self.eps_residual <= 0 or self.t_max <= 0:
            raise ValueError("eps_residual and t_max must be positive")
        if self.dt < 0:
            raise ValueError("dt must be nonnegative (0 = auto)")

    @property
    def g(self) -> float:
        """Loop rate constant k_vco * k_pd in 1/s."""
        return self.k_vco * self.k_pd


@dataclass(frozen=True)
class StabilityReport:
    max_re_eig: float
    stable: bool
    eig_method: str = "dense (numpy.linalg.eigvals)"


@dataclass(frozen=True)
class StateSpace:
    """The linear system dz/dt = m z + f realized by a plan.

    The first n_main states are the solver outputs; the rest are inverter
    stages.  (a_hat, b_hat) is the realized system in the caller's
    orientation, used for residual bookkeeping.
    """

    m: np.ndarray
    f: np.ndarray
    gamma: np.ndarray
    state_labels: tuple[str, ...]
    n_main: int
    a_hat: np.ndarray
    b_hat: np.ndarray


@dataclass(frozen=True)
class Trace:
    """Decimated state trajectory with the residual series."""

    t: np.ndarray
    states: np.ndarray  # main states only, one row per kept step
    residual_inf: np.ndarray

    def write_csv(self, destination: Union[str, IO[str]]) -> None:
        """Write "t_s,x0,...,x{n-1},residual_inf" rows, 9 significant digits."""
        n = self.states.shape[1]
        header = "t_s," + ",".join(f"x{i}" for i in range(n)) + ",residual_inf"

        def _dump(fh: IO[str]) -> None:
            fh.write(header + "\n")
            for k in range(len(self.t)):
                row = [self.t[k], *self.states[k], self.residual_inf[k]]
                fh.write(",".join(f"{v:.9g}" for v in row) + "\n")

        if hasattr(destination, "write"):
            _dump(destination)
        else:
            with open(destination, "w", encoding="utf-8") as fh:
                _dump(fh)


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a dynamic solve.

    ``converged`` means the residual of the simulated (realized) system
    stayed below the threshold for the trailing window and is still below it
    at the end of the run, in which case residual_inf <= eps_residual and
    t_converge <= t_max.  ``fallback`` records which ladder rung produced
    the answer: none, negated, gram, or gram-negated.
    """

    x: np.ndarray
    residual_inf: float
    converged: bool
    t_converge: Optional[float]
    stability: StabilityReport
    trace: Optional[Trace]
    fallback: str = "none"
    diagnostics: str = ""
    plan: Optional[CircuitPlan] = None
    scale_factor: float = 1.0


@dataclass(frozen=True)
class SolveOptions:
    """Pipeline options for solve()."""

    r_in: float = 2000.0
    plan_options: PlanOptions = field(default_factory=PlanOptions)
    memristor: Optional[MemristorBank] = None
    memristor_seed: int = 0
    scale: Optional[ScalePolicy] = None
    estimate_c: float = 1e3
    gram_fallback: bool = True
    trace_decimation: int = 0


def build_system(circuit: CircuitPlan, cfg: SolverConfig) -> StateSpace:
    """Assemble the structural state space of a compiled plan."""
    n = circuit.n
    g = cfg.g
    inverters = [
        (path.row, path.col)
        for row in circuit.paths
        for path in row
        if path.sign is PathSign.VIA_INVERTER
    ]
    inv_index = {pair: n + k for k, pair in enumerate(inverters)}
    dim = n + len(inverters)

    gamma = np.ones(n)
    for i, row in enumerate(circuit.paths):
        gamma[i] += sum(path.realized_weight for path in row)

    m = np.zeros((dim, dim))
    f = np.zeros(dim)
    for i, row in enumerate(circuit.paths):
        coef = -g / gamma[i]
        f[i] = coef * circuit.b_compiled[i]
        for path in row:
            if path.sign is PathSign.DIRECT:
                m[i, path.col] += coef * path.realized_weight
            elif path.sign is PathSign.VIA_INVERTER:
                m[i, inv_index[(i, path.col)]] += coef * path.realized_weight
    for (i, j), k in inv_index.items():
        m[k, j] = -g / 2.0
        m[k, k] = -g / 2.0

    labels = tuple(f"x{i}" for i in range(n)) + tuple(
        f"inv_{i}_{j}" for (i, j) in inverters
    )
    a_hat, b_hat = realized_matrix(circuit)
    return StateSpace(m, f, gamma, labels, n, a_hat, b_hat)


def ideal_system(
    a: np.ndarray, b: np.ndarray, cfg: SolverConfig
) -> StateSpace:
    """State space of the netlist-free model dx/dt = -g D (b - A x)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    gamma = 1.0 + np.abs(a).sum(axis=1)
    d = cfg.g / gamma
    return StateSpace(
        m=d[:, None] * a,
        f=-d * b,
        gamma=gamma,
        state_labels=tuple(f"x{i}" for i in range(n)),
        n_main=n,
        a_hat=a,
        b_hat=b,
    )


def stability_report(ss: StateSpace) -> StabilityReport:
    """Largest real part of the state-matrix spectrum."""
    dim = ss.m.shape[0]
    if dim > _EIG_DIM_LIMIT:
        raise ValueError(f"state dimension {dim} exceeds {_EIG_DIM_LIMIT}")
    try:
        eig = np.linalg.eigvals(ss.m)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    max_re = float(eig.real.max())
    return StabilityReport(max_re_eig=max_re, stable=max_re < 0.0)


def _step_operators(m: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 on dz/dt = m z + f collapses to z' = R z + S f."""
    dim = m.shape[0]
    eye = np.eye(dim)
    hm = dt * m
    hm2 = hm @ hm
    hm3 = hm2 @ hm
    r = eye + hm + hm2 / 2.0 + hm3 / 6.0 + (hm3 @ hm) / 24.0
    s = dt * (eye + hm / 2.0 + hm2 / 6.0 + hm3 / 24.0)
    return r, s


def _iter_state_blocks(r, u, z0, n_steps, block):
    """Yield blocks of consecutive states of z_{k+1} = r z_k + u.

    Precomputes powers[j] = r^(j+1) and prefix[j] = sum_{i<=j} r^i u once,
    so each block of L steps is a single stacked matmul.  The power chain is
    truncated if it overflows (strongly unstable maps), falling back to
    shorter blocks.
    """
    dim = r.shape[0]
    block = max(1, min(block, n_steps))
    powers = np.empty((block, dim, dim))
    prefix = np.empty((block, dim))
    acc_p = r.copy()
    acc_q = u.copy()
    length = block
    for j in range(block):
        powers[j] = acc_p
        prefix[j] = acc_q
        if j + 1 < block:
            if np.abs(acc_p).max() > 1e100:
                length = j + 1
                break
            acc_p = r @ acc_p
            acc_q = r @ acc_q + u
    powers = powers[:length]
    prefix = prefix[:length]

    z = np.asarray(z0, dtype=float)
    done = 0
    while done < n_steps:
        take = min(length, n_steps - done)
        states = powers[:take] @ z + prefix[:take]
        yield states
        z = states[-1]
        done += take


def _block_size(dim: int) -> int:
    return max(8, min(1024, (1 << 18) // (dim * dim)))


def _auto_dt(ss: StateSpace, cfg: SolverConfig) -> float:
    if cfg.dt > 0:
        return cfg.dt
    return 0.1 / (cfg.g * float(np.max(ss.gamma)))


def simulate(
    ss: StateSpace,
    cfg: SolverConfig,
    trace_decimation: int = 0,
    stability: Optional[StabilityReport] = None,
) -> SolveResult:
    """Integrate from the zero state and report the settled solution.

    Convergence is declared at the first time the residual
    ||b_hat - A_hat x||_inf stays at or below cfg.eps_residual for
    CONVERGENCE_WINDOW consecutive steps; the run always continues to t_max
    (or until a state magnitude exceeds OVERFLOW_LIMIT, reported as
    divergence) and the returned x is the final state, which has settled
    further than the detection instant.
    """
    dt = _auto_dt(ss, cfg)
    n_steps = max(CONVERGENCE_WINDOW + 1, int(math.ceil(cfg.t_max / dt)))
    r, s = _step_operators(ss.m, dt)
    u = s @ ss.f
    nm = ss.n_main
    a_hat_t = ss.a_hat.T
    b_hat = ss.b_hat

    dec = trace_decimation if trace_decimation > 0 else max(1, n_steps // 4096)
    residual = np.empty(n_steps + 1)
    residual[0] = float(np.abs(b_hat).max())
    kept_idx = [0]
    kept_states = [np.zeros(nm)]

    z = np.zeros(ss.m.shape[0])
    k = 0
    overflow_at: Optional[int] = None
    for states in _iter_state_blocks(r, u, z, n_steps, _block_size(len(z))):
        length = len(states)
        peaks = np.abs(states).max(axis=1)
        if peaks.max() > OVERFLOW_LIMIT:
            cut = int(np.argmax(peaks > OVERFLOW_LIMIT)) + 1
            states = states[:cut]
            length = cut
            overflow_at = k + cut
        block_main = states[:, :nm]
        residual[k + 1 : k + 1 + length] = np.abs(
            b_hat - block_main @ a_hat_t
        ).max(axis=1)
        offsets = np.arange(k + 1, k + 1 + length)
        keep = offsets % dec == 0
        if keep.any():
            kept_idx.extend(offsets[keep].tolist())
            kept_states.extend(block_main[keep])
        z = states[-1]
        k += length
        if overflow_at is not None:
            break
    residual = residual[: k + 1]

    if kept_idx[-1] != k:  # always keep the final step in the trace
        kept_idx.append(k)
        kept_states.append(z[:nm])

    below = residual <= cfg.eps_residual
    t_converge: Optional[float] = None
    win = CONVERGENCE_WINDOW + 1
    if len(below) >= win:
        sustained = np.convolve(below.astype(int), np.ones(win, int), "valid")
        hits = np.nonzero(sustained == win)[0]
        if hits.size:
            t_converge = float(hits[0] * dt)

    converged = (
        overflow_at is None
        and t_converge is not None
        and residual[-1] <= cfg.eps_residual
    )
    report = stability if stability is not None else stability_report(ss)
    diagnostics = ""
    if overflow_at is not None:
        diagnostics = (
            f"state magnitude exceeded {OVERFLOW_LIMIT:.0e} at "
            f"t = {overflow_at * dt:.3e} s; run truncated and reported as "
            "divergence"
        )
    elif not converged and not report.stable:
        diagnostics = (
            f"state matrix is unstable (max Re eig = {report.max_re_eig:.3e}); "
            "residual did not settle"
        )

    trace = Trace(
        t=np.array(kept_idx, dtype=float) * dt,
        states=np.array(kept_states),
        residual_inf=residual[np.array(kept_idx)],
    )
    return SolveResult(
        x=z[:nm].copy(),
        residual_inf=float(residual[-1]),
        converged=bool(converged),
        t_converge=t_converge,
        stability=report,
        trace=trace,
        diagnostics=diagnostics,
    )


def _structural_attempts(prob, cfg, options):
    """Yield (tag_suffix, state space, plan) for both plan orientations."""
    first = compile_plan(prob, options.r_in, options.plan_options)
    flipped_orientation = (
        Orientation.KEEP if first.negated else Orientation.NEGATE
    )
    second = compile_plan(
        prob,
        options.r_in,
        PlanOptions(
            quantizer=options.plan_options.quantizer,
            orientation=flipped_orientation,
        ),
    )
    for tag, circuit in (("", first), ("negated", second)):
        if options.memristor is not None:
            circuit = program_memristors(
                circuit, options.memristor, options.memristor_seed
            )
        yield tag, build_system(circuit, cfg), circuit


def _ideal_attempts(prob, cfg, _options):
    yield "", ideal_system(prob.a, prob.b, cfg), None
    yield "negated", ideal_system(-prob.a, -prob.b, cfg), None


def solve(
    p: LinearProblem,
    cfg: Optional[SolverConfig] = None,
    options: Optional[SolveOptions] = None,
) -> SolveResult:
    """Full pipeline: scale (optional), plan, stability gate, simulate, unscale.

    Walks the stability ladder (planned orientation, negated orientation,
    then the Gram system A^T A x = A^T b under the same two orientations)
    and simulates the first stable rung.  The Gram rungs exist because
    saddle-spectrum matrices are stable in neither direct orientation; the
    normal equations always admit a stable one.  Raises UnstableSystem when
    every permitted rung is unstable.
    """
    cfg = cfg or SolverConfig()
    options = options or SolveOptions()
    if float(np.abs(p.b).max()) > RANGE_LIMIT + 1e-15:
        raise RangeViolation(
            f"max |b_i| = {np.abs(p.b).max():.6g} exceeds {RANGE_LIMIT} V"
        )
    _lu_factor(p.a)  # nonsingularity gate; raises SingularMatrix

    factor = 1.0
    work = p
    if options.scale is not None:
        sp = scale_problem(p, options.scale, options.estimate_c)
        factor = sp.factor_scale
        work = LinearProblem(sp.scaled_a, p.b, symmetric=p.symmetric)

    attempts = _structural_attempts if cfg.mode is Mode.STRUCTURAL else _ideal_attempts

    systems = [("", work)]
    if options.gram_fallback:
        # Internal fallback system; its right-hand side is synthetic and is
        # deliberately not held to the hardware input window.
        gram = LinearProblem(work.a.T @ work.a, work.a.T @ work.b, symmetric=True)
        systems.append(("gram", gram))

    primary_plan: Optional[CircuitPlan] = None
    reports: list[tuple[str, StabilityReport]] = []
    for system_tag, prob in systems:
        for orient_tag, ss, circuit in attempts(prob, cfg, options):
            tag = "-".join(t for t in (system_tag, orient_tag) if t) or "none"
            if primary_plan is None and circuit is not None:
                primary_plan = circuit
            report = stability_report(ss)
            reports.append((tag, report))
            if not report.stable:
                continue
            res = simulate(ss, cfg, options.trace_decimation, stability=report)
            return SolveResult(
                x=res.x * factor,
                residual_inf=res.residual_inf,
                converged=res.converged,
                t_converge=res.t_converge,
                stability=report,
                trace=res.trace,
                fallback=tag,
                diagnostics=res.diagnostics,
                plan=primary_plan,
                scale_factor=factor,
            )

    summary = "; ".join(
        f"{tag}: max Re(eig) = {rep.max_re_eig:.3e}" for tag, rep in reports
    )
    raise UnstableSystem(f"no stable orientation found ({summary})")


def _single_path(circuit: CircuitPlan, row: int):
    paths = [
        path
        for path in circuit.paths[row]
        if path.sign is not PathSign.DISCONNECTED
    ]
    if len(paths) != 1:
        raise MultiPathRow(
            f"row {row} has {len(paths)} feedback paths; AC analysis needs 1"
        )
    return paths[0]


def ac_response(
    circuit: CircuitPlan, row: int, cfg: SolverConfig, freq_hz: float
) -> complex:
    """Single-path transfer H(jw) = -(R_f/R_in) / (1 + jw (1 + R_f/R_in) / g)."""
    path = _single_path(circuit, row)
    ratio = path.r_feedback / circuit.r_in[row]
    omega = 2.0 * math.pi * freq_hz
    return -ratio / (1.0 + 1j * omega * (1.0 + ratio) / cfg.g)


def bandwidth(circuit: CircuitPlan, row: int, cfg: SolverConfig) -> float:
    """3-dB bandwidth g / (1 + R_f/R_in) of a single-path row, in rad/s."""
    path = _single_path(circuit, row)
    ratio = path.r_feedback / circuit.r_in[row]
    return cfg.g / (1.0 + ratio)


def probe_single_path_gain(
    circuit: CircuitPlan,
    row: int,
    cfg: SolverConfig,
    freq_hz: float,
    settle_periods: float = 10.0,
    measure_periods: int = 4,
) -> float:
    """Numerically measured gain magnitude of a single-path system.

    Drives the structural state space with b(t) = sin(w t) through an RK4
    integration (the sinusoid rides along as an augmented undamped
    oscillator pair, so the whole run reuses the linear stepper) and fits
    the steady-state output against the quadrature pair.  This is the
    independent check of ac_response: no transfer-function algebra is used.
    """
    ss = build_system(circuit, cfg)
    _single_path(circuit, row)
    dim = ss.m.shape[0]
    omega = 2.0 * math.pi * freq_hz

    drive = np.zeros(dim)
    drive[row] = -cfg.g / ss.gamma[row]  # node coupling of a unit input
    m_aug = np.zeros((dim + 2, dim + 2))
    m_aug[:dim, :dim] = ss.m
    m_aug[:dim, dim + 1] = drive  # input = s(t)
    m_aug[dim, dim + 1] = -omega  # dc/dt = -w s
    m_aug[dim + 1, dim] = omega   # ds/dt =  w c

    pole = abs(float(np.linalg.eigvals(ss.m).real.max()))
    settle_t = settle_periods / pole
    period = 1.0 / freq_hz
    total_t = settle_t + measure_periods * period
    dt = min(0.5 / cfg.g, period / 256.0)  # |eig(m)| <= g keeps RK4 stable
    n_steps = int(math.ceil(total_t / dt))

    z0 = np.zeros(dim + 2)
    z0[dim] = 1.0  # cosine state starts at 1 so s(t) = sin(w t)
    rows = []
    r, s_op = _step_operators(m_aug, dt)
    for states in _iter_state_blocks(
        r, np.zeros(dim + 2), z0, n_steps, _block_size(dim + 2)
    ):
        rows.append(states[:, [row, dim, dim + 1]])
    series = np.vstack(rows)

    start = int(settle_t / dt)
    x = series[start:, 0]
    c = series[start:, 1]
    s = series[start:, 2]
    basis = np.column_stack([s, c])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(coef[0], coef[1]))
