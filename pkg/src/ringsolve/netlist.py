"""Compile a linear problem into the integrator feedback network.

Each matrix coefficient becomes one feedback resistor from an integrator
output back to a summing node: a negative coefficient a < 0 is a direct path
with R_f = -R_in / a, a positive one routes through an inverting stage with
R_f = R_in / a, and a zero coefficient leaves the path disconnected.  When
positive entries outnumber negative ones the whole system (matrix and input)
is negated first so the cheaper direct paths dominate; the solution is
unchanged.  Optional stages model the binary-weighted programmable resistor
ladder (with switch on-resistance) and memristive replacements with a seeded
write-noise model.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .problem import LinearProblem

DEFAULT_R_IN = 2000.0
DEFAULT_R_UNIT = 1000.0

# Memristor write resolution: devices settle on a 256-level conductance grid.
MEMRISTOR_LEVELS = 256


class NonFiniteEntry(ValueError):
    """A coefficient handed to the compiler is NaN or infinite."""


class OutOfRange(ValueError):
    """A target coefficient exceeds what the resistor ladder can realize."""


class TargetOutOfDeviceRange(ValueError):
    """A target conductance falls outside the memristor device window."""


class PathSign(Enum):
    DIRECT = "direct"            # realizes a negative coefficient
    VIA_INVERTER = "via-inverter"  # realizes a positive coefficient
    DISCONNECTED = "disconnected"  # zero coefficient, no branch


class Orientation(Enum):
    """Negation policy for plan().

    AUTO negates when positives outnumber negatives (ties keep the user's
    orientation), KEEP never negates, NEGATE always does.
    """

    AUTO = "auto"
    KEEP = "keep"
    NEGATE = "negate"


class CountScheme(Enum):
    BEFORE_REUSE = "before-reuse"
    AFTER_REUSE = "after-reuse"
    MIMO_SYMMETRIC = "mimo-symmetric"


@dataclass(frozen=True)
class QuantizerSpec:
    """Binary-weighted poly-resistor ladder parameters.

    The always-on branch has resistance r_unit; bit k adds a branch of
    r_unit / 2^k.  With ideal switches the realizable magnitudes are
    (1 + code) * r_in / r_unit for code in [0, 2^bits - 1]; a nonzero switch
    on-resistance r_on lowers every realized magnitude.
    """

    bits: int
    r_unit: float = DEFAULT_R_UNIT
    r_in: float = DEFAULT_R_IN
    r_on: float = 0.0

    def __post_init__(self) -> None:
        if not 1 <= self.bits <= 16:
            raise ValueError(f"bits must be in [1, 16], got {self.bits}")
        if self.r_unit <= 0 or self.r_in <= 0:
            raise ValueError("r_unit and r_in must be positive")
        if self.r_on < 0:
            raise ValueError("r_on must be nonnegative")

    @property
    def step(self) -> float:
        """Ideal magnitude step r_in / r_unit between adjacent codes."""
        return self.r_in / self.r_unit


@dataclass(frozen=True)
class MemristorBank:
    """Programmable-conductance devices standing in for feedback resistors.

    Devices accept conductances in [g_min, g_max] siemens; a write lands on
    a MEMRISTOR_LEVELS-point linear grid over that window after a relative
    gaussian error of standard deviation write_noise_sigma.  ``conductances``
    holds the per-path programmed states (NaN where disconnected) once
    program_memristors has run.
    """

    g_min: float = 1e-6
    g_max: float = 1e-2
    write_noise_sigma: float = 0.0
    conductances: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not 0 <= self.g_min < self.g_max:
            raise ValueError("need 0 <= g_min < g_max")
        if self.write_noise_sigma < 0:
            raise ValueError("write_noise_sigma must be nonnegative")
        if self.conductances is not None:
            g = np.array(self.conductances, dtype=float)
            g.setflags(write=False)
            object.__setattr__(self, "conductances", g)

    @property
    def step(self) -> float:
        return (self.g_max - self.g_min) / (MEMRISTOR_LEVELS - 1)


@dataclass(frozen=True)
class FeedbackPath:
    """One compiled matrix coefficient."""

    row: int
    col: int
    sign: PathSign
    r_feedback: Optional[float]  # ohms; None when disconnected
    code: Optional[int]          # quantizer / memristor grid code, if any
    realized_weight: float       # dimensionless R_in / R_f, >= 0


@dataclass(frozen=True)
class PlanOptions:
    quantizer: Optional[QuantizerSpec] = None
    orientation: Orientation = Orientation.AUTO


@dataclass(frozen=True)
class CircuitPlan:
    """A compiled netlist: resistances, sign paths, and the integrator census.

    ``b_compiled`` is the input vector actually applied (negated along with
    the matrix when ``negated`` is set, so the solution is unchanged).  The
    after-reuse bound inverter_count <= floor(n^2 / 2) holds for AUTO
    orientation; forced orientations may exceed it.
    """

    n: int
    r_in: np.ndarray
    paths: tuple[tuple[FeedbackPath, ...], ...]
    b_compiled: np.ndarray
    negated: bool
    inverter_count: int
    quantizer: Optional[QuantizerSpec] = None
    memristors: Optional[MemristorBank] = None

    def __post_init__(self) -> None:
        r_in = np.array(self.r_in, dtype=float)
        b = np.array(self.b_compiled, dtype=float)
        r_in.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "r_in", r_in)
        object.__setattr__(self, "b_compiled", b)

    @property
    def main_integrators(self) -> int:
        return self.n

    @property
    def total_integrators(self) -> int:
        return self.n + self.inverter_count


def integrator_count(n: int, scheme: CountScheme) -> int:
    """Integrators needed for an n x n system under the given scheme."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if scheme is CountScheme.BEFORE_REUSE:
        return n * n + n
    if scheme is CountScheme.AFTER_REUSE:
        return n * n // 2 + n
    if scheme is CountScheme.MIMO_SYMMETRIC:
        return (n * n + n) // 4 + n
    raise ValueError(f"unknown scheme {scheme!r}")  # pragma: no cover


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def quantize_entry(
    target: float, q: QuantizerSpec
) -> tuple[Optional[int], float]:
    """Map a coefficient onto the ladder, returning (code, realized value).

    A zero target means a disconnected path: (None, 0.0).  Otherwise the
    magnitude is rounded (half up) to the nearest code; the realized value
    carries the target's sign.  With r_on > 0 the realized magnitude is
    computed from the branch conductances r_in * sum(1 / (R_branch + r_on))
    and is strictly below the ideal value.  Raises OutOfRange when |target|
    exceeds the top code's ideal magnitude by more than half a step.
    """
    if not np.isfinite(target):
        raise NonFiniteEntry(f"target {target!r} is not finite")
    if target == 0.0:
        return None, 0.0
    magnitude = abs(target)
    step = q.step
    top = (1 << q.bits) * step
    if magnitude > top + step / 2:
        raise OutOfRange(
            f"|target| = {magnitude:.6g} exceeds ladder maximum {top:.6g} "
            f"(bits={q.bits}, step={step:.6g})"
        )
    code = _round_half_up(magnitude / step - 1.0)
    code = min(max(code, 0), (1 << q.bits) - 1)
    if q.r_on == 0.0:
        realized = (1 + code) * step
    else:
        conductance = 1.0 / (q.r_unit + q.r_on)  # always-on branch
        for bit in range(q.bits):
            if code >> bit & 1:
                conductance += 1.0 / (q.r_unit / (1 << bit) + q.r_on)
        realized = q.r_in * conductance
    return code, math.copysign(realized, target)


def plan(
    p: LinearProblem,
    r_in_default: float = DEFAULT_R_IN,
    options: Optional[PlanOptions] = None,
) -> CircuitPlan:
    """Compile a problem into a circuit plan.

    Sign census first: with AUTO orientation the system is negated whenever
    positive entries strictly outnumber negative ones, which keeps the
    inverter count at min(p+, p-).  Each compiled entry then becomes a
    FeedbackPath; with no quantizer attached the realized coefficients equal
    the compiled matrix exactly.
    """
    options = options or PlanOptions()
    if not (np.isfinite(p.a).all() and np.isfinite(p.b).all()):
        raise NonFiniteEntry("problem contains non-finite entries")
    if r_in_default <= 0:
        raise ValueError("r_in_default must be positive")
    q = options.quantizer
    if q is not None and q.r_in != r_in_default:
        raise ValueError(
            f"quantizer r_in ({q.r_in}) must match the plan input "
            f"resistance ({r_in_default})"
        )

    positives = int(np.count_nonzero(p.a > 0))
    negatives = int(np.count_nonzero(p.a < 0))
    if options.orientation is Orientation.AUTO:
        negated = positives > negatives
    else:
        negated = options.orientation is Orientation.NEGATE
    compiled = -p.a if negated else p.a
    b_compiled = -p.b if negated else p.b

    rows = []
    inverter_count = 0
    for i in range(p.n):
        row_paths = []
        for j in range(p.n):
            entry = compiled[i, j]
            if entry == 0.0:
                row_paths.append(
                    FeedbackPath(i, j, PathSign.DISCONNECTED, None, None, 0.0)
                )
                continue
            sign = PathSign.DIRECT if entry < 0 else PathSign.VIA_INVERTER
            if sign is PathSign.VIA_INVERTER:
                inverter_count += 1
            if q is None:
                weight = abs(entry)
                code = None
            else:
                code, realized = quantize_entry(entry, q)
                weight = abs(realized)
            row_paths.append(
                FeedbackPath(i, j, sign, r_in_default / weight, code, weight)
            )
        rows.append(tuple(row_paths))

    return CircuitPlan(
        n=p.n,
        r_in=np.full(p.n, float(r_in_default)),
        paths=tuple(rows),
        b_compiled=b_compiled,
        negated=negated,
        inverter_count=inverter_count,
        quantizer=q,
    )


def program_memristors(
    circuit: CircuitPlan, bank: MemristorBank, rng_seed: int
) -> CircuitPlan:
    """Replace feedback resistors with programmed memristors.

    Target conductances 1/R_f get a seeded relative write error of standard
    deviation bank.write_noise_sigma (drawn in row-major path order, so runs
    with the same seed reproduce bit-exactly), then snap to the device's
    write grid.  Returns a new plan; the input plan is untouched.
    """
    targets = []
    for row in circuit.paths:
        for path in row:
            if path.sign is not PathSign.DISCONNECTED:
                targets.append(1.0 / path.r_feedback)
    targets_arr = np.array(targets)
    if targets_arr.size and (
        targets_arr.min() < bank.g_min or targets_arr.max() > bank.g_max
    ):
        raise TargetOutOfDeviceRange(
            f"target conductances span [{targets_arr.min():.3e}, "
            f"{targets_arr.max():.3e}] S but devices accept "
            f"[{bank.g_min:.3e}, {bank.g_max:.3e}] S"
        )

    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal(targets_arr.size) * bank.write_noise_sigma
    written = targets_arr * (1.0 + noise)
    codes = np.clip(
        np.floor((written - bank.g_min) / bank.step + 0.5),
        0,
        MEMRISTOR_LEVELS - 1,
    ).astype(int)
    programmed = bank.g_min + codes * bank.step

    grid = np.full((circuit.n, circuit.n), np.nan)
    rows = []
    idx = 0
    for i, row in enumerate(circuit.paths):
        new_row = []
        for path in row:
            if path.sign is PathSign.DISCONNECTED:
                new_row.append(path)
                continue
            g = programmed[idx]
            grid[i, path.col] = g
            new_row.append(
                dataclasses.replace(
                    path,
                    r_feedback=1.0 / g,
                    code=int(codes[idx]),
                    realized_weight=float(circuit.r_in[i] * g),
                )
            )
            idx += 1
        rows.append(tuple(new_row))

    return dataclasses.replace(
        circuit,
        paths=tuple(rows),
        memristors=dataclasses.replace(bank, conductances=grid),
    )


def realized_matrix(circuit: CircuitPlan) -> tuple[np.ndarray, np.ndarray]:
    """Recover the (matrix, input) pair the plan actually realizes.

    Direct paths contribute -weight, inverter paths +weight; the global
    negation is undone so the result is in the caller's orientation.  With
    no quantizer or memristors attached this round-trips the compiled
    problem exactly.
    """
    a_hat = np.zeros((circuit.n, circuit.n))
    for row in circuit.paths:
        for path in row:
            if path.sign is PathSign.DIRECT:
                a_hat[path.row, path.col] = -path.realized_weight
            elif path.sign is PathSign.VIA_INVERTER:
                a_hat[path.row, path.col] = path.realized_weight
    if circuit.negated:
        return -a_hat, -np.array(circuit.b_compiled)
    return a_hat, np.array(circuit.b_compiled)


def plan_to_dict(circuit: CircuitPlan) -> dict:
    """JSON-ready plan dump for the command-line front end."""
    paths = [
        {
            "row": path.row,
            "col": path.col,
            "sign": path.sign.value,
            "r_feedback_ohms": path.r_feedback,
            "code": path.code,
            "realized_weight": path.realized_weight,
        }
        for row in circuit.paths
        for path in row
    ]
    return {
        "n": circuit.n,
        "negated": circuit.negated,
        "r_in_ohms": circuit.r_in.tolist(),
        "paths": paths,
        "census": {
            "main_integrators": circuit.main_integrators,
            "inverters": circuit.inverter_count,
            "total_integrators": circuit.total_integrators,
        },
        "quantizer_bits": circuit.quantizer.bits if circuit.quantizer else None,
        "memristor": circuit.memristors is not None,
    }
