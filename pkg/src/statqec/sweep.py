"""Threshold sweeps: noise grids, jump detection, and phase-boundary fits.

A sweep is a list of cells, each one memory experiment at a grid point,
serialized to a fixed CSV schema.  All cells draw their trials from
generators keyed by (master seed, trial index), so the same config
produces the same bytes no matter how work is scheduled.  On top of the
raw grid sit two detectors: a crossing finder for size-threshold scans,
and a jump scanner that walks each bitflip column up in readout noise
until the failure rate leaves the ordered floor, then narrows the jump
by bisection and pins it down with high-statistics cells at the bracket.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .codes import CssCode, build_repetition_code, build_toric_code
from .errors import InvalidInput, InvalidParameter
from .experiments import exact_flux_failure, run_memory_experiment, wilson_interval
from .noise import NoiseParams

CSV_HEADER = "p_bf,p_m,L,t_f,trials,failures,rate,err_low,err_high,decoder,seed"

JUMP_LEVEL = 0.25
"""Default detection level for a failure-rate jump, as an absolute rate."""


@dataclass(frozen=True)
class SweepCell:
    """One grid point: a memory experiment summarized as a failure rate."""

    p_bf: float
    p_m: float
    length: int
    t_f: int
    trials: int
    failures: int
    rate: float
    err_low: float
    err_high: float
    decoder: str
    seed: int


def build_code(family: str, length: int) -> CssCode:
    if family == "repetition":
        return build_repetition_code(length)
    if family == "toric":
        return build_toric_code(length)
    raise InvalidInput(f"unknown code family {family!r}")


def round_schedule(p_bf: float, t_min: int = 8, t_max: int = 25,
                   budget: float = 0.92) -> int:
    """Rounds needed for a jump at column p_bf to clear the noise floor.

    The deep-disordered failure only grows sizeable once the per-qubit
    cumulative flip rate nears 1/2, which takes t_f * p_bf of order one;
    the schedule asks for budget / p_bf rounds, clipped to a
    runtime-bounded range.
    """
    if p_bf <= 0.0:
        return t_max
    return int(np.clip(math.ceil(budget / p_bf), t_min, t_max))


def cumulative_flip_probability(p_bf: float, t_f: int) -> float:
    """Chance a single qubit has flipped an odd number of times after t_f
    rounds of independent rate-p_bf flips."""
    return 0.5 * (1.0 - (1.0 - 2.0 * p_bf) ** t_f)


def disordered_failure(length: int, p_bf: float, t_f: int) -> float:
    """Failure rate of a ring once the history rows carry no information.

    The final round is still read out perfectly, so even a decoder fed
    pure noise everywhere else can pair up the violated final checks;
    on a ring that degrades gracefully to majority-decoding the
    accumulated flips.  The column only shows a jump when this rate is
    itself detectable, i.e. when the cumulative flip rate approaches 1/2
    on the scale set by the length.
    """
    q = cumulative_flip_probability(p_bf, t_f)
    return exact_flux_failure(q, length)


def run_sweep_cell(length: int, p_bf: float, p_m: float, t_f: int,
                   decoder: str = "mwpm", n_trials: int = 1000, seed: int = 0,
                   family: str = "repetition", threads: int = 1) -> SweepCell:
    code = build_code(family, length)
    params = NoiseParams(p_bf=p_bf, p_m=p_m, t_f=t_f)
    res = run_memory_experiment(code, params, decoder=decoder, n_trials=n_trials,
                                master_seed=seed, threads=threads)
    failures = res.trials - res.successes
    lo, hi = wilson_interval(failures, res.trials)
    return SweepCell(p_bf=p_bf, p_m=p_m, length=length, t_f=t_f,
                     trials=res.trials, failures=failures,
                     rate=failures / res.trials, err_low=lo, err_high=hi,
                     decoder=decoder, seed=seed)


# ---------------------------------------------------------------------------
# gridded sweep


@dataclass(frozen=True)
class SweepConfig:
    """Grid definition for a plain product sweep.

    t_f = None lets each bitflip column pick its own depth from
    round_schedule; a fixed integer applies everywhere.
    """

    lengths: tuple[int, ...]
    p_bf_values: tuple[float, ...]
    p_m_values: tuple[float, ...]
    t_f: int | None = None
    decoder: str = "mwpm"
    n_trials: int = 1000
    master_seed: int = 0
    family: str = "repetition"

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(v) for v in self.lengths))
        object.__setattr__(self, "p_bf_values", tuple(float(v) for v in self.p_bf_values))
        object.__setattr__(self, "p_m_values", tuple(float(v) for v in self.p_m_values))
        if not (self.lengths and self.p_bf_values and self.p_m_values):
            raise InvalidParameter("sweep grid must be nonempty")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        raw = json.loads(text)
        return cls(**raw)


def threshold_sweep(config: SweepConfig, threads: int = 1) -> tuple[SweepCell, ...]:
    """Run the full grid in a fixed order: length, then p_bf, then p_m."""
    cells = []
    for length in config.lengths:
        for p_bf in config.p_bf_values:
            t_f = config.t_f if config.t_f is not None else round_schedule(p_bf)
            for p_m in config.p_m_values:
                cells.append(run_sweep_cell(
                    length, p_bf, p_m, t_f, decoder=config.decoder,
                    n_trials=config.n_trials, seed=config.master_seed,
                    family=config.family, threads=threads))
    return tuple(cells)


def cells_to_csv(cells) -> str:
    """Render cells to the fixed schema; floats via repr, so bytes are stable."""
    lines = [CSV_HEADER]
    for c in cells:
        lines.append(",".join([
            repr(float(c.p_bf)), repr(float(c.p_m)), str(c.length), str(c.t_f),
            str(c.trials), str(c.failures), repr(float(c.rate)),
            repr(float(c.err_low)), repr(float(c.err_high)), c.decoder, str(c.seed),
        ]))
    return "\n".join(lines) + "\n"


def cells_from_csv(text: str) -> tuple[SweepCell, ...]:
    buf = io.StringIO(text)
    header = buf.readline().strip()
    if header != CSV_HEADER:
        raise InvalidInput(f"unexpected sweep header {header!r}")
    cells = []
    for line in buf:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 11:
            raise InvalidInput(f"malformed sweep row {line!r}")
        cells.append(SweepCell(
            p_bf=float(parts[0]), p_m=float(parts[1]), length=int(parts[2]),
            t_f=int(parts[3]), trials=int(parts[4]), failures=int(parts[5]),
            rate=float(parts[6]), err_low=float(parts[7]), err_high=float(parts[8]),
            decoder=parts[9], seed=int(parts[10])))
    return tuple(cells)


def write_csv(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(cells_to_csv(cells))


# ---------------------------------------------------------------------------
# crossing finder (size-threshold scans)


def find_crossing(cells, length_a: int, length_b: int) -> float:
    """p_bf where the failure curves of two sizes meet.

    Uses the first sign change of the rate difference along p_bf, with
    linear interpolation; when the curves only converge on the scanned
    range, returns their closest approach (ties resolved toward the high
    end, where converging curves keep tightening).
    """
    cols = {}
    for length in (length_a, length_b):
        col = sorted((c for c in cells if c.length == length), key=lambda c: c.p_bf)
        if not col:
            raise InvalidInput(f"no cells at length {length}")
        cols[length] = col
    xs_a = [c.p_bf for c in cols[length_a]]
    xs_b = [c.p_bf for c in cols[length_b]]
    if xs_a != xs_b:
        raise InvalidInput("crossing needs both sizes on the same p_bf grid")
    diff = np.array([a.rate - b.rate
                     for a, b in zip(cols[length_a], cols[length_b])])
    xs = np.array(xs_a)
    for i in range(len(xs) - 1):
        d0, d1 = diff[i], diff[i + 1]
        if d0 * d1 < 0:
            return float(xs[i] + (xs[i + 1] - xs[i]) * d0 / (d0 - d1))
        if d0 != 0 and d1 == 0:
            return float(xs[i + 1])
    best = len(diff) - 1 - int(np.argmin(np.abs(diff)[::-1]))
    return float(xs[best])


def detect_jump(points, level: float):
    """First adjacent pair straddling the level along the scan axis.

    points: iterable of (x, rate).  Returns (x_lo, x_hi, interpolated x)
    or None when the level is never reached.
    """
    pts = sorted(points)
    for (x0, r0), (x1, r1) in zip(pts, pts[1:]):
        if r0 < level <= r1:
            frac = (level - r0) / (r1 - r0)
            return x0, x1, x0 + frac * (x1 - x0)
    return None


# ---------------------------------------------------------------------------
# jump scanner for the (p_bf, p_m) phase boundary


@dataclass(frozen=True)
class BoundaryPoint:
    """Detected jump location for one bitflip column (p_m None = no jump)."""

    p_bf: float
    t_f: int
    level: float
    p_m: float | None
    bracket: tuple[float, float] | None


@dataclass(frozen=True)
class BoundaryScanConfig:
    """Budgeted scan: cheap probes walk each column up in p_m, bisection
    narrows the jump, and only the final bracket is rerun at full
    statistics.  The detection level adapts to each column's disordered
    failure rate, since shallow columns cannot reach a fixed absolute
    level; min_level keeps a lone fluke failure in a column with a
    vanishing disordered rate from faking a jump.

    Every column runs the same window depth.  A depth schedule tied to
    p_bf shifts the detected jump (deeper windows accumulate more data
    flips and trip earlier in p_m), which can spoil the monotone shape
    of the reported boundary; a uniform window keeps the columns
    comparable.  Columns whose disordered plateau sits below min_level
    are reported jump-free without running any cells: their failure
    rate never rises far enough for a probe trigger to mean anything
    but a fluke.  The default depth keeps every column from 0.04 up
    detectable while holding the full-statistics bracket cells, whose
    matching cost grows quickly with depth, inside the scan budget.
    """

    length: int = 50
    p_bf_columns: tuple[float, ...] = (0.001, 0.01, 0.03, 0.04, 0.05,
                                       0.06, 0.08, 0.12, 0.2)
    p_m_rows: tuple[float, ...] = (0.0, 0.06, 0.12, 0.18, 0.24, 0.30, 0.36,
                                   0.40, 0.44, 0.46, 0.48, 0.49)
    probe_trials: int = 150
    report_trials: int = 1000
    bisect_steps: int = 4
    level_fraction: float = 0.5
    min_level: float = 0.02
    decoder: str = "mwpm"
    master_seed: int = 0
    window_rounds: int = 18
    family: str = "repetition"

    def __post_init__(self):
        object.__setattr__(self, "p_bf_columns",
                           tuple(float(v) for v in self.p_bf_columns))
        object.__setattr__(self, "p_m_rows",
                           tuple(float(v) for v in self.p_m_rows))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BoundaryScanConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class BoundaryScan:
    config: BoundaryScanConfig
    cells: tuple[SweepCell, ...]
    boundary: tuple[BoundaryPoint, ...]


def boundary_scan(config: BoundaryScanConfig, threads: int = 1) -> BoundaryScan:
    """Locate the failure-rate jump in every bitflip column.

    Columns are scanned bottom-up and stop at the first probe above the
    column level, so the expensive deep-disordered cells are rarely
    visited; columns below the scan's resolution are skipped outright.
    The reported boundary interpolates between the two
    full-statistics bracket cells.  A trigger whose high bracket cell
    falls back under the level at full statistics was a probe fluke;
    the walk resumes above it, and only a column that exhausts its rows
    without a confirmed trigger is reported as jump-free.
    """
    all_cells: list[SweepCell] = []
    points: list[BoundaryPoint] = []

    def cell(p_bf, p_m, t_f, trials):
        c = run_sweep_cell(config.length, p_bf, p_m, t_f, decoder=config.decoder,
                           n_trials=trials, seed=config.master_seed,
                           family=config.family, threads=threads)
        all_cells.append(c)
        return c

    for p_bf in config.p_bf_columns:
        t_f = config.window_rounds
        plateau = disordered_failure(config.length, p_bf, t_f)
        level = max(config.level_fraction * plateau, config.min_level)
        if plateau < config.min_level:
            # below the scan's resolution: even deep in the disordered
            # phase this column cannot be told apart from probe noise
            points.append(BoundaryPoint(p_bf, t_f, level, None, None))
            continue
        found = None
        prev = None
        for p_m in config.p_m_rows:
            c = cell(p_bf, p_m, t_f, config.probe_trials)
            if c.rate < level:
                prev = c
                continue
            lo = prev.p_m if prev is not None else p_m
            hi = p_m
            for _ in range(config.bisect_steps):
                if lo == hi:
                    break
                mid = 0.5 * (lo + hi)
                if cell(p_bf, mid, t_f, config.probe_trials).rate >= level:
                    hi = mid
                else:
                    lo = mid
            lo_cell = cell(p_bf, lo, t_f, config.report_trials)
            hi_cell = lo_cell if hi == lo else cell(p_bf, hi, t_f, config.report_trials)
            if hi_cell.rate < level:
                prev = hi_cell
                continue
            if lo_cell.rate >= level:
                found = BoundaryPoint(p_bf, t_f, level, lo, (lo, hi))
            else:
                jump = detect_jump([(lo, lo_cell.rate), (hi, hi_cell.rate)], level)
                found = BoundaryPoint(p_bf, t_f, level, jump[2], (lo, hi))
            break
        if found is None:
            found = BoundaryPoint(p_bf, t_f, level, None, None)
        points.append(found)
    return BoundaryScan(config=config, cells=tuple(all_cells),
                        boundary=tuple(points))


def boundary_to_json(scan: BoundaryScan) -> str:
    """Self-describing boundary artifact: resolved config plus the points."""
    payload = {
        "config": asdict(scan.config),
        "boundary": [asdict(p) for p in scan.boundary],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# boundary shape fits


@dataclass(frozen=True)
class BoundaryFit:
    """Square-root approach law against a linear approach on one window.

    With no bitflips the ordered phase covers every readout rate below
    one half, so the boundary terminates at (0, 1/2) exactly.  Both
    candidate laws describe the approach to that corner and are pinned
    there: p_m = 1/2 - c sqrt(p_bf) versus p_m = 1/2 - m p_bf, one free
    parameter each, and the lower ssr wins.  An unpinned straight line
    is also fitted for context (free_*); being a local secant with two
    parameters it says nothing about the approach exponent and is never
    part of the verdict.

    The window holds the detected columns whose scan depth has
    converged.  A column only measures the asymptotic boundary once its
    cumulative flip probability is close to the one-half ceiling;
    under-deep columns barely feel the disorder and their detected jump
    sits systematically high, which masquerades as extra curvature near
    zero and corrupts the exponent comparison.
    """

    c: float
    sqrt_ssr: float
    linear_slope: float
    linear_ssr: float
    free_slope: float
    free_intercept: float
    free_ssr: float
    window: tuple[float, ...]


def fit_boundary(points, convergence_min: float = 0.92,
                 max_p_bf: float | None = None) -> BoundaryFit:
    """Fit both approach laws over the converged detected columns.

    A column enters the window when its cumulative flip probability has
    reached convergence_min of the 1/2 ceiling, i.e. its window depth
    saturates the disorder the boundary is made of; max_p_bf optionally
    caps the window from above on top of that.
    """
    detected = [(p.p_bf, p.p_m) for p in points
                if p.p_m is not None
                and 2.0 * cumulative_flip_probability(p.p_bf, p.t_f) >= convergence_min
                and (max_p_bf is None or p.p_bf <= max_p_bf)]
    if len(detected) < 3:
        raise InvalidInput("need at least 3 detected boundary points to fit")
    x = np.array([d[0] for d in detected])
    y = np.array([d[1] for d in detected])
    root = np.sqrt(x)
    c = float(np.sum(root * (0.5 - y)) / np.sum(x))
    sqrt_ssr = float(np.sum((y - (0.5 - c * root)) ** 2))
    m = float(np.sum(x * (0.5 - y)) / np.sum(x * x))
    linear_ssr = float(np.sum((y - (0.5 - m * x)) ** 2))
    slope, intercept = np.polyfit(x, y, 1)
    free_ssr = float(np.sum((y - (slope * x + intercept)) ** 2))
    return BoundaryFit(c=c, sqrt_ssr=sqrt_ssr, linear_slope=m,
                       linear_ssr=linear_ssr, free_slope=float(slope),
                       free_intercept=float(intercept), free_ssr=free_ssr,
                       window=tuple(float(v) for v in x))
