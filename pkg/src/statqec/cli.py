"""Command-line entry point: experiments, sweeps, bounds, verification.

Every subcommand resolves flags, an optional JSON config file (flags
win), and defaults into a RunConfig, logs to standard error, and
writes data artifacts only to --out (or standard output when --out is
omitted).  Rows and JSON payloads carry the resolved settings and
seed, so rerunning the printed config reproduces the artifact byte
for byte.  Figures are rendered next to the delimited output unless
--no-figure.

Exit codes: 0 success, 1 verification failure, 2 config error,
3 unsupported size.
"""

from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import numpy as np

from .bounds import (
    double_flux_bound,
    hardwall_stability_bound,
    memory_failure_bound,
    single_flux_bound,
    two_puncture_bound,
)
from .codes import CssCode, code_from_json
from .errors import InvalidInput, StatqecError, UnsupportedCode, UnsupportedSize
from .experiments import (
    FluxThreadingConfig,
    default_region,
    exact_success_probabilities,
    order_parameter_scan,
    run_flux_threading,
    run_memory_experiment,
    run_stability_hardwall,
    wilson_interval,
)
from .noise import NoiseParams, couplings_from_params, sample_error, syndrome_of
from .report import (
    FORMATS,
    boundary_figure,
    bound_overlay_figure,
    decay_figure,
    failure_curves_figure,
    render_cells,
    save_figure,
)
from .statmech import (
    apply_gauge_transformation,
    build_clean_model,
    build_gauge_model,
    build_syndrome_model,
    exact_log_partition,
    exact_expectation,
    model_energy,
    qubit_spin,
)
from .sweep import (
    BoundaryScanConfig,
    SweepCell,
    SweepConfig,
    boundary_scan,
    boundary_to_json,
    build_code,
    fit_boundary,
    threshold_sweep,
)
from .transfer import build_transfer_matrix

BUILTIN_FAMILIES = ("repetition", "toric")

STOCHASTIC = ("memory", "stability", "fluxthread", "sweep")


def log(msg: str) -> None:
    click.echo(msg, err=True)


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one artifact."""

    subcommand: str
    code: str
    length: int
    p_bf: tuple[float, ...]
    p_m: float
    t_f: tuple[int, ...]
    decoder: str
    trials: int
    seed: int | None
    out: str | None
    format: str
    threads: int
    figure: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise click.UsageError(
            f"config file {path}: line {err.lineno} column {err.colno}: {err.msg}")
    if not isinstance(raw, dict):
        raise click.UsageError(f"config file {path} must hold a JSON object")
    return raw


def _pick(flag, cfg: dict, key: str, default):
    """Flag beats config file beats default; () and None mean unset."""
    if flag not in (None, ()):
        return flag
    if key in cfg:
        return cfg[key]
    return default


def _coerce_tuples(value):
    return tuple(value) if isinstance(value, list) else value


def _resolve(subcommand: str, params: dict, multi_t: bool = False) -> RunConfig:
    cfg = _load_config_file(params.get("config"))
    known = {"code", "L", "p_bf", "p_m", "t_f", "decoder", "trials", "seed",
             "out", "format", "threads", "figure", "mode", "anchors",
             "separation"}
    known |= set(SweepConfig.__dataclass_fields__)
    known |= set(BoundaryScanConfig.__dataclass_fields__)
    for key in cfg:
        if key not in known:
            raise click.UsageError(f"unknown config key {key!r}")
    p_bf = _pick(params.get("p_bf"), cfg, "p_bf", (0.05,))
    if not isinstance(p_bf, tuple):
        p_bf = tuple(p_bf) if isinstance(p_bf, (list,)) else (float(p_bf),)
    t_f = _pick(params.get("t_f"), cfg, "t_f", (2,))
    if not isinstance(t_f, tuple):
        t_f = tuple(t_f) if isinstance(t_f, (list,)) else (int(t_f),)
    if not multi_t and len(t_f) > 1:
        raise click.UsageError(f"{subcommand} takes a single --t-f")
    fmt = _pick(params.get("format"), cfg, "format", "csv")
    if fmt not in FORMATS:
        raise click.UsageError(f"format must be one of {FORMATS}, got {fmt!r}")
    threads = _pick(params.get("threads"), cfg, "threads", None)
    if threads is None:
        threads = os.cpu_count() or 1
    seed = _pick(params.get("seed"), cfg, "seed", cfg.get("master_seed"))
    run = RunConfig(
        subcommand=subcommand,
        code=str(_pick(params.get("code"), cfg, "code", "repetition")),
        length=int(_pick(params.get("length"), cfg, "L", 11)),
        p_bf=tuple(float(v) for v in p_bf),
        p_m=float(_pick(params.get("p_m"), cfg, "p_m", 0.0)),
        t_f=tuple(int(v) for v in t_f),
        decoder=str(_pick(params.get("decoder"), cfg, "decoder", "mwpm")),
        trials=int(_pick(params.get("trials"), cfg, "trials", 1000)),
        seed=None if seed is None else int(seed),
        out=_pick(params.get("out"), cfg, "out", None),
        format=fmt,
        threads=int(threads),
        figure=bool(_pick(params.get("figure"), cfg, "figure", True)),
    )
    if subcommand in STOCHASTIC and run.seed is None:
        raise click.UsageError(f"--seed is required for {subcommand}")
    return run


def _resolve_code(run: RunConfig) -> CssCode:
    if run.code in BUILTIN_FAMILIES:
        return build_code(run.code, run.length)
    path = Path(run.code)
    if not path.exists():
        raise click.UsageError(f"code file not found: {run.code}")
    try:
        return code_from_json(path.read_text())
    except json.JSONDecodeError as err:
        raise click.UsageError(
            f"code file {run.code}: line {err.lineno} column {err.colno}: {err.msg}")


def _known_distance(run: RunConfig, code: CssCode) -> int | None:
    # both builtin families have distance equal to their linear size; file
    # codes fall back to enumeration (capped, so large ones exit 3)
    return run.length if run.code in BUILTIN_FAMILIES else None


def _emit(run: RunConfig, cells, figure_fn=None) -> None:
    text = render_cells(cells, run.format)
    if run.out is None:
        click.echo(text, nl=False)
        return
    with open(run.out, "w", newline="") as fh:
        fh.write(text)
    log(f"wrote {run.out}")
    if run.figure and figure_fn is not None:
        fig_path = str(Path(run.out).with_suffix(".png"))
        save_figure(figure_fn(), fig_path)
        log(f"wrote {fig_path}")


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (UnsupportedSize, UnsupportedCode) as err:
            log(f"unsupported size: {err}")
            raise SystemExit(3)
        except StatqecError as err:
            log(f"config error: {err}")
            raise SystemExit(2)
    return wrapper


def _common_options(multi_t: bool = False):
    t_kwargs = {"multiple": True} if multi_t else {}

    def deco(fn):
        for opt in reversed([
            click.option("--config", type=click.Path(exists=True, dir_okay=False),
                         default=None, help="JSON config file; flags win."),
            click.option("--code", default=None,
                         help="Builtin family (repetition, toric) or a JSON code file."),
            click.option("--L", "length", type=int, default=None,
                         help="Linear size for builtin families."),
            click.option("--p-bf", "p_bf", type=float, multiple=True,
                         help="Bitflip rate per round (repeatable)."),
            click.option("--p-m", "p_m", type=float, default=None,
                         help="Readout error rate per round."),
            click.option("--t-f", "t_f", type=int, default=None, **t_kwargs,
                         help="Number of rounds."),
            click.option("--decoder", default=None,
                         help="Decoder name for the subcommand."),
            click.option("--trials", type=int, default=None,
                         help="Trial budget per grid point."),
            click.option("--seed", type=int, default=None,
                         help="Master seed (required for stochastic runs)."),
            click.option("--out", default=None,
                         help="Artifact path; omit to print to standard output."),
            click.option("--format", "format_", type=str, default=None,
                         help="Artifact format: csv or json-lines."),
            click.option("--threads", type=int, default=None,
                         help="Worker count; default = available parallelism."),
            click.option("--figure/--no-figure", "figure", default=None,
                         help="Render a companion figure next to --out."),
        ]):
            fn = opt(fn)
        return fn
    return deco


def _params_from(ctx_kwargs: dict) -> dict:
    out = dict(ctx_kwargs)
    out["format"] = out.pop("format_", None)
    return out


def _cell(run: RunConfig, code: CssCode, p_bf: float, p_m: float, t_f: int,
          trials: int, failures: int, decoder: str) -> SweepCell:
    length = run.length if run.code in BUILTIN_FAMILIES else code.n_qubits
    lo, hi = wilson_interval(failures, trials)
    return SweepCell(p_bf=p_bf, p_m=p_m, length=length, t_f=t_f, trials=trials,
                     failures=failures, rate=failures / trials, err_low=lo,
                     err_high=hi, decoder=decoder, seed=run.seed)


@click.group()
def main():
    """Exact stat-mech models, decoders, and experiments for repeated
    stabilizer measurement."""


@main.command()
@_common_options()
@_guard
def memory(**kwargs):
    """Memory experiment: noisy rounds, perfect final readout, decode."""
    run = _resolve("memory", _params_from(kwargs))
    code = _resolve_code(run)
    t_f = run.t_f[0]
    cells = []
    for p_bf in run.p_bf:
        params = NoiseParams(p_bf=p_bf, p_m=run.p_m, t_f=t_f)
        res = run_memory_experiment(code, params, decoder=run.decoder,
                                    n_trials=run.trials, master_seed=run.seed,
                                    threads=run.threads)
        cells.append(_cell(run, code, p_bf, run.p_m, t_f, res.trials,
                           res.trials - res.successes, run.decoder))
        log(f"memory p_bf={p_bf}: rate={cells[-1].rate:.4f}")
    fig = (lambda: failure_curves_figure(cells)) if len(cells) > 1 else None
    _emit(run, cells, fig)


@main.command()
@_common_options()
@_guard
def stability(**kwargs):
    """Stability experiment: predict a conserved check product over a
    frozen window inside a longer noisy run."""
    run = _resolve("stability", _params_from(kwargs))
    if run.decoder == "mwpm":
        log("stability uses the majority decoder by default")
        run = RunConfig(**{**asdict(run), "decoder": "majority"})
    code = _resolve_code(run)
    region = default_region(code)
    t_f = run.t_f[0]
    cells = []
    bound_points = []
    for p_bf in run.p_bf:
        params = NoiseParams(p_bf=p_bf, p_m=run.p_m, t_f=t_f)
        res = run_stability_hardwall(code, region, params, t_f=t_f,
                                     n_trials=run.trials, seed=run.seed,
                                     decoder=run.decoder, threads=run.threads)
        cells.append(_cell(run, code, p_bf, run.p_m, t_f, res.trials,
                           res.trials - res.successes, run.decoder))
        bound = hardwall_stability_bound(code, params, wall_area=region.area)
        if not bound.diverged:
            bound_points.append((p_bf, bound.epsilon))
        log(f"stability p_bf={p_bf}: rate={cells[-1].rate:.4f}")
    fig = None
    if len(cells) > 1:
        fig = (lambda: bound_overlay_figure(cells, bound_points)
               if bound_points else failure_curves_figure(cells))
    _emit(run, cells, fig)


@main.command()
@_common_options(multi_t=True)
@click.option("--mode", "flux_mode", type=click.Choice(["single", "double"]),
              default=None, help="Thread one anchor or a far pair.")
@click.option("--anchor", "anchors", type=int, multiple=True,
              help="Anchor check index (repeatable).")
@click.option("--separation", type=int, default=None,
              help="Anchor separation for the double-mode bound.")
@_guard
def fluxthread(flux_mode, anchors, separation, **kwargs):
    """Flux threading: recover a hidden sign on anchor readouts (p_bf = 0)."""
    params = _params_from(kwargs)
    run = _resolve("fluxthread", params, multi_t=True)
    cfg_file = _load_config_file(params.get("config"))
    flux_mode = _pick(flux_mode, cfg_file, "mode", "single")
    anchors = tuple(_pick(anchors, cfg_file, "anchors", ()))
    separation = int(_pick(separation, cfg_file, "separation", 0))
    p_bf_given = params.get("p_bf") not in (None, ()) or "p_bf" in cfg_file
    if p_bf_given and any(v != 0.0 for v in run.p_bf):
        raise click.UsageError("fluxthread runs with bitflips off; drop --p-bf")
    code = _resolve_code(run)
    if not anchors:
        anchors = (0,) if flux_mode == "single" else (0, code.num_z_checks // 2)
    flux = FluxThreadingConfig(mode=flux_mode, anchor_checks=anchors,
                               separation=separation)
    cells = []
    reference = []
    for t_f in run.t_f:
        noise = NoiseParams(p_bf=0.0, p_m=run.p_m, t_f=t_f)
        res = run_flux_threading(code, flux, noise, t_f=t_f,
                                 n_trials=run.trials, seed=run.seed,
                                 threads=run.threads)
        cells.append(_cell(run, code, 0.0, run.p_m, t_f, res.trials,
                           res.trials - res.successes, flux_mode))
        reference.append((t_f, res.details["exact_failure"]))
        log(f"fluxthread t_f={t_f}: rate={cells[-1].rate:.4f}")
    fig = (lambda: decay_figure(cells, reference)) if len(cells) > 1 else None
    _emit(run, cells, fig)


@main.command()
@_common_options()
@click.option("--mode", "sweep_mode", type=click.Choice(["grid", "boundary"]),
              default="grid", help="Plain product grid or jump scan.")
@_guard
def sweep(sweep_mode, **kwargs):
    """Threshold sweep: a noise grid (grid mode) or the phase-boundary
    jump scan with budgeted probing (boundary mode)."""
    params = _params_from(kwargs)
    run = _resolve("sweep", params)
    cfg_file = _load_config_file(params.get("config"))

    if sweep_mode == "boundary":
        fields = set(BoundaryScanConfig.__dataclass_fields__)
        picked = {k: _coerce_tuples(v) for k, v in cfg_file.items() if k in fields}
        overrides = {"master_seed": run.seed, "decoder": run.decoder}
        if params.get("length") is not None or "L" in cfg_file:
            overrides["length"] = run.length
        if params.get("trials") is not None:
            overrides["report_trials"] = run.trials
        scan_cfg = BoundaryScanConfig(**{**picked, **overrides})
        scan = boundary_scan(scan_cfg, threads=run.threads)
        try:
            fit = fit_boundary(scan.boundary)
        except InvalidInput:
            fit = None  # fewer than 3 converged detected columns
        if fit is not None:
            log(f"boundary fit: c={fit.c:.4f} sqrt_ssr={fit.sqrt_ssr:.3e} "
                f"linear_ssr={fit.linear_ssr:.3e}")
        fig = (lambda: boundary_figure(scan, fit)) if scan.boundary else None
        _emit(run, scan.cells, fig)
        if run.out is not None:
            side = str(Path(run.out).with_suffix(".boundary.json"))
            with open(side, "w", newline="") as fh:
                fh.write(boundary_to_json(scan))
            log(f"wrote {side}")
        else:
            click.echo(boundary_to_json(scan), nl=False)
        return

    if run.code not in BUILTIN_FAMILIES:
        raise click.UsageError("sweep grids need a builtin code family")
    grid = SweepConfig(
        lengths=_pick((run.length,) if params.get("length") is not None else (),
                      cfg_file, "lengths", (run.length,)),
        p_bf_values=_pick(params.get("p_bf"), cfg_file, "p_bf_values", run.p_bf),
        p_m_values=_pick((run.p_m,) if params.get("p_m") is not None else (),
                         cfg_file, "p_m_values", (run.p_m,)),
        t_f=run.t_f[0] if (params.get("t_f") or "t_f" in cfg_file) else None,
        decoder=run.decoder,
        n_trials=run.trials if params.get("trials") is not None
        else cfg_file.get("n_trials", run.trials),
        master_seed=run.seed,
        family=run.code)
    cells = threshold_sweep(grid, threads=run.threads)
    fig = None
    if len(cells) > 1:
        x_field = "p_bf" if len(grid.p_bf_values) > 1 else "p_m"
        fig = lambda: failure_curves_figure(cells, x_field=x_field)  # noqa: E731
    _emit(run, cells, fig)


@main.command()
@_common_options()
@_guard
def bounds(**kwargs):
    """Closed-form cluster bounds for the configured code and noise."""
    run = _resolve("bounds", _params_from(kwargs))
    code = _resolve_code(run)
    t_f = run.t_f[0]
    dist = _known_distance(run, code)
    results = {}
    for p_bf in run.p_bf:
        params = NoiseParams(p_bf=p_bf, p_m=run.p_m, t_f=t_f)
        region = default_region(code)
        results[repr(float(p_bf))] = {
            "memory_failure": asdict(memory_failure_bound(code, params,
                                                          distance=dist)),
            "hardwall_stability": asdict(hardwall_stability_bound(
                code, params, wall_area=region.area)),
            "two_puncture": asdict(two_puncture_bound(code, params)),
            "single_flux": asdict(single_flux_bound(code, params)),
            "double_flux": asdict(double_flux_bound(code, params,
                                                    distance=dist)),
        }
    # echo only the physics inputs: execution details (output path, thread
    # count, figure toggle) must not leak into the artifact bytes
    cfg_echo = asdict(run)
    for key in ("out", "threads", "figure", "format"):
        cfg_echo.pop(key, None)
    payload = {"config": cfg_echo, "bounds": results}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if run.out is None:
        click.echo(text, nl=False)
    else:
        with open(run.out, "w", newline="") as fh:
            fh.write(text)
        log(f"wrote {run.out}")


# ---------------------------------------------------------------------------
# verification suite


def _check_identity_chain() -> tuple[bool, str]:
    worst = 0.0
    for code in (build_code("repetition", 3), build_code("toric", 2)):
        p = NoiseParams(p_bf=0.05, p_m=0.05, t_f=2)
        for mode in ("exact-enumeration", "decode-identity"):
            for est in order_parameter_scan(code, p, mode=mode):
                worst = max(worst, est.max_deviation)
    return worst < 1e-10, f"max deviation {worst:.3e}"


def _check_transfer_agreement() -> tuple[bool, str]:
    rng = np.random.default_rng(20260823)
    worst = 0.0
    for _ in range(20):
        code = build_code("repetition", int(rng.integers(3, 5)))
        params = NoiseParams(p_bf=float(rng.uniform(0.03, 0.3)),
                             p_m=float(rng.uniform(0.03, 0.3)),
                             t_f=int(rng.integers(1, 4)))
        s = syndrome_of(code, sample_error(code, params, rng), params)
        c = couplings_from_params(params)
        want = exact_log_partition(build_syndrome_model(code, s, c))
        got = build_transfer_matrix(code, c).log_partition(s.signs, params.t_f)
        worst = max(worst, abs(got - want) / max(abs(want), 1.0))
    return worst < 1e-10, f"max relative gap {worst:.3e}"


def _check_gauge_invariance() -> tuple[bool, str]:
    code = build_code("toric", 2)
    params = NoiseParams(p_bf=0.2, p_m=0.2, t_f=2)
    rng = np.random.default_rng(7)
    c = couplings_from_params(params)
    g = build_gauge_model(code, sample_error(code, params, rng), c)
    worst = 0.0
    for _ in range(200):
        config = rng.choice([-1, 1], size=g.num_spins).astype(np.int8)
        site = (int(rng.integers(0, 4)), int(rng.integers(0, params.t_f + 1)))
        moved = apply_gauge_transformation(code, params.t_f, config, site)
        a, b = model_energy(g, config), model_energy(g, moved)
        if math.isinf(a) and math.isinf(b):
            continue
        worst = max(worst, abs(a - b) / max(abs(a), 1.0))
    return worst < 1e-12, f"max energy shift {worst:.3e}"


def _check_clean_nonnegative() -> tuple[bool, str]:
    code = build_code("toric", 2)
    c = couplings_from_params(NoiseParams(p_bf=0.1, p_m=0.1, t_f=2))
    model = build_clean_model(code, c, 2)
    worst = 0.0
    spins = [qubit_spin(code.n_qubits, r, t)
             for r in range(code.n_qubits) for t in (1, 2)]
    for a in spins:
        worst = min(worst, exact_expectation(model, (a,)))
    for a, b in zip(spins, spins[3:]):
        worst = min(worst, exact_expectation(model, (a, b)))
    return worst > -1e-12, f"min expectation {worst:.3e}"


def _check_bound_dominance() -> tuple[bool, str]:
    code = build_code("repetition", 3)
    margin = math.inf
    converged = 0
    for q in (0.01, 0.05):
        params = NoiseParams(p_bf=q, p_m=q, t_f=2)
        exact = exact_success_probabilities(code, params, decoder="mw")
        bound = memory_failure_bound(code, params, distance=3)
        if bound.diverged:
            # epsilon is inf there, so dominance holds vacuously; just make
            # sure the flag agrees with the convergence condition.
            if bound.x < 1.0:
                return False, f"spurious divergence flag at q={q}"
            continue
        converged += 1
        margin = min(margin, bound.epsilon - (1.0 - exact.all_logicals))
    if converged == 0:
        return False, "no converged point to compare"
    return margin >= 0.0, f"worst converged slack {margin:.3e}"


def _check_optimality_chain() -> tuple[bool, str]:
    worst = math.inf
    for code in (build_code("repetition", 3), build_code("toric", 2)):
        params = NoiseParams(p_bf=0.05, p_m=0.05, t_f=2)
        ml = exact_success_probabilities(code, params, decoder="ml")
        mw = exact_success_probabilities(code, params, decoder="mw")
        worst = min(worst, ml.all_logicals - mw.all_logicals)
        worst = min(worst, min(ml.per_logical.values()) - ml.all_logicals)
    return worst >= -1e-12, f"worst chain slack {worst:.3e}"


VERIFY_CHECKS = (
    ("nishimori-identity-chain", _check_identity_chain),
    ("transfer-matrix-agreement", _check_transfer_agreement),
    ("gauge-invariance", _check_gauge_invariance),
    ("clean-correlations-nonnegative", _check_clean_nonnegative),
    ("bound-dominance", _check_bound_dominance),
    ("decoder-optimality-chain", _check_optimality_chain),
)


@main.command()
@click.option("--out", default=None, help="Also write the table to a file.")
@_guard
def verify(out):
    """Run the identity and inequality suite on built-in tiny instances."""
    rows = []
    first_bad = None
    for name, check in VERIFY_CHECKS:
        log(f"checking {name} ...")
        ok, detail = check()
        rows.append((name, ok, detail))
        if not ok and first_bad is None:
            first_bad = name
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}"
             for name, ok, detail in rows]
    table = "\n".join(lines) + "\n"
    click.echo(table, nl=False)
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(table)
        log(f"wrote {out}")
    if first_bad is not None:
        log(f"first failure: {first_bad}")
        raise SystemExit(1)


if __name__ == "__main__":
    main()
