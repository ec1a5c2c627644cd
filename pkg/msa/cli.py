"""
Command line interface: ``msa <gen|scale|lagrangian-scale|cantor|verify|lattice>``.

Every command writes its outputs, a ``config.json`` with the parameters of the run and
a ``log.txt`` into ``--out``. Exit codes: 0 pass, 1 fail, 2 usage, 3 resource.
"""
import json
import logging
import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from msa.cantor import cantor_growth, cantor_lower_bound, growth_slope
from msa.field_core import ScalarField, TimeSpec, VectorField, load_field, save_field
from msa.lagrangian import (
    LABEL_NAMES,
    AdmissibilityParams,
    capped_scale_op,
    cylinder_polylines,
    drift_maximal,
    make_cylinder,
)
from msa.multiscale import CONTINUUM, LATTICE, SPACE, SPACETIME, ScaleLadder, scale_op
from msa.ns_synth import (
    DEFAULT_NZ,
    load_series,
    random_solenoidal,
    save_series,
    spectral_solve,
    taylor_green,
)
from msa.utils import (
    DEFAULT_BISECTIONS,
    DEFAULT_REFINEMENT_BAND,
    DEFAULT_RUNGS_PER_OCTAVE,
    DEFAULT_SEED,
    EXIT_FAIL,
    EXIT_PASS,
    EXIT_RESOURCE,
    EXIT_USAGE,
    ConfigurationError,
    DomainError,
    FormatError,
    ParameterError,
    ResourceError,
    UsageError,
    get_commit,
    get_version,
    safe_filename,
    setup_logging,
    thread_limit,
)
from msa.verify import SUITES, SuiteConfig, mixed_norm_lattice, run_suite

logger = logging.getLogger(__name__)

TAYLOR_GREEN = "taylor-green"
RANDOM = "random"


def write_config(out_dir: Path, command: str, **params):
    """Records the parameters of this run"""
    config = {"command": command}
    config.update({k: str(v) if isinstance(v, Path) else v for k, v in params.items()})
    config["commit"] = get_commit()
    config["version"] = get_version()
    out_dir.mkdir(exist_ok=True, parents=True)
    out_dir.joinpath("config.json").write_text(json.dumps(config, indent=4))


def _ladder(field: ScalarField, args) -> ScaleLadder:
    return ScaleLadder.for_grid(
        field.grid, args.per_octave, args.bisections, args.rho_min, args.rho_max
    )


def _scalar(field: Union[ScalarField, VectorField]) -> ScalarField:
    if isinstance(field, VectorField):
        logger.info(f"Using the magnitude of the {field.dim} component field")
        return field.magnitude()
    return field


def gen(
    out_dir: Path,
    field: str = TAYLOR_GREEN,
    nu: float = 0.1,
    n: int = 32,
    t_max: float = 1.0,
    dt: float = 1e-3,
    snapshots: int = 5,
    nz: int = DEFAULT_NZ,
    seed: int = DEFAULT_SEED,
    modes: int = 4,
) -> int:
    if field == TAYLOR_GREEN:
        time = TimeSpec(snapshots, t_max / max(snapshots - 1, 1), 0.0)
        series = taylor_green(nu, time, n, nz)
    elif field == RANDOM:
        u0 = random_solenoidal(n, seed, modes)
        series = spectral_solve(u0, nu, t_max, dt, snapshots, nz)
    else:
        raise UsageError(f"Unknown field {field!r}, choose {TAYLOR_GREEN} or {RANDOM}")
    save_series(series, out_dir)
    write_config(
        out_dir,
        "gen",
        field=field,
        nu=nu,
        grid=n,
        tmax=t_max,
        dt=dt,
        snapshots=snapshots,
        nz=nz,
        seed=seed,
        modes=modes,
        energy_holds=series.energy_holds(),
    )
    logger.info(f"Wrote {series.nt} snapshots of {field} on {n}^2 x {nz} to {out_dir}")
    if not series.energy_holds():
        logger.warning(f"Energy inequality violated by {series.energy_excess():.3g}")
        return EXIT_FAIL
    return EXIT_PASS


def scale(args) -> int:
    f = _scalar(load_field(args.field))
    mode = args.mode or (SPACETIME if f.is_spacetime else SPACE)
    ladder = _ladder(f, args)
    sf = scale_op(f, args.alpha, ladder, mode, args.normalization)
    prefix = args.out.joinpath(safe_filename(args.prefix))
    save_field(sf.as_field(sf.s), Path(f"{prefix}_s.msf"), "scale")
    save_field(sf.as_field(sf.a), Path(f"{prefix}_a.msf"), "average")
    save_field(sf.as_field(sf.sing.astype(float)), Path(f"{prefix}_label.msf"), "label")
    write_config(
        args.out,
        "scale",
        field=args.field,
        alpha=args.alpha,
        mode=mode,
        normalization=args.normalization,
        rho_min=ladder.rho_min,
        rho_max=ladder.rho_max,
        per_octave=ladder.per_octave,
        bisections=ladder.bisections,
        sing=int(sf.sing.sum()),
        truncated=int(sf.truncated.sum()),
    )
    logger.info(
        f"S_{args.alpha:g} on {sf.s.size} points: {int(sf.sing.sum())} Sing-candidates, "
        f"{int(sf.truncated.sum())} without trigger"
    )
    return EXIT_PASS


def _cylinder_anchors(r_bar: np.ndarray, times: np.ndarray, count: int, seed: int):
    k = np.arange(r_bar.shape[0]).reshape((-1,) + (1,) * (r_bar.ndim - 1))
    usable = np.isfinite(r_bar) & (r_bar > 0) & (times[k] > 0)
    candidates = np.flatnonzero(usable)
    if candidates.size == 0:
        return candidates
    rng = np.random.default_rng(seed)
    return rng.choice(candidates, size=min(count, candidates.size), replace=False)


def lagrangian_scale(args) -> int:
    f = _scalar(load_field(args.field))
    if not f.is_spacetime:
        raise ParameterError(f"{args.field} is not a spacetime field")
    b = None
    if args.drift is not None:
        b = load_field(args.drift)
        if not isinstance(b, VectorField):
            raise ParameterError(f"{args.drift} is not a vector field")
    if args.eta0 is None:
        params = AdmissibilityParams.default(f.grid.rank)
    else:
        params = AdmissibilityParams(args.eta0)
    ladder = _ladder(f, args)
    drift_max = None if b is None else drift_maximal(b, ladder)
    capped = capped_scale_op(
        f, b, args.alpha, ladder, params, args.normalization, args.r0, drift_max
    )
    prefix = args.out.joinpath(safe_filename(args.prefix))
    outputs = {
        "s": capped.s,
        "a_lt": capped.a_lt,
        "a_eq": capped.a_eq,
        "r_bar": capped.r_bar,
        "labels": capped.labels.astype(float),
    }
    for name, values in outputs.items():
        save_field(ScalarField(f.grid, values, f.time), Path(f"{prefix}_{name}.msf"), name)

    cylinders = []
    for flat in _cylinder_anchors(capped.r_bar, f.time.times, args.cylinders, args.seed):
        k, cell = np.unravel_index(flat, (f.time.nt, f.grid.size))
        x = f.grid.points()[cell]
        rho = float(capped.r_bar.reshape(f.time.nt, -1)[k, cell])
        cylinders.append(
            make_cylinder(b, f.grid, float(f.time.times[k]), x, rho, params, drift_max)
        )
    Path(f"{prefix}_cylinders.json").write_text(
        json.dumps(cylinder_polylines(cylinders), indent=4)
    )
    counts = capped.label_counts()
    write_config(
        args.out,
        "lagrangian-scale",
        field=args.field,
        drift=args.drift,
        alpha=args.alpha,
        eta0=params.eta0,
        r0=args.r0,
        mollifier="exp(1/(|x|^2 - 1)) on the unit ball",
        matrix_norm="frobenius",
        normalization=args.normalization,
        rho_min=ladder.rho_min,
        rho_max=ladder.rho_max,
        labels=counts,
        rstar_violations=capped.rstar_violations,
        cylinders=len(cylinders),
    )
    logger.info(
        "Partition: " + ", ".join(f"{name} {counts[name]}" for name in LABEL_NAMES.values())
    )
    if capped.rstar_violations:
        return EXIT_FAIL
    return EXIT_PASS


def cantor(args) -> int:
    report = cantor_lower_bound(args.depth)
    out = report.to_json()
    if args.growth:
        growth = cantor_growth(range(2, args.depth + 1))
        out["growth"] = growth.to_dict(orient="records")
        out["growth_slope"] = growth_slope(growth)
    report_path = args.report or args.out.joinpath("cantor.json")
    report_path.parent.mkdir(exist_ok=True, parents=True)
    report_path.write_text(json.dumps(out, indent=4))
    csv_path = args.csv or args.out.joinpath("cantor.csv")
    report.table.to_csv(csv_path, index=False)
    write_config(args.out, "cantor", depth=args.depth, growth=args.growth, holds=report.holds)
    logger.info(f"Cantor bound at depth {args.depth}: {'holds' if report.holds else 'fails'}")
    return EXIT_PASS if report.holds else EXIT_FAIL


def verify(args) -> int:
    grids = [int(g) for g in args.grids.split(",") if g.strip()] if args.grids else []
    config = SuiteConfig(
        args.suite,
        tuple(grids),
        args.trials,
        args.seed,
        args.band,
        args.report,
        args.depth,
        args.epsilon,
    )
    reports = run_suite(config)
    reports.write(args.report or args.out.joinpath(f"{config.suite}.json"), args.csv)
    write_config(
        args.out,
        "verify",
        suite=config.suite,
        grids=list(config.grids),
        trials=config.trials,
        seed=config.seed,
        band=config.band,
        depth=config.depth,
        epsilon=config.epsilon,
        passed=reports.passed,
    )
    return EXIT_PASS if reports.passed else EXIT_FAIL


def lattice(args) -> int:
    if args.series is not None:
        series = load_series(args.series)
    else:
        time = TimeSpec(args.snapshots, args.tmax / max(args.snapshots - 1, 1), 0.0)
        series = taylor_green(args.nu, time, args.grid, args.nz)
    table = mixed_norm_lattice(series)
    csv_path = args.csv or args.out.joinpath("lattice.csv")
    csv_path.parent.mkdir(exist_ok=True, parents=True)
    table.to_csv(csv_path, index=False)
    write_config(
        args.out,
        "lattice",
        series=args.series,
        nu=series.nu,
        grid=series.n,
        snapshots=series.nt,
    )
    logger.info(f"Wrote {len(table)} lattice entries to {csv_path}")
    return EXIT_PASS


def _add_ladder_arguments(parser: ArgumentParser):
    parser.add_argument("--field", type=Path, required=True, help="MSF input field")
    parser.add_argument("--alpha", type=float, required=True)
    parser.add_argument(
        "--normalization", default=LATTICE, choices=[LATTICE, CONTINUUM]
    )
    parser.add_argument("--per-octave", type=int, default=DEFAULT_RUNGS_PER_OCTAVE)
    parser.add_argument("--bisections", type=int, default=DEFAULT_BISECTIONS)
    parser.add_argument("--rho-min", type=float, help="Smallest rung, default one grid spacing")
    parser.add_argument("--rho-max", type=float, help="Largest rung, default half the domain")
    parser.add_argument("--prefix", default="field")


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="Output directory")
    common.add_argument("--report", type=Path, help="Write the JSON report here")
    common.add_argument("--csv", type=Path, help="Write the CSV table here")

    parser = ArgumentParser(prog="msa")
    commands = parser.add_subparsers(dest="command", required=True)

    p_gen = commands.add_parser("gen", parents=[common], help="Synthesize a flow series")
    p_gen.add_argument("--field", default=TAYLOR_GREEN, choices=[TAYLOR_GREEN, RANDOM])
    p_gen.add_argument("--nu", type=float, default=0.1)
    p_gen.add_argument("--grid", type=int, default=32)
    p_gen.add_argument("--tmax", type=float, default=1.0)
    p_gen.add_argument("--dt", type=float, default=1e-3)
    p_gen.add_argument("--snapshots", type=int, default=5)
    p_gen.add_argument("--nz", type=int, default=DEFAULT_NZ)
    p_gen.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_gen.add_argument("--modes", type=int, default=4)

    p_scale = commands.add_parser("scale", parents=[common], help="Eulerian scale operator")
    _add_ladder_arguments(p_scale)
    p_scale.add_argument(
        "--mode", choices=[SPACE, SPACETIME], help="Default follows the field's time axis"
    )

    p_lag = commands.add_parser(
        "lagrangian-scale", parents=[common], help="Capped scale operator on skewed cylinders"
    )
    _add_ladder_arguments(p_lag)
    p_lag.add_argument("--drift", type=Path, help="MSF drift vector field, default zero")
    p_lag.add_argument("--eta0", type=float, help="Admissibility constant")
    p_lag.add_argument("--r0", type=float, default=1.0)
    p_lag.add_argument("--cylinders", type=int, default=8, help="Cylinders to dump")
    p_lag.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p_cantor = commands.add_parser("cantor", parents=[common], help="Cantor lower bound")
    p_cantor.add_argument("--depth", type=int, default=8)
    p_cantor.add_argument("--growth", default=False, action="store_true")

    p_verify = commands.add_parser("verify", parents=[common], help="Run a verification suite")
    p_verify.add_argument("--suite", required=True, help=", ".join(SUITES))
    p_verify.add_argument("--grids", help="Comma separated grid sizes, e.g. 32,64")
    p_verify.add_argument("--trials", type=int)
    p_verify.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_verify.add_argument("--band", type=float, default=DEFAULT_REFINEMENT_BAND)
    p_verify.add_argument("--depth", type=int, default=8)
    p_verify.add_argument("--epsilon", type=float, default=0.1)

    p_lattice = commands.add_parser(
        "lattice", parents=[common], help="Mixed-norm lattice of a flow series"
    )
    p_lattice.add_argument("--series", type=Path, help="Directory written by msa gen")
    p_lattice.add_argument("--nu", type=float, default=0.1)
    p_lattice.add_argument("--grid", type=int, default=16)
    p_lattice.add_argument("--tmax", type=float, default=1.0)
    p_lattice.add_argument("--snapshots", type=int, default=5)
    p_lattice.add_argument("--nz", type=int, default=DEFAULT_NZ)
    return parser


def run_command(args) -> int:
    if args.command == "gen":
        return gen(
            args.out,
            args.field,
            args.nu,
            args.grid,
            args.tmax,
            args.dt,
            args.snapshots,
            args.nz,
            args.seed,
            args.modes,
        )
    commands = {
        "scale": scale,
        "lagrangian-scale": lagrangian_scale,
        "cantor": cantor,
        "verify": verify,
        "lattice": lattice,
    }
    return commands[args.command](args)


def main(argv: Optional[Sequence[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.out.joinpath("log.txt"))
    logger.info(f"Running msa {get_version()} {args.command}")

    try:
        thread_limit()
        code = run_command(args)
    except ResourceError as e:
        logger.error(f"Resource limit: {e}")
        code = EXIT_RESOURCE
    except (UsageError, FormatError, DomainError, ParameterError, ConfigurationError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        code = EXIT_USAGE
    except OSError as e:
        logger.error(str(e))
        code = EXIT_USAGE
    sys.exit(code)


if __name__ == "__main__":
    main()
