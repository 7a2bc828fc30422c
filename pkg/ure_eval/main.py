import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import yaml
from click.core import ParameterSource

from ure_eval.core import Catalog, ExposureKind
from ure_eval.dataio import (
    idmap_path,
    read_exposure_csv,
    read_family,
    read_predictions_csv,
    render_report,
    write_curves,
    write_idmap,
    write_report,
    write_world,
)
from ure_eval.errors import EvalError, InvalidSpec, VerificationFailed
from ure_eval.experiments import (
    DEFAULT_MATRIX_TARGETS,
    compare_models,
    correlation_sweep,
    default_k_grid,
    evaluate_family,
    kbar_sweep,
    nbar_sweep,
    parse_metric,
    scheme_contrast,
    synthetic_family_result,
    ure_vs_gold_matrix,
)
from ure_eval.metrics import evaluate_scheme
from ure_eval.run_logging import configure_logging, log_run
from ure_eval.schemas import RunConfig, Scheme, SkipPolicy
from ure_eval.synth import WorldSpec, default_family, generate_full, make_family, sample_random_exposure
from ure_eval.verifiers import VERIFIERS, run_verifier

SKIP_POLICIES = click.Choice([p.value for p in SkipPolicy])
SCHEMES = click.Choice([s.value for s in Scheme])
EXISTING_FILE = click.Path(exists=True, dir_okay=False)


class IntList(click.ParamType):
    """Comma-separated integers (`1,3,5`); YAML lists are accepted as-is."""

    name = "ints"

    def convert(self, value, param, ctx):
        items = value if isinstance(value, (list, tuple)) else str(value).split(",")
        try:
            return [int(v) for v in items if str(v).strip() != ""]
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of integers", param, ctx)


def _with_config(ctx: click.Context, opts: Dict[str, Any]) -> Dict[str, Any]:
    """Fill options left at their defaults from the `--config` YAML file."""
    path = opts.pop("config", None)
    if not path:
        return opts
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise InvalidSpec(f"--config {path}: {e}")
    if not isinstance(data, dict):
        raise InvalidSpec(f"--config {path}: expected a mapping of option names to values")

    known = {p.name: p for p in ctx.command.params if p.name != "config"}
    for key, value in data.items():
        name = str(key).replace("-", "_")
        if name not in known:
            raise InvalidSpec(f"--config {path}: unknown key {key!r}")
        if ctx.get_parameter_source(name) is ParameterSource.DEFAULT:
            opts[name] = known[name].type_cast_value(ctx, value)
    return opts


def _emit(result, config: RunConfig) -> None:
    if config.out:
        write_report(result, config.out, config)
    else:
        click.echo(render_report(result, config), nl=False)


def _write_idmaps(out: Optional[str], users, items) -> None:
    if not out:
        return
    if not users.is_identity:
        write_idmap(idmap_path(out, "users"), users)
    if not items.is_identity:
        write_idmap(idmap_path(out, "items"), items)


# -------- shared options --------
def output_options(f):
    f = click.option("--format", type=click.Choice(["json", "csv"]), default="json", show_default=True)(f)
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file (default: stdout).")(f)
    return f


def config_option(f):
    return click.option("--config", type=EXISTING_FILE, default=None, help="YAML file with option values.")(f)


def world_options(f):
    f = click.option("--workers", type=click.IntRange(min=1), default=None, help="Threads per family evaluation.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=7, show_default=True)(f)
    f = click.option("--family-size", type=click.IntRange(min=2), default=60, show_default=True)(f)
    f = click.option("--rate", type=click.FloatRange(0.0, 1.0, min_open=True), default=0.2, show_default=True)(f)
    f = click.option("--n", type=click.IntRange(min=2), default=500, show_default=True, help="Catalog size.")(f)
    f = click.option("--users", type=click.IntRange(min=1), default=200, show_default=True)(f)
    return f


def _world(opts: Dict[str, Any]):
    spec = WorldSpec(user_count=opts["users"], item_count=opts["n"], positive_rate=opts["rate"], seed=opts["seed"])
    return generate_full(spec), default_family(opts["family_size"], opts["seed"])


def _world_params(opts: Dict[str, Any], *extra: str) -> Dict[str, Any]:
    keys = ("users", "n", "rate", "family_size", *extra)
    return {k: opts[k] for k in keys if opts.get(k) is not None}


# -------- CLI --------
@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging.")
def cli(verbose):
    """Recall evaluation on fully- and randomly-exposed data."""
    configure_logging("DEBUG" if verbose else None)


@cli.command("eval")
@click.option("--scheme", type=SCHEMES, required=True, help="full: gold Recall@K, rand: Recall@K̄, ure: URE@K.")
@click.option("--dataset", type=EXISTING_FILE, required=True, help="user_id,item_id,label file.")
@click.option("--predictions", type=EXISTING_FILE, required=True, help="user_id,item_id,score file.")
@click.option("--k", type=click.IntRange(min=1), default=None)
@click.option("--kbar", type=click.IntRange(min=1), default=None, help="Cutoff for --scheme rand (default --k).")
@click.option("--skip-policy", type=SKIP_POLICIES, default="skip", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=None)
@output_options
def eval_command(**opts):
    """Macro-averaged metric of one model under one scheme."""
    scheme = Scheme(opts["scheme"])
    cutoff = opts["kbar"] if scheme is Scheme.TRADITIONAL_RAND and opts["kbar"] else opts["k"]
    if cutoff is None:
        raise click.UsageError("--k is required" if scheme is not Scheme.TRADITIONAL_RAND else "--kbar or --k is required")
    config = RunConfig(
        subcommand="eval",
        inputs={"dataset": opts["dataset"], "predictions": opts["predictions"]},
        scheme=scheme,
        k=opts["k"],
        kbar=opts["kbar"],
        out=opts["out"],
        format=opts["format"],
        skip_policy=opts["skip_policy"],
    )

    with log_run("eval", scheme=scheme.value, k=cutoff):
        preds = read_predictions_csv(opts["predictions"])
        kind = ExposureKind.FULL if scheme is Scheme.GOLD_FULL else ExposureKind.RANDOM
        data = read_exposure_csv(opts["dataset"], kind, item_map=preds.items, user_map=preds.users)
        report = evaluate_scheme(
            scheme, data.exposures, preds.tables, cutoff, preds.catalog, config.skip_policy, opts["workers"]
        )
        _emit(report, config)
        _write_idmaps(config.out, preds.users, preds.items)


@cli.command()
@click.option("--mode", type=click.Choice(sorted(VERIFIERS)), required=True)
@click.option("--n", type=click.IntRange(min=1), default=None, help="Catalog size (hypergeom --sweep: largest N).")
@click.option("--npos", type=click.IntRange(min=0), default=None, help="Positives N⁺ (default 1).")
@click.option("--m", type=click.IntRange(min=0), default=None, help="Positives ranked within K (theorem2).")
@click.option("--nbar", type=click.IntRange(min=1), default=None)
@click.option("--k", type=click.IntRange(min=1), default=None)
@click.option("--kbar", type=click.IntRange(min=1), default=None, help="Must equal N̄·K/N when given.")
@click.option("--budget", type=click.IntRange(min=1), default=None, help="Enumeration budget (default URE_BUDGET).")
@click.option("--skip-policy", type=SKIP_POLICIES, default="skip", show_default=True, help="0/0 convention.")
@click.option("--trials", type=click.IntRange(min=1), default=None, help="Monte Carlo instead of enumeration.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--sweep", is_flag=True, help="hypergeom: every N ≤ --n, N⁺, K.")
@output_options
def verify(**opts):
    """Exact (or Monte Carlo) check of an evaluation identity."""
    mode = opts["mode"]
    args = {k: opts[k] for k in ("n", "npos", "m", "nbar", "k", "kbar", "budget", "trials", "seed", "sweep")}
    args["convention"] = opts["skip_policy"]
    config = RunConfig(
        subcommand="verify",
        mode=mode,
        k=opts["k"],
        kbar=opts["kbar"],
        nbar=opts["nbar"],
        seed=opts["seed"] if opts["trials"] else None,
        budget=opts["budget"],
        out=opts["out"],
        format=opts["format"],
        skip_policy=opts["skip_policy"],
        params={k: args[k] for k in ("n", "npos", "m", "trials", "sweep") if args[k] is not None and args[k] is not False},
    )

    with log_run("verify", mode=mode, n=opts["n"], npos=opts["npos"], nbar=opts["nbar"], k=opts["k"]):
        res = run_verifier(mode, args)
        if "error" in res:
            raise click.UsageError(res["error"])
        _emit(res["result"], config)
        if not res["ok"]:
            raise VerificationFailed(f"{mode}: identity does not hold")


@cli.command()
@config_option
@world_options
@click.option("--nbar", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
def simulate(**opts):
    """Write a synthetic world: D_full, D_rand, one prediction file per scorer."""
    opts = _with_config(click.get_current_context(), opts)
    config = RunConfig(
        subcommand="simulate", nbar=opts["nbar"], seed=opts["seed"], out=opts["out"], params=_world_params(opts)
    )
    with log_run("simulate", users=opts["users"], n=opts["n"], nbar=opts["nbar"], seed=opts["seed"]):
        world, specs = _world(opts)
        rand = sample_random_exposure(world.full, opts["nbar"], opts["seed"])
        predictions = make_family(world, specs)
        write_world(opts["out"], world, rand, specs, predictions, opts["nbar"], opts["seed"], config)


@cli.command()
@config_option
@world_options
@click.option("--full", type=EXISTING_FILE, default=None, help="D_full file (file-based family).")
@click.option("--rand", type=EXISTING_FILE, default=None, help="D_rand file (default: sampled from --full).")
@click.option("--predictions", type=EXISTING_FILE, multiple=True, help="One prediction file per model.")
@click.option("--nbar", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--fixed", multiple=True, default=("rand@5",), show_default=True, help="Fixed metric, e.g. rand@5, ure@30.")
@click.option("--matrix", is_flag=True, help="r(URE@K_i, Recall@K_j) over --k-grid instead of curves.")
@click.option("--k-grid", type=IntList(), default=None)
@output_options
def correlate(**opts):
    """Correlation of fixed metrics with gold Recall@K across a model family."""
    opts = _with_config(click.get_current_context(), opts)
    fixed = [parse_metric(m) for m in opts["fixed"]]
    kbar_grid = sorted({k for s, k in fixed if s is Scheme.TRADITIONAL_RAND}) or [1]
    config = RunConfig(
        subcommand="correlate",
        mode="matrix" if opts["matrix"] else "curve",
        inputs={k: v for k, v in (("full", opts["full"]), ("rand", opts["rand"])) if v},
        nbar=opts["nbar"],
        seed=opts["seed"],
        out=opts["out"],
        format=opts["format"],
        params={**_world_params(opts, "fixed", "k_grid"), "predictions": list(opts["predictions"])},
    )

    with log_run("correlate", mode=config.mode, nbar=opts["nbar"], seed=opts["seed"]):
        family, item_count = _load_family(opts, kbar_grid, fixed)
        if opts["matrix"]:
            targets = opts["k_grid"] or [k for k in DEFAULT_MATRIX_TARGETS if k < item_count]
            _emit(ure_vs_gold_matrix(family, targets), config)
            return
        curves = [correlation_sweep(family, metric, opts["k_grid"]) for metric in opts["fixed"]]
        _emit_curves(curves, config)


def _load_family(opts: Dict[str, Any], kbar_grid: List[int], fixed):
    """ModelFamilyResult from prediction files when given, else from the synthetic world."""
    extra = {k for s, k in fixed if s is not Scheme.TRADITIONAL_RAND}
    if opts["matrix"]:
        extra |= set(opts["k_grid"] or DEFAULT_MATRIX_TARGETS)

    if opts["predictions"]:
        family, users, items = read_family(list(opts["predictions"]))
        catalog = Catalog(len(items))
        full = None
        if opts["full"]:
            full = read_exposure_csv(opts["full"], ExposureKind.FULL, item_map=items, user_map=users).exposures
        if opts["rand"]:
            rand = read_exposure_csv(opts["rand"], ExposureKind.RANDOM, item_map=items, user_map=users).exposures
        elif full is not None:
            rand = sample_random_exposure(full, opts["nbar"], opts["seed"])
        else:
            raise click.UsageError("--predictions needs --rand or --full")
        grid = sorted(set(opts["k_grid"] or default_k_grid(catalog.item_count)) | {k for k in extra if k <= catalog.item_count})
        result = evaluate_family(family, rand, catalog, grid, kbar_grid, full=full, nbar=opts["nbar"], workers=opts["workers"])
        return result, catalog.item_count

    world, specs = _world(opts)
    n = world.catalog.item_count
    grid = sorted(set(opts["k_grid"] or default_k_grid(n)) | {k for k in extra if k <= n})
    result = synthetic_family_result(world, specs, opts["nbar"], grid, kbar_grid, opts["seed"], workers=opts["workers"])
    return result, n


def _emit_curves(curves, config: RunConfig) -> None:
    if config.out and config.format == "csv":
        write_curves(curves, config.out, config)
    else:
        _emit(curves[0] if len(curves) == 1 else curves, config)


@cli.command()
@click.argument("mode", type=click.Choice(["nbar", "kbar", "contrast"]))
@config_option
@world_options
@click.option("--nbar-values", type=IntList(), default="20,40,80", show_default=True, help="nbar mode.")
@click.option("--kbar-values", type=IntList(), default="1,3,5", show_default=True, help="kbar and contrast modes.")
@click.option("--kbar", type=click.IntRange(min=1), default=5, show_default=True, help="Fixed K̄ (nbar mode).")
@click.option("--nbar", type=click.IntRange(min=1), default=None, help="Fixed N̄ (kbar: 80, contrast: 20).")
@click.option("--k-grid", type=IntList(), default=None)
@output_options
def sweep(**opts):
    """k_max across N̄ (K̄ fixed), across K̄ (N̄ fixed), or URE against the traditional scheme."""
    opts = _with_config(click.get_current_context(), opts)
    mode = opts["mode"]
    nbar = opts["nbar"] or (80 if mode == "kbar" else 20)
    config = RunConfig(
        subcommand="sweep",
        mode=mode,
        kbar=opts["kbar"] if mode == "nbar" else None,
        nbar=nbar if mode != "nbar" else None,
        seed=opts["seed"],
        out=opts["out"],
        format=opts["format"],
        params=_world_params(opts, *(("nbar_values",) if mode == "nbar" else ("kbar_values",)), "k_grid"),
    )

    with log_run("sweep", mode=mode, seed=opts["seed"]):
        world, specs = _world(opts)
        grid = opts["k_grid"] or default_k_grid(world.catalog.item_count)
        if mode == "nbar":
            curves = nbar_sweep(world, specs, opts["nbar_values"], opts["kbar"], opts["seed"], grid, opts["workers"])
        elif mode == "kbar":
            curves = kbar_sweep(world, specs, nbar, opts["kbar_values"], opts["seed"], grid, opts["workers"])
        else:
            family = synthetic_family_result(
                world, specs, nbar, grid, opts["kbar_values"], opts["seed"], workers=opts["workers"]
            )
            curves = scheme_contrast(family, opts["kbar_values"], grid)
        _emit_curves(curves, config)


@cli.command()
@click.option("--rand", type=EXISTING_FILE, required=True)
@click.option("--full", type=EXISTING_FILE, default=None, help="Adds gold Recall@K and makes it the reference order.")
@click.option("--predictions", type=EXISTING_FILE, multiple=True, required=True, help="One file per model.")
@click.option("--k", type=click.IntRange(min=1), required=True)
@click.option("--kbar", type=click.IntRange(min=1), required=True)
@click.option("--skip-policy", type=SKIP_POLICIES, default="skip", show_default=True)
@output_options
def compare(**opts):
    """Per-model metrics under every scheme, model order and Kendall τ between orders."""
    config = RunConfig(
        subcommand="compare",
        inputs={k: v for k, v in (("full", opts["full"]), ("rand", opts["rand"])) if v},
        k=opts["k"],
        kbar=opts["kbar"],
        out=opts["out"],
        format=opts["format"],
        skip_policy=opts["skip_policy"],
        params={"predictions": list(opts["predictions"])},
    )
    with log_run("compare", k=opts["k"], kbar=opts["kbar"], models=len(opts["predictions"])):
        family, users, items = read_family(list(opts["predictions"]))
        catalog = Catalog(len(items))
        rand = read_exposure_csv(opts["rand"], ExposureKind.RANDOM, item_map=items, user_map=users).exposures
        full = None
        if opts["full"]:
            full = read_exposure_csv(opts["full"], ExposureKind.FULL, item_map=items, user_map=users).exposures
        table = compare_models(family, rand, catalog, opts["k"], opts["kbar"], full, config.skip_policy)
        _emit(table, config)


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI; exit 0 success, 1 usage error, 2 data error, 3 failed verification."""
    try:
        code = cli.main(args=argv, prog_name="ure-eval", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except EvalError as e:
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    except ValueError as e:
        # pydantic validation and malformed environment values
        click.echo(f"error: {e}", err=True)
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(cli_main())
