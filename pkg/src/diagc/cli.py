"""Command-line entry point: ``diagc train|sweep|ablate|synth|verify|eval|aggregate``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 oracle failure.
"""

import functools
import glob
import json
import logging
import os
import sys

import click
import yaml

from .estimator import VARIANTS, NumericalError
from .graphdata import (
    DataFormatError,
    SyntheticSpec,
    generate_synthetic,
    load_labels,
    save_dataset,
)
from .metrics import METRIC_NAMES, MetricsReport, aggregate, evaluate
from .runs import ALPHA_GRID, ConfigError, cmd_ablate, cmd_sweep, cmd_train, load_config, write_table

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_ORACLE = 0, 1, 2, 3


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (ConfigError, DataFormatError, ValueError, OSError, yaml.YAMLError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INVALID)

    return wrapper


def _config_options(fn):
    fn = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                      help="Override a config field, e.g. --set alpha=0.1 --set repeat=10.")(fn)
    fn = click.option("--out", "output_dir", default=None, help="Output directory.")(fn)
    fn = click.option("--repeat", type=int, default=None, help="Number of seeds to run.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Base seed.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Parallel worker processes for repeats.")(fn)
    fn = click.argument("config", type=click.Path(dir_okay=False))(fn)
    return fn


def _load(config, overrides, output_dir, repeat, seed, jobs):
    extra = list(overrides)
    for key, value in (("output_dir", output_dir), ("repeat", repeat), ("seed", seed), ("jobs", jobs)):
        if value is not None:
            extra.append(f"{key}={value}")
    if not os.path.isfile(config):
        raise ConfigError(f"config file not found: {config}")
    return load_config(config, extra)


def _print_rows(rows, columns):
    click.echo("\t".join(columns))
    for r in rows:
        click.echo("\t".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in columns))


@click.group()
@click.option("-v", "--verbose", count=True, help="Log training progress.")
def main(verbose):
    """Multi-view attributed graph clustering."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@_config_options
@_guard
def train(config, overrides, output_dir, repeat, seed, jobs):
    """Train on the configured dataset; writes checkpoints, histories and reports."""
    cfg = _load(config, overrides, output_dir, repeat, seed, jobs)
    agg = cmd_train(cfg)
    if agg is None:
        click.echo(f"trained; no labels, predictions written to {cfg['output_dir']}")
    else:
        _print_rows([agg], ("variant", "runs", *METRIC_NAMES))


@main.command()
@_config_options
@click.option("--alphas", default=",".join(f"{a:g}" for a in ALPHA_GRID), show_default=True,
              help="Comma-separated KL weights.")
@_guard
def sweep(config, overrides, output_dir, repeat, seed, jobs, alphas):
    """Repeat training across KL weights."""
    cfg = _load(config, overrides, output_dir, repeat, seed, jobs)
    values = [float(a) for a in alphas.split(",") if a.strip()]
    rows, spread = cmd_sweep(cfg, values)
    _print_rows(rows, ("alpha", "runs", *METRIC_NAMES))
    click.echo("spread\t" + "\t".join(f"{m}={spread[m]:.4f}" for m in METRIC_NAMES))


@main.command()
@_config_options
@click.option("--variants", default=None, help=f"Comma-separated subset of {','.join(VARIANTS)}.")
@_guard
def ablate(config, overrides, output_dir, repeat, seed, jobs, variants):
    """Train every ablation variant and tabulate the metrics."""
    cfg = _load(config, overrides, output_dir, repeat, seed, jobs)
    chosen = [v.strip() for v in variants.split(",")] if variants else None
    rows = cmd_ablate(cfg, chosen)
    _print_rows(rows, ("variant", *METRIC_NAMES))


@main.command()
@click.option("--n", type=int, default=300, show_default=True)
@click.option("--c", type=int, default=3, show_default=True)
@click.option("--views", "n_views", type=int, default=2, show_default=True)
@click.option("--p-in", type=float, multiple=True, default=(0.2,), show_default=True,
              help="Within-cluster edge probability; repeat once per view for per-view values.")
@click.option("--p-out", type=float, multiple=True, default=(0.01,), show_default=True)
@click.option("--dim", "feature_dim", type=int, default=30, show_default=True)
@click.option("--signal", "feature_signal", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--prefix", default="graph", show_default=True)
@click.option("--out", "output_dir", required=True, help="Directory for the dataset files.")
@_guard
def synth(n, c, n_views, p_in, p_out, feature_dim, feature_signal, seed, prefix, output_dir):
    """Write a planted-partition multi-view dataset plus its manifest."""
    spec = SyntheticSpec(
        n=n, c=c, n_views=n_views,
        p_in=p_in[0] if len(p_in) == 1 else list(p_in),
        p_out=p_out[0] if len(p_out) == 1 else list(p_out),
        feature_dim=feature_dim, feature_signal=feature_signal, seed=seed,
    )
    graph = generate_synthetic(spec)
    path = save_dataset(output_dir, graph, spec.c, prefix=prefix)
    click.echo(path)


@main.command()
def verify():
    """Run the oracle suites; exit 3 if any fails."""
    from .verify import run_all

    results = run_all()
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"[{status}] {r.name}: {r.detail} ({r.seconds:.1f}s)")
    if not all(r.passed for r in results):
        sys.exit(EXIT_ORACLE)


@main.command("eval")
@click.argument("true_labels", type=click.Path(exists=True, dir_okay=False))
@click.argument("pred_labels", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output", default=None, help="Write the report JSON here.")
@_guard
def eval_cmd(true_labels, pred_labels, output):
    """Score a predicted label file against ground truth."""
    report = evaluate(load_labels(true_labels), load_labels(pred_labels))
    if output:
        report.save(output)
    click.echo(json.dumps({m: getattr(report, m) for m in METRIC_NAMES}, indent=2))


@main.command("aggregate")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@_guard
def aggregate_cmd(directory):
    """Mean metrics over every report.json below DIRECTORY, grouped by variant."""
    paths = sorted(glob.glob(os.path.join(directory, "**", "report.json"), recursive=True))
    if not paths:
        raise ConfigError(f"no report.json files under {directory}")
    groups = {}
    for p in paths:
        r = MetricsReport.load(p)
        groups.setdefault(r.variant, []).append(r)
    rows = [aggregate(rs) for rs in groups.values()]
    write_table(os.path.join(directory, "aggregate_all.tsv"), rows, ("variant", "runs", *METRIC_NAMES))
    _print_rows(rows, ("variant", "runs", *METRIC_NAMES))


if __name__ == "__main__":
    main()
