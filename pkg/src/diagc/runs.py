"""Run configuration files and the train / sweep / ablate drivers behind the CLI.

A run config is YAML::

    dataset: data/acm.yaml          # a dataset manifest, or
    synthetic: {n: 300, c: 3}       # a SyntheticSpec (exactly one of the two)
    output_dir: runs/acm
    repeat: 10
    seed: 0
    jobs: 1
    model: {alpha: 0.01, max_iter: 400}

Keys under ``model`` are DIAGC constructor parameters. Values given with
``--set key=value`` on the command line override the file, which overrides
the defaults.
"""

import copy
import datetime
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .estimator import DIAGC, VARIANTS, _jsonable, sub_seed
from .graphdata import SyntheticSpec, generate_synthetic, load_dataset, save_labels
from .metrics import METRIC_NAMES, aggregate, evaluate

ALPHA_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0)
TOP_LEVEL_KEYS = ("dataset", "synthetic", "output_dir", "repeat", "seed", "jobs", "model", "variants")


class ConfigError(ValueError):
    pass


def default_config():
    return {
        "output_dir": "runs/default",
        "repeat": 1,
        "seed": 0,
        "jobs": 1,
        "model": {},
    }


def _model_param_names():
    return set(DIAGC().get_params())


def apply_override(cfg, assignment):
    """Apply one ``key=value`` override; bare model parameter names go under ``model``."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.strip().split(".")
    if len(parts) == 1 and parts[0] in _model_param_names():
        parts = ["model", parts[0]]
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a mapping")
    node[parts[-1]] = value
    return cfg


def load_config(path=None, overrides=()):
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = os.path.dirname(os.path.abspath(path))
        if isinstance(doc.get("dataset"), str) and not os.path.isabs(doc["dataset"]):
            doc["dataset"] = os.path.join(base, doc["dataset"])
        for k, v in doc.items():
            if k == "model":
                cfg["model"].update(v or {})
            else:
                cfg[k] = v
    for o in overrides:
        apply_override(cfg, o)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    unknown = set(cfg) - set(TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    has_ds, has_syn = cfg.get("dataset") is not None, cfg.get("synthetic") is not None
    if has_ds == has_syn:
        raise ConfigError("config needs exactly one of 'dataset' or 'synthetic'")
    if has_ds and not os.path.isfile(cfg["dataset"]):
        raise ConfigError(f"dataset manifest not found: {cfg['dataset']}")
    if int(cfg.get("repeat", 1)) < 1:
        raise ConfigError("repeat must be >= 1")
    bad = set(cfg.get("model") or {}) - _model_param_names()
    if bad:
        raise ConfigError(f"unknown model parameters: {sorted(bad)}")
    variant = (cfg.get("model") or {}).get("ablation", "full")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    for v in cfg.get("variants") or ():
        if v not in VARIANTS:
            raise ConfigError(f"unknown ablation variant {v!r}")
    if has_syn:
        try:
            SyntheticSpec(**_synthetic_kwargs(cfg)).validate()
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from None
    return cfg


def _synthetic_kwargs(cfg):
    kw = dict(cfg["synthetic"])
    kw.setdefault("seed", sub_seed(cfg.get("seed", 0), "synth"))
    return kw


def load_graph(cfg):
    if cfg.get("dataset"):
        graph, c = load_dataset(cfg["dataset"])
    else:
        spec = SyntheticSpec(**_synthetic_kwargs(cfg))
        graph, c = generate_synthetic(spec), spec.c
    return graph, c


def _model_params(cfg, c, seed, **extra):
    params = dict(cfg.get("model") or {})
    if c is not None:
        params.setdefault("n_clusters", c)
    params["random_state"] = seed
    params.update(extra)
    return params


def _dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _single_run(args):
    graph, params, run_dir, variant = args
    os.makedirs(run_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    model = DIAGC(**params).fit(graph)
    model.save_checkpoint(os.path.join(run_dir, "checkpoint.json"))
    model.history_.write_table(os.path.join(run_dir, "history.tsv"))
    save_labels(os.path.join(run_dir, "labels.txt"), model.labels_)
    report = None
    if graph.labels is not None:
        notes = {"alpha_effective": model.effective_alpha}
        report = evaluate(
            graph.labels, model.labels_, seed=model.random_state, variant=model.ablation,
            config=_jsonable(model.get_params()), notes=notes,
        )
        report.save(os.path.join(run_dir, "report.json"))
    hist = model.history_
    _dump_json(
        os.path.join(run_dir, "meta.json"),
        {
            "started": started,
            "seconds": hist.records[-1]["seconds"] if len(hist) else 0.0,
            "initial_loss": hist.records[0]["L"],
            "final_loss": hist.records[-1]["L"],
        },
    )
    return report


def run_repeats(cfg, graph, c, out_dir, variant=None, **extra):
    """Train ``repeat`` seeds into ``out_dir/run_XX``; returns the list of reports."""
    repeat, seed = int(cfg.get("repeat", 1)), int(cfg.get("seed", 0))
    if variant is not None:
        extra["ablation"] = variant
    jobs = []
    for r in range(repeat):
        params = _model_params(cfg, c, seed + r, **extra)
        jobs.append((graph, params, os.path.join(out_dir, f"run_{r:02d}"), variant))
    n_workers = int(cfg.get("jobs", 1))
    if n_workers > 1 and repeat > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            reports = list(pool.map(_single_run, jobs))
    else:
        reports = [_single_run(j) for j in jobs]
    reports = [r for r in reports if r is not None]
    if reports:
        agg = aggregate(reports)
        _dump_json(os.path.join(out_dir, "aggregate.json"), agg)
        write_table(os.path.join(out_dir, "aggregate.tsv"), [agg], ("variant", "runs", *METRIC_NAMES))
    return reports


def write_table(path, rows, columns, delimiter="\t"):
    with open(path, "w") as fh:
        fh.write(delimiter.join(columns) + "\n")
        for row in rows:
            fh.write(delimiter.join(_fmt(row[c]) for c in columns) + "\n")


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _save_config(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        yaml.safe_dump(copy.deepcopy(cfg), fh, sort_keys=True)


def cmd_train(cfg):
    graph, c = load_graph(cfg)
    out = cfg["output_dir"]
    _save_config(cfg, out)
    reports = run_repeats(cfg, graph, c, out)
    return aggregate(reports) if reports else None


def cmd_sweep(cfg, alphas=ALPHA_GRID):
    alphas = list(alphas)
    if not alphas:
        raise ConfigError("empty alpha list")
    graph, c = load_graph(cfg)
    if graph.labels is None:
        raise ConfigError("sweep needs a labelled dataset")
    out = cfg["output_dir"]
    _save_config(cfg, out)
    rows = []
    for a in alphas:
        reports = run_repeats(cfg, graph, c, os.path.join(out, f"alpha_{a:g}"), alpha=float(a))
        rows.append({"alpha": float(a), **aggregate(reports)})
    cols = ("alpha", "runs", *METRIC_NAMES)
    write_table(os.path.join(out, "sweep.tsv"), rows, cols)
    spread = {m: float(np.ptp([r[m] for r in rows])) for m in METRIC_NAMES}
    _dump_json(os.path.join(out, "sweep.json"), {"rows": rows, "spread": spread})
    return rows, spread


def cmd_ablate(cfg, variants=None):
    variants = list(variants or cfg.get("variants") or VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown ablation variant {v!r}")
    graph, c = load_graph(cfg)
    if graph.labels is None:
        raise ConfigError("ablation needs a labelled dataset")
    out = cfg["output_dir"]
    _save_config(cfg, out)
    rows = []
    for v in variants:
        reports = run_repeats(cfg, graph, c, os.path.join(out, v), variant=v)
        rows.append(aggregate(reports))
    write_table(os.path.join(out, "ablation.tsv"), rows, ("variant", *METRIC_NAMES))
    _dump_json(os.path.join(out, "ablation.json"), {"rows": rows})
    return rows
