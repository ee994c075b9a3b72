"""Command line front end: ``kmeans``, ``gmm``, ``gen`` and ``report``.

Every run subcommand accepts ``--config FILE`` (YAML or JSON, same keys as
the flags with dashes turned into underscores, see :mod:`.bench`); flags
given on the command line override the file.

With ``--out DIR`` the run writes

* ``report.json``: aggregates without timings, byte-identical across runs
  with the same config and seed;
* ``timings.json``: wall-clock aggregates;
* ``runs.jsonl``: one run record per line, timings included;
* ``summary.csv``: one row per (dataset, method) for plotting;
* ``config.json``: the resolved config, read back by ``report``.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bench, datagen
from .dataset import save_csv
from .gmm import Mixture
from .seeding import pool_size

_RUN_KEYS = ("k", "methods", "repeats", "pool_rule", "seed", "n_jobs", "tol", "max_iter",
             "n", "noise")


def _read_structured(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def _pool_rule(value):
    try:
        pool_size(value, 1)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def _comma_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _groups(value):
    out = {}
    for item in _comma_list(value):
        ds, sep, group = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected DATASET=GROUP, got {item!r}")
        out[ds] = group
    return out


def _add_run_flags(p, gmm=False):
    p.add_argument("--config", help="YAML or JSON config file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", nargs="+", metavar="CSV",
                     help="dataset files; a sidecar NAME.mixture.json supplies k")
    src.add_argument("--gen", metavar="SPEC",
                     help="'grid', 'default' or a model spec file to sample datasets from")
    p.add_argument("--k", type=int, help="number of clusters / components")
    p.add_argument("--methods", type=_comma_list, help="comma-separated seeding presets")
    p.add_argument("--repeats", type=int)
    p.add_argument("--pool-rule", type=_pool_rule, help="log, sqrt, linear or fixed:N")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--n", type=int, help="points per generated dataset")
    p.add_argument("--noise", type=int, help="uniform noise points per generated dataset")
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--out", help="output directory (default: print report to stdout)")
    if gmm:
        p.add_argument("--groups", type=_groups, help="DATASET=GROUP pairs, comma-separated")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="multipass-bench", description="Multipass seeding benchmarks."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("kmeans", help="seed + Lloyd benchmark"))
    _add_run_flags(sub.add_parser("gmm", help="seed + EM benchmark"), gmm=True)

    g = sub.add_parser("gen", help="write generated datasets as CSV + mixture files")
    g.add_argument("--config", help="YAML or JSON config file")
    g.add_argument("--gen", metavar="SPEC", help="'grid', 'default' or a model spec file")
    g.add_argument("--k", type=int, help="components of the default model grid")
    g.add_argument("--d", type=int, help="dimension of the default model grid")
    g.add_argument("--n", type=int, help="points per dataset")
    g.add_argument("--noise", type=int, help="uniform noise points per dataset")
    g.add_argument("--datasets-per-model", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("report", help="re-aggregate stored run records")
    r.add_argument("runs", help="runs.jsonl file or a directory holding one")
    r.add_argument("--task", choices=("kmeans", "gmm"))
    r.add_argument("--groups", type=_groups)
    r.add_argument("--out", help="output directory (default: print report to stdout)")
    return parser


# --------------------------------------------------------------------------
# config assembly


def _resolve_paths(config, base):
    for entry in config.get("datasets", []) or []:
        if "path" in entry and not Path(entry["path"]).is_absolute():
            entry["path"] = str(base / entry["path"])
    return config


def _load_config(path):
    if path is None:
        return {}
    config = _read_structured(path) or {}
    if not isinstance(config, dict):
        raise SystemExit(f"config {path}: expected a mapping at top level")
    return _resolve_paths(config, Path(path).parent)


def _model_entries(source, k=None, d=None):
    """``(group, model)`` pairs for a ``--gen`` value."""
    if source == "grid":
        return [("grid", "grid")]
    if source == "default":
        groups = datagen.default_model_grid(k or 10, d or 2)
        return [(g, spec.to_dict()) for g, specs in groups.items() for spec in specs]
    data = _read_structured(source)
    if isinstance(data, dict) and "models" in data:
        data = data["models"]
    if isinstance(data, dict):
        data = [data]
    return _model_entries_from(data)


def _model_entries_from(models):
    out = []
    for item in models:
        if item == "grid":
            out.append(("grid", "grid"))
            continue
        item = dict(item)
        group = item.pop("group", "default")
        out.append((group, item.pop("model", item)))
    return out


def _generated_datasets(models, n, noise, per_model):
    entries = []
    for i, (group, model) in enumerate(models):
        k = 27 if model == "grid" else int(model.get("K", 10))
        for r in range(per_model):
            entries.append({
                "id": f"{group}-{i:03d}-{r:02d}",
                "model": model,
                "n": n,
                "noise": noise,
                "k": k,
                "group": group,
            })
    return entries


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.stem + ".mixture.json")


def _data_entries(paths, k):
    entries = []
    for p in paths:
        entry = {"id": Path(p).stem, "path": str(p)}
        side = _sidecar(p)
        if side.exists():
            # generated data keeps its native scale, as in the --gen path
            entry["normalize"] = False
            if k is None:
                entry["k"] = Mixture.from_json(side).n_components
        if k is not None:
            entry["k"] = k
        elif "k" not in entry:
            raise SystemExit(f"{p}: no sidecar mixture file, pass --k")
        entries.append(entry)
    return entries


def run_config(args, task):
    """Merge the config file with command-line flags."""
    config = _load_config(args.config)
    config["task"] = task
    for key in _RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if args.data:
        config["datasets"] = _data_entries(args.data, args.k)
    elif args.gen:
        config["datasets"] = _generated_datasets(
            _model_entries(args.gen, args.k), config.get("n", 2000), config.get("noise", 0),
            int(config.get("datasets_per_model", 1)),
        )
    if args.k is not None:
        for entry in config.get("datasets", []):
            entry["k"] = args.k
    if getattr(args, "groups", None):
        config["groups"] = dict(config.get("groups", {}) or {}, **args.groups)
    if not config.get("datasets"):
        raise SystemExit("no datasets: pass --data, --gen or a config with 'datasets'")
    if not config.get("methods"):
        raise SystemExit("no methods: pass --methods or list them in the config")
    return config


# --------------------------------------------------------------------------
# outputs


def _write_csv(path, rows):
    if not rows:
        return
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_outputs(report, records, out, config=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    timings = bench._jsonable(report.timings)
    (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    if records is not None:
        with (out / "runs.jsonl").open("w") as fh:
            for rec in records:
                fh.write(json.dumps(bench._jsonable(rec.to_dict()), sort_keys=True) + "\n")
    _write_csv(out / "summary.csv", report.to_csv_rows())
    if config is not None:
        (out / "config.json").write_text(
            json.dumps(bench._jsonable(config), indent=2, sort_keys=True) + "\n"
        )


def _emit(report, records, args, config=None):
    if args.out:
        write_outputs(report, records, args.out, config)
    else:
        sys.stdout.write(report.to_json() + "\n")


def cmd_run(args):
    config = run_config(args, args.command)
    runner = bench.run_kmeans_bench if args.command == "kmeans" else bench.run_gmm_bench
    report, records = runner(config, return_records=True)
    _emit(report, records, args, report.config)
    return 0


def cmd_gen(args):
    config = _load_config(args.config)
    for key in ("n", "noise", "seed", "datasets_per_model"):
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    source = args.gen or config.get("gen")
    if source is None and "models" not in config:
        raise SystemExit("nothing to generate: pass --gen or a config with 'models'")
    if source is not None:
        models = _model_entries(source, args.k, args.d)
    else:
        models = _model_entries_from(config["models"])
    master = int(config.get("seed", 0))
    entries = _generated_datasets(
        models, int(config.get("n", 2000)), int(config.get("noise", 0)),
        int(config.get("datasets_per_model", 1)),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for entry in entries:
        mix, X, labels = bench.generate_entry(entry, master)
        ds_id = entry["id"]
        save_csv(out / f"{ds_id}.csv", X)
        np.savetxt(out / f"{ds_id}.labels.csv", labels, fmt="%d")
        mix.to_json(out / f"{ds_id}.mixture.json")
        manifest.append({
            "id": ds_id,
            "path": f"{ds_id}.csv",
            "k": entry["k"],
            "group": entry["group"],
            "normalize": False,
        })
    (out / "manifest.json").write_text(
        json.dumps({"seed": master, "datasets": manifest}, indent=2) + "\n"
    )
    return 0


def cmd_report(args):
    path = Path(args.runs)
    runs = path / "runs.jsonl" if path.is_dir() else path
    records = [
        bench.RunRecord.from_dict(json.loads(line))
        for line in runs.read_text().splitlines()
        if line.strip()
    ]
    if not records:
        raise SystemExit(f"{runs}: no run records")
    config_path = runs.parent / "config.json"
    config = json.loads(config_path.read_text()) if config_path.exists() else None
    groups = bench._groups_of(config) if config and "datasets" in config else {}
    groups.update(args.groups or {})
    task = args.task or (config or {}).get("task")
    if task is None:
        raise SystemExit(f"{runs}: no config.json alongside, pass --task")
    report = bench.aggregate(records, task, groups, config)
    _emit(report, None, args)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"kmeans": cmd_run, "gmm": cmd_run, "gen": cmd_gen, "report": cmd_report}
    try:
        return handler[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
