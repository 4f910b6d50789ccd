"""``qdetect`` command line: poison, detect, baselines, evaluate, bench-sampler,
gradcheck and replay.

Every run writes ``results.json`` (deterministic, no timing), one or more
CSV files and ``manifest.json`` (config hash, package versions, wall time,
file digests) into the output directory.  Nothing is written if the run
fails, and files written before an I/O error are removed again.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
import tempfile
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import attacks
from .attacks import AttackError, PoisonedDataset
from .config import ConfigError, ExperimentConfig, load_config, with_output
from .data import DataError, export, ingest, synth_split
from .domain_model import (ClassifierParams, finite_difference_grad, init_classifier,
                           weighted_loss_grad)
from .pipeline import (SelectionError, SelectionResult, baseline_dcm, baseline_loss_scan,
                       baseline_random, retrain_eval, run_q_detection)
from .qubo import random_ising
from .samplers import SamplerConfig, exhaustive_solve, sa_sample

log = logging.getLogger("qdetection")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
RESULTS, MANIFEST = "results.json", "manifest.json"


# ---------------------------------------------------------------- helpers

def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _selection_csv(d: PoisonedDataset, result: SelectionResult) -> str:
    chosen = np.zeros(len(d), dtype=bool)
    chosen[result.selected] = True
    rows = ([i, repr(float(w)), int(f), int(s)]
            for i, (w, f, s) in enumerate(zip(result.weights, d.flags, chosen)))
    return _csv(["sample_index", "weight", "flag", "selected"], rows)


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("qdetection", "numpy", "scipy", "numba", "scikit-learn"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_outputs(out_dir: Path, files: dict[str, str | bytes]) -> None:
    """Write all files or none: anything written before a failure is removed."""
    created_dir = not out_dir.exists()
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, content in files.items():
            path = out_dir / name
            written.append(path)
            if isinstance(content, bytes):
                path.write_bytes(content)
            else:
                path.write_text(content)
    except OSError:
        for path in written:
            path.unlink(missing_ok=True)
        if created_dir and out_dir.exists() and not any(out_dir.iterdir()):
            out_dir.rmdir()
        raise


# ------------------------------------------------------------ data set-up

def _load(cfg: ExperimentConfig):
    """Clean training set and optional test set."""
    src = cfg.dataset
    if src.synthetic is not None:
        return synth_split(src.synthetic_spec(cfg.seed))
    train = ingest(src.path, src.format)
    test = ingest(src.test_path, src.format) if src.test_path else None
    return train, test


def _poison(cfg: ExperimentConfig, d: PoisonedDataset) -> PoisonedDataset:
    a = cfg.attack
    if a.type == "none":
        return d
    if a.type == "label_flip":
        return attacks.flip_labels_targeted(d, a.source_class, a.target_class, a.ratio, cfg.seed)
    if a.type == "badnets":
        return attacks.badnets(d, a.trigger_spec(), a.target_class, a.ratio, cfg.seed)
    return attacks.narcissus_like(d, a.trigger_spec(), a.target_class, a.ratio, cfg.seed)


def _poisoned(cfg):
    train, test = _load(cfg)
    return _poison(cfg, train), test


def _baselines(cfg, d) -> list[SelectionResult]:
    n = cfg.detection.subset_size
    out = []
    if cfg.baselines["random"]:
        out.append(baseline_random(d, n, cfg.seed))
    if cfg.baselines["loss_scan"]:
        out.append(baseline_loss_scan(d, n, seed=cfg.seed))
    if cfg.baselines["dcm"]:
        out.append(baseline_dcm(d, n))
    return out


def _summary(result: SelectionResult) -> dict:
    return {"cr": result.cr, "ncr": result.ncr, "cr_rand": result.cr_rand,
            "ncr_applicable": result.ncr_applicable}


# --------------------------------------------------------------- commands

def cmd_poison(cfg, args):
    d, test = _poisoned(cfg)
    ext = args.format
    files = {}

    def encode(ds, name):
        path = export(ds, Path(args._scratch) / name, ext)
        files[name] = path.read_bytes()

    encode(d, f"dataset.{ext}")
    if test is not None:
        encode(test, f"test.{ext}")
    results = {"command": "poison", "config": cfg.to_dict(with_output=False),
               "n": len(d), "n_poisoned": int(d.flags.sum()),
               "poisoned_indices": [int(i) for i in np.flatnonzero(d.flags)],
               "attack": d.meta.get("attack"), "format": ext}
    return results, files


def cmd_detect(cfg, args):
    d, _ = _poisoned(cfg)
    result = run_q_detection(d, cfg.detection)
    results = {"command": "detect", "config": cfg.to_dict(with_output=False),
               **result.to_dict(), "qwan": result.qwan.to_dict(),
               "classifier_sha256": result.classifier.digest()}
    return results, {"selection.csv": _selection_csv(d, result)}


def cmd_baselines(cfg, args):
    d, _ = _poisoned(cfg)
    found = _baselines(cfg, d)
    if not found:
        raise ConfigError("baselines: every baseline is disabled")
    results = {"command": "baselines", "config": cfg.to_dict(with_output=False),
               "baselines": {r.method: r.to_dict() for r in found}}
    files = {f"selection_{r.method}.csv": _selection_csv(d, r) for r in found}
    return results, files


def cmd_evaluate(cfg, args):
    d, test = _poisoned(cfg)
    if test is None:
        raise ConfigError("evaluate needs a test set: set dataset.synthetic.test_n or "
                          "dataset.test_path")
    target = cfg.retrain.target_class
    if target is None and cfg.attack.type != "none":
        target = cfg.attack.target_class
    rcfg = replace(cfg.retrain, target_class=target)
    testset = (test.features, test.labels)
    q = run_q_detection(d, cfg.detection)
    methods = [q] + _baselines(cfg, d)
    if not cfg.baselines["random"]:
        methods.append(baseline_random(d, cfg.detection.subset_size, cfg.seed))
    table = {}
    for r in methods:
        table[r.method] = {**_summary(r), **retrain_eval(d, r.selected, testset, rcfg)}
    table["full"] = retrain_eval(d, np.arange(len(d)), testset, rcfg)
    rand_acc = table["random"]["overall_acc"]
    for name, row in table.items():
        row["gain_vs_random"] = row["overall_acc"] - rand_acc
    results = {"command": "evaluate", "config": cfg.to_dict(with_output=False),
               "evaluation": table, "diagnostics": q.diagnostics}
    rows = ([name, row.get("cr"), row.get("ncr"), row["overall_acc"], row["target_acc"],
             row["gain_vs_random"]] for name, row in table.items())
    files = {"evaluation.csv": _csv(["method", "cr", "ncr", "overall_acc", "target_acc",
                                     "gain_vs_random"], rows),
             "selection.csv": _selection_csv(d, q)}
    return results, files


def bench_sampler(seed: int, instances: int = 100, n: int = 16,
                  sampler: SamplerConfig | None = None) -> list[dict]:
    """Exhaustive versus simulated-annealing minima on random instances."""
    base = sampler or SamplerConfig()
    rows = []
    for k in range(instances):
        problem = random_ising(n, seed=[seed, k])
        exact = exhaustive_solve(problem).best().energy
        cfg = SamplerConfig(base.num_reads, base.sweeps, base.beta_start, base.beta_end,
                            seed=seed * 1_000_003 + k)
        found = sa_sample(problem, cfg).best().energy
        rows.append({"instance": k, "exhaustive_min": exact, "sa_min": found,
                     "hit": bool(abs(found - exact) <= 1e-9 * max(1.0, abs(exact)))})
    return rows


def cmd_bench_sampler(cfg, args):
    rows = bench_sampler(cfg.seed, args.instances, args.spins)
    hits = sum(r["hit"] for r in rows)
    results = {"command": "bench-sampler", "seed": cfg.seed, "spins": args.spins,
               "instances": len(rows), "hits": hits, "rows": rows}
    table = _csv(["instance", "exhaustive_min", "sa_min", "hit"],
                 ([r["instance"], repr(r["exhaustive_min"]), repr(r["sa_min"]), int(r["hit"])]
                  for r in rows))
    return results, {"bench.csv": table}


def gradcheck_rows(seed: int, eps: float = 1e-6) -> list[dict]:
    """Analytic versus central-difference gradients on small random instances."""
    rng = np.random.default_rng([seed, 99])
    rows = []
    for variant, hidden in (("softmax", None), ("hidden", 4)):
        X = rng.uniform(0, 1, (7, 5))
        y = rng.integers(0, 3, 7)
        w = rng.uniform(0, 1, 7)
        p = init_classifier(5, 3, hidden, seed=[seed, 5])
        p = ClassifierParams(*[a + rng.normal(0, 0.3, a.shape) for a in p.arrays()])
        names = ["w", "b", "v", "c"]
        for name, ga, gn in zip(names, weighted_loss_grad(p, X, y, w),
                                finite_difference_grad(p, X, y, w, eps)):
            for idx in np.ndindex(ga.shape):
                a, nm = float(ga[idx]), float(gn[idx])
                rel = abs(a - nm) / max(abs(a), abs(nm), 1e-8)
                rows.append({"model": variant, "param": name, "index": list(idx),
                             "analytic": a, "numeric": nm, "rel_err": rel})
    return rows


def cmd_gradcheck(cfg, args):
    from .estimators import QuantumWeightAssigner

    rows = gradcheck_rows(cfg.seed)
    train = np.arange(20) * 0.05 + 0.025
    qwa = QuantumWeightAssigner(random_state=cfg.seed).fit(train, np.where(train > 0.5, 1, -1))
    curve = qwa.loss_curve_
    window = min(50, len(curve))
    moving = np.convolve(curve, np.ones(window) / window, "valid")
    grid = np.linspace(0, 1, 21)
    acc = float(np.mean(qwa.predict(grid) == np.where(grid > 0.5, 1, -1)))
    worst = max(r["rel_err"] for r in rows)
    results = {"command": "gradcheck", "seed": cfg.seed,
               "domain_model": {"max_rel_err": worst, "coordinates": len(rows),
                                "passed": worst <= 1e-4},
               "qwan": {"grid_accuracy": acc, "final_mse": float(curve[-1]),
                        "moving_average_non_increasing": bool(np.all(np.diff(moving) <= 1e-12)),
                        "loss_curve": [float(v) for v in curve]}}
    files = {
        "gradcheck.csv": _csv(["model", "param", "index", "analytic", "numeric", "rel_err"],
                              ([r["model"], r["param"], ":".join(map(str, r["index"])),
                                repr(r["analytic"]), repr(r["numeric"]), repr(r["rel_err"])]
                               for r in rows)),
        "qwan_curve.csv": _csv(["step", "mse"], ((i, repr(float(v)))
                                                 for i, v in enumerate(curve))),
    }
    return results, files


COMMANDS = {
    "poison": cmd_poison,
    "detect": cmd_detect,
    "baselines": cmd_baselines,
    "evaluate": cmd_evaluate,
    "bench-sampler": cmd_bench_sampler,
    "gradcheck": cmd_gradcheck,
}
NEEDS_DATA = {"poison", "detect", "baselines", "evaluate"}


# ------------------------------------------------------------------ runner

def execute(command: str, cfg: ExperimentConfig, args) -> dict:
    """Run one command and commit its outputs; returns the manifest."""
    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as scratch:
        args._scratch = scratch
        results, files = COMMANDS[command](cfg, args)
    results_text = _json(results)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "format": args.format,
        "options": {"instances": args.instances, "spins": args.spins},
        "versions": _versions(),
        "files": {RESULTS: _sha256(results_text.encode())}
        | {name: _sha256(c if isinstance(c, bytes) else c.encode()) for name, c in files.items()},
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    _write_outputs(Path(cfg.output_dir), {**files, RESULTS: results_text,
                                          MANIFEST: _json(manifest)})
    return manifest


def _default_config(args) -> ExperimentConfig:
    return ExperimentConfig.from_dict({"dataset": {"synthetic": {}},
                                       "output_dir": args.out or "runs/out"})


def _resolve(args) -> tuple[str, ExperimentConfig]:
    if args.command == "replay":
        manifest = json.loads(Path(args.manifest).read_text())
        try:
            cfg = ExperimentConfig.from_dict(manifest["config"])
        except KeyError:
            raise ConfigError(f"{args.manifest}: not a run manifest") from None
        args.format = manifest.get("format", "csv")
        opts = manifest.get("options", {})
        args.instances = opts.get("instances", args.instances)
        args.spins = opts.get("spins", args.spins)
        out = args.out or str(Path(args.manifest).parent / "replay")
        return manifest["command"], with_output(cfg, out)
    if args.config is None:
        if args.command in NEEDS_DATA:
            raise ConfigError(f"{args.command} needs --config")
        cfg = _default_config(args)
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = with_output(cfg, args.out)
    return args.command, cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the config's global seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--format", choices=("csv", "qds1"), default="csv",
                        help="dataset format written by 'poison'")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    common.add_argument("--instances", type=int, default=100,
                        help="bench-sampler: number of random instances")
    common.add_argument("--spins", type=int, default=16, help="bench-sampler: spins per instance")

    parser = argparse.ArgumentParser(prog="qdetect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "poison": "inject the configured attack and write the dataset",
        "detect": "run Q-Detection and write weights and the selected subset",
        "baselines": "run the random, loss-scan and class-mean-distance selectors",
        "evaluate": "retrain on each selected subset and score on the clean test set",
        "bench-sampler": "compare simulated annealing with exhaustive search",
        "gradcheck": "finite-difference gradient check and Q-WAN learning curve",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    replay = sub.add_parser("replay", parents=[common],
                            help="re-run a recorded manifest and compare results")
    replay.add_argument("manifest", help="path to a manifest.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        command, cfg = _resolve(args)
        manifest = execute(command, cfg, args)
        if args.command == "replay":
            recorded = json.loads(Path(args.manifest).read_text())["files"][RESULTS]
            same = recorded == manifest["files"][RESULTS]
            if not args.quiet:
                print(f"replay of {command}: results {'identical' if same else 'DIFFER'}")
            return EXIT_OK if same else EXIT_RUNTIME
        if not args.quiet:
            results = json.loads((Path(cfg.output_dir) / RESULTS).read_text())
            headline = {k: results[k] for k in ("cr", "ncr", "hits") if k in results}
            print(f"{command}: wrote {cfg.output_dir} {json.dumps(headline)}")
        return EXIT_OK
    except (ConfigError, SelectionError, AttackError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
