"""``maneuver-graph`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Optional

from . import __version__
from .autodiff import CheckpointError
from .experiments import (
    LANDMARK_FRACTIONS,
    TRANSFER_EVAL_SEQUENCES,
    Splits,
    ablate_landmarks,
    ablate_model,
    evaluate,
    fit_model,
    transfer,
    transfer_eval_sets,
)
from .gradcheck import run_all
from .metrics import dumps, parse_classes
from .model import VARIANTS, ManeuverClassifier, TrainingDivergedError
from .scene_graph import DatasetFormatError, SequenceValidationError
from .traffic_sim import PRESETS, ConfigError, Dataset, WorldConfig, generate_dataset, preset, split_indices

MANIFEST_NAME = "runs.jsonl"
DEFAULT_OUT = "runs"

EXIT_OK = 0
EXIT_FAILED = 1  # the command ran but its contract was not met
EXIT_USAGE = 2

log = logging.getLogger("maneuver_graph")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers
def load_world_config(spec: Optional[str]) -> WorldConfig:
    """A preset name or a JSON file (optionally ``{"preset": name, ...overrides}``)."""
    if spec is None:
        return preset("apollo")
    if spec in PRESETS:
        return preset(spec)
    if not os.path.exists(spec):
        raise UsageError(f"--config {spec!r} is neither a preset ({', '.join(PRESETS)}) nor an existing file")
    return WorldConfig.from_json(spec)


def load_splits(args) -> tuple[Splits, dict]:
    """Splits from ``--dataset`` or, without it, the default dataset generated in memory."""
    if args.dataset:
        if not os.path.exists(args.dataset):
            raise UsageError(f"--dataset {args.dataset!r} does not exist (create it with `maneuver-graph generate`)")
        ds = Dataset.load(args.dataset)
        info = {"dataset": os.path.abspath(args.dataset), "world_config_hash": ds.manifest.get("config_hash")}
        return Splits.from_dataset(ds), info
    from .traffic_sim import generate_sequences

    config = load_world_config(args.config)
    seqs, primaries = generate_sequences(args.n_sequences, config, args.seed)
    idx = split_indices(primaries, args.seed)
    info = {"dataset": None, "generated": {"seed": args.seed, "n_sequences": args.n_sequences}, "world_config_hash": config.digest()}
    return Splits(*[[seqs[i] for i in idx[k]] for k in ("train", "val", "test")]), info


def out_dir(args) -> str:
    path = args.out or DEFAULT_OUT
    os.makedirs(path, exist_ok=True)
    return path


def write_json(path: str, blob) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(blob) + "\n")


def append_manifest(directory: str, entry: dict) -> str:
    """Append one run record; existing lines are never rewritten."""
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return path


def manifest_entry(command: str, started: float, **fields) -> dict:
    entry = {
        "command": command,
        "version": __version__,
        "config_hashes": fields.pop("config_hashes", {}),
        "seeds": fields.pop("seeds", []),
        "dataset": fields.pop("dataset", None),
        "checkpoint": fields.pop("checkpoint", None),
        "metrics": fields.pop("metrics", {}),
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    entry.update(fields)
    return entry


def emit(args, blob: dict, text: str) -> None:
    print(dumps(blob) if args.json else text)


def seed_list(args) -> list[int]:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    return [args.seed + i for i in range(args.seeds)]


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"could not parse fractions {text!r}") from None


def parse_variants(text: Optional[str], default=VARIANTS) -> list[str]:
    if not text:
        return list(default)
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in names if v not in VARIANTS]
    if bad:
        raise UsageError(f"unknown variant(s) {bad}; choose from {', '.join(VARIANTS)}")
    return names


# ----------------------------------------------------------------- commands
def cmd_generate(args) -> int:
    started = time.perf_counter()
    config = load_world_config(args.config)
    out = out_dir(args)
    manifest = generate_dataset(args.n_sequences, config, args.seed, out)
    summary = {
        "n_sequences": manifest["n_sequences"],
        "class_counts": manifest["class_counts"],
        "splits": {k: len(v) for k, v in manifest["splits"].items()},
        "config_hash": manifest["config_hash"],
    }
    append_manifest(
        out,
        manifest_entry("generate", started, config_hashes={"world": config.digest()}, seeds=[args.seed], dataset=os.path.abspath(out), metrics=summary),
    )
    text = f"wrote {manifest['n_sequences']} sequences to {out} (splits {summary['splits']}, config {summary['config_hash']})"
    emit(args, summary, text)
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.perf_counter()
    variant = parse_variants(args.variant, ["G+L+MA"])
    if len(variant) != 1:
        raise UsageError("train takes a single --variant")
    splits, info = load_splits(args)
    out = out_dir(args)
    clf = ManeuverClassifier(variant=variant[0], epochs=args.epochs, random_state=args.seed, verbose=args.verbose)
    clf.fit(splits.train, X_val=splits.val or None)
    ckpt = args.checkpoint or os.path.join(out, "model.json")
    clf.save(ckpt)
    report = evaluate(clf, splits.test) if splits.test else None
    blob = {
        "command": "train",
        "variant": variant[0],
        "seed": args.seed,
        "epochs": args.epochs,
        "training": {
            "initial_loss": clf.history_["initial_loss"],
            "loss": clf.history_["loss"],
            "val_accuracy": clf.history_["val_accuracy"],
            "best_epoch": clf.best_epoch_,
            "best_val_accuracy": clf.best_val_accuracy_,
        },
        "test": report.to_dict() if report else None,
    }
    write_json(os.path.join(out, "train_metrics.json"), blob)
    append_manifest(
        out,
        manifest_entry(
            "train",
            started,
            config_hashes={"world": info.get("world_config_hash"), "model": clf.config_.digest()},
            seeds=[args.seed],
            dataset=info["dataset"],
            checkpoint=os.path.abspath(ckpt),
            metrics={"test_accuracy": report.overall_accuracy if report else None, "best_val_accuracy": clf.best_val_accuracy_},
        ),
    )
    val = clf.history_["val_accuracy"]
    lines = []
    for i, loss in enumerate(clf.history_["loss"]):
        lines.append(f"epoch {i + 1:3d}  loss {loss:.4f}" + (f"  val {val[i]:.4f}" if i < len(val) else ""))
    lines.append(f"best epoch {clf.best_epoch_}; checkpoint {ckpt}")
    if report:
        lines += ["", report.to_text()]
    emit(args, blob, "\n".join(lines))
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.perf_counter()
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint")
    if not args.dataset:
        raise UsageError("eval needs --dataset")
    if not os.path.exists(args.checkpoint):
        raise UsageError(f"--checkpoint {args.checkpoint!r} does not exist")
    classes = parse_classes(args.classes)
    clf = ManeuverClassifier.load(args.checkpoint)
    splits, info = load_splits(args)
    X = {"train": splits.train, "val": splits.val, "test": splits.test}.get(args.split)
    if X is None:
        X = splits.train + splits.val + splits.test
    if not X:
        raise UsageError(f"split {args.split!r} of {args.dataset} is empty")
    report = evaluate(clf, X, classes)
    blob = report.to_dict()
    target = args.out if args.out and args.out.endswith(".json") else os.path.join(out_dir(args), "eval_metrics.json")
    os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
    write_json(target, blob)
    append_manifest(
        os.path.dirname(os.path.abspath(target)),
        manifest_entry(
            "eval",
            started,
            config_hashes={"world": info.get("world_config_hash"), "model": clf.config_.digest()},
            seeds=[clf.random_state],
            dataset=info["dataset"],
            checkpoint=os.path.abspath(args.checkpoint),
            metrics={"overall_accuracy": report.overall_accuracy, "classes": list(classes), "split": args.split},
        ),
    )
    emit(args, blob, report.to_text())
    return EXIT_OK


def _table_command(args, name: str, table, started: float, info: dict, seeds) -> int:
    out = out_dir(args)
    blob = table.to_dict()
    write_json(os.path.join(out, f"{name}.json"), blob)
    append_manifest(
        out,
        manifest_entry(
            name,
            started,
            config_hashes={"world": info.get("world_config_hash")},
            seeds=list(seeds),
            dataset=info.get("dataset"),
            metrics={"mean_accuracy": blob["mean_accuracy"], **({"retention": blob["retention"]} if "retention" in blob else {})},
        ),
    )
    emit(args, blob, table.to_text())
    return EXIT_OK


def cmd_ablate_landmarks(args) -> int:
    started = time.perf_counter()
    fractions = parse_floats(args.fractions)
    if not fractions or any(not 0.0 < f <= 1.0 for f in fractions):
        raise UsageError("--fractions must lie in (0, 1]")
    splits, info = load_splits(args)
    seeds = seed_list(args)
    table = ablate_landmarks(splits, fractions, seeds, args.epochs)
    return _table_command(args, "ablate_landmarks", table, started, info, seeds)


def cmd_ablate_model(args) -> int:
    started = time.perf_counter()
    variants = parse_variants(args.variant)
    splits, info = load_splits(args)
    seeds = seed_list(args)
    table = ablate_model(splits, variants, seeds, args.epochs)
    return _table_command(args, "ablate_model", table, started, info, seeds)


def cmd_transfer(args) -> int:
    started = time.perf_counter()
    splits, info = load_splits(args)
    names = [n.strip() for n in args.eval_presets.split(",") if n.strip()]
    for n in names:
        preset(n)
    seeds = seed_list(args)
    eval_sets = transfer_eval_sets(names, args.seed, args.eval_sequences)
    source = (Dataset.load(args.dataset).config.distribution_id if args.dataset else load_world_config(args.config).distribution_id)
    table = transfer(splits, eval_sets, seeds, args.epochs, source=source)
    return _table_command(args, "transfer", table, started, info, seeds)


def cmd_gradcheck(args) -> int:
    started = time.perf_counter()
    variants = parse_variants(args.variant)
    results = run_all(args.seed, variants)
    blob = {"command": "gradcheck", "seed": args.seed, "passed": all(r.passed for r in results), "variants": [r.to_dict() for r in results]}
    if args.out:
        out = out_dir(args)
        write_json(os.path.join(out, "gradcheck.json"), blob)
        append_manifest(out, manifest_entry("gradcheck", started, seeds=[args.seed], metrics={"passed": blob["passed"]}))
    emit(args, blob, "\n\n".join(r.to_text() for r in results))
    return EXIT_OK if blob["passed"] else EXIT_FAILED


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate-landmarks": cmd_ablate_landmarks,
    "ablate-model": cmd_ablate_model,
    "transfer": cmd_transfer,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="world preset name or JSON file (default: apollo)")
    common.add_argument("--dataset", help="dataset directory or .jsonl file")
    common.add_argument("--checkpoint", help="model checkpoint path")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--epochs", type=int, default=60, help="training epochs (default 60)")
    common.add_argument("--variant", help=f"model variant(s), comma separated: {', '.join(VARIANTS)}")
    common.add_argument("--classes", help="class subset, e.g. MVA,MTU,PRK (default: all six)")
    common.add_argument("--out", help=f"output directory (default ./{DEFAULT_OUT})")
    common.add_argument("--json", action="store_true", help="print JSON instead of text tables")
    common.add_argument("--n-sequences", type=int, default=600, help="sequences to generate (default 600)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="maneuver-graph", description="Vehicle maneuver classification on scene-graph sequences.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[common], help="train a model and save its best checkpoint")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p = sub.add_parser("ablate-landmarks", parents=[common], help="accuracy vs. fraction of landmarks kept")
    p.add_argument("--fractions", default=",".join(str(f) for f in LANDMARK_FRACTIONS))
    p.add_argument("--seeds", type=int, default=3, help="number of seeds starting at --seed")
    p = sub.add_parser("ablate-model", parents=[common], help="compare architecture variants")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds starting at --seed")
    p = sub.add_parser("transfer", parents=[common], help="train on one distribution, test the shared classes on others")
    p.add_argument("--eval-presets", default="kitti,indian")
    p.add_argument("--eval-sequences", type=int, default=TRANSFER_EVAL_SEQUENCES)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds starting at --seed")
    sub.add_parser("gradcheck", parents=[common], help="check analytic gradients against finite differences")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        if args.epochs < 0:
            raise UsageError("--epochs must be >= 0")
        if args.n_sequences < 1:
            raise UsageError("--n-sequences must be positive")
        return COMMANDS[args.command](args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}; try a lower learning rate or a different --seed", file=sys.stderr)
        return EXIT_FAILED
    except (UsageError, ConfigError, DatasetFormatError, SequenceValidationError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
