"""Command-line interface: gen-data, train, eval, trace.

All commands read a JSON experiment config (the resolved config, defaults
included, is echoed next to every run's outputs). Exit codes: 0 success,
1 config error, 2 data/format error, 3 training abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import Dataset, default_class_names, load_dataset, save_dataset
from .errors import (
    AtnmError,
    ConfigError,
    DimensionError,
    EmptyMaskError,
    FormatError,
    TrainingError,
)
from .glimpse_models import GLIMPSE_VARIANTS, run_episode
from .losses import compute_rewards
from .metrics import seed_average, write_report_csv, write_report_json
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, evaluate, model_from_checkpoint, split_train_val, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})")


_EXPERIMENT_KEYS = {"variant", "dataset", "out", "seeds", "synth"}


def _experiment_config(raw: dict) -> dict:
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(raw) - _EXPERIMENT_KEYS - train_keys)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("'seeds' must be a non-empty list")
    cfg = {
        "dataset": raw.get("dataset"),
        "out": raw.get("out", "."),
        "seeds": seeds,
        "synth": raw.get("synth", {}),
        "train": {k: raw[k] for k in raw if k in train_keys},
    }
    return cfg


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    d = dict(cfg["train"])
    d["seed"] = seed
    return TrainConfig.from_dict(d)


def _resolve_dataset(cfg: dict) -> Dataset:
    if not cfg["dataset"]:
        raise ConfigError("config needs a 'dataset' path")
    return load_dataset(cfg["dataset"])


def cmd_gen_data(args) -> int:
    cfg = _experiment_config(_load_json(args.config))
    raw = dict(cfg["synth"])
    test_fraction = raw.pop("test_fraction", 0.2)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        synth_cfg = SynthConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}")
    if synth_cfg.examples < 1:
        raise ConfigError("synth config needs examples >= 1")
    out_dir = Path(args.out or cfg["dataset"] or "data")
    examples = synth_generate(synth_cfg)
    split_rng = np.random.default_rng(np.random.SeedSequence([synth_cfg.seed, 0x511]))
    n_test = int(round(test_fraction * len(examples)))
    test_ids = {examples[i].example_id for i in split_rng.permutation(len(examples))[:n_test]}
    splits = {
        ex.example_id: ("test" if ex.example_id in test_ids else "train") for ex in examples
    }
    names = default_class_names(synth_cfg.classes)
    synth_echo = {k: v for k, v in synth_cfg.__dict__.items() if k != "rates"}
    synth_echo["positive_rate"] = synth_cfg.rates.tolist()
    synth_echo["test_fraction"] = test_fraction
    for key in ("center_range", "bandwidth_range", "duty_range"):
        synth_echo[key] = list(synth_echo[key])
    save_dataset(examples, out_dir, names, splits, generator=synth_echo)
    pos = np.stack([ex.labels for ex in examples]).mean(axis=0)
    print(f"wrote {len(examples)} examples to {out_dir}")
    for name, rate in zip(names, pos):
        print(f"  {name}: positive rate {rate:.3f}")
    return 0


def _run_one_seed(cfg: dict, seed: int, dataset: Dataset, out_dir: Path) -> Path:
    config = _train_config(cfg, seed)
    record, ckpt = train(
        config, dataset.split("train"), class_names=dataset.class_names
    )
    stem = f"{config.variant}_seed{seed}"
    ckpt_path = out_dir / f"{stem}.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    record.save_jsonl(out_dir / f"{stem}.runrecord.jsonl")
    with open(out_dir / f"{stem}.config.json", "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"seed {seed}: best epoch {record.best_epoch}, "
        f"val macro F1 {record.best_f1:.4f} -> {ckpt_path}"
    )
    return ckpt_path


def cmd_train(args) -> int:
    cfg = _experiment_config(_load_json(args.config))
    if "variant" not in cfg["train"]:
        raise ConfigError("config needs a 'variant'")
    dataset = _resolve_dataset(cfg)
    out_dir = Path(args.out or cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed] if args.seed is not None else cfg["seeds"]
    threads = int(os.environ.get("ATNM_THREADS", "1"))
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
            futures = [pool.submit(_run_one_seed, cfg, s, dataset, out_dir) for s in seeds]
            for fut in futures:
                fut.result()
    else:
        for seed in seeds:
            _run_one_seed(cfg, seed, dataset, out_dir)
    return 0


def _split_examples(dataset: Dataset, split: str, config: TrainConfig):
    if split in ("train", "test"):
        return dataset.split(split)
    if split == "val":
        _, val = split_train_val(dataset.split("train"), config.val_fraction, config.seed)
        return val
    raise ConfigError(f"unknown split '{split}'")


def cmd_eval(args) -> int:
    cfg = _experiment_config(_load_json(args.config))
    dataset = _resolve_dataset(cfg)
    if not args.checkpoints:
        raise ConfigError("eval needs at least one checkpoint path")
    out_dir = Path(args.out or cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = []
    names = None
    for ckpt_path in args.checkpoints:
        ckpt = load_checkpoint(ckpt_path)
        config = TrainConfig.from_dict(ckpt.meta["config"])
        examples = _split_examples(dataset, args.split, config)
        report = evaluate(ckpt, examples)
        names = [row["class"] for row in report["classes"]]
        tables.append([row["f1"] for row in report["classes"]])
        stem = f"eval_{args.split}_{Path(ckpt_path).stem}"
        write_report_csv(report, out_dir / f"{stem}.csv")
        write_report_json(report, out_dir / f"{stem}.json")
        print(f"{ckpt_path}: macro F1 {report['macro_f1']:.4f} on {args.split}")
    if len(tables) > 1:
        avg = seed_average(tables)
        avg_report = {
            "classes": [
                {"class": n, "f1": float(v), "tp": 0, "fp": 0, "fn": 0, "known": 0}
                for n, v in zip(names, avg)
            ],
            "macro_f1": float(np.mean(avg)),
        }
        write_report_csv(avg_report, out_dir / f"eval_{args.split}_seed_avg.csv")
        write_report_json(avg_report, out_dir / f"eval_{args.split}_seed_avg.json")
        print(f"seed average macro F1 {avg_report['macro_f1']:.4f} over {len(tables)} checkpoints")
    return 0


def cmd_trace(args) -> int:
    cfg = _experiment_config(_load_json(args.config))
    dataset = _resolve_dataset(cfg)
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.variant not in GLIMPSE_VARIANTS:
        raise ConfigError(
            f"trace supports glimpse models only ({', '.join(GLIMPSE_VARIANTS)}), "
            f"got variant '{ckpt.variant}'"
        )
    model, config = model_from_checkpoint(ckpt)
    out_dir = Path(args.out or cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else config.seed
    ids = args.ids or [ex.example_id for ex in dataset.examples[:1]]
    for i, example_id in enumerate(ids):
        ex = dataset.by_id(example_id)
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        traj = run_episode(model, ex.spectrogram.values, rng)
        rewards, cumulative = compute_rewards(
            [p.data for p in traj.preds], ex.labels, ex.known_mask, config.threshold
        )
        steps = [
            {
                "step": j + 1,
                "mu": traj.mus[j].tolist(),
                "loc": traj.locations[j].tolist(),
                "reward": float(rewards[j]),
                "cumulative_reward": float(cumulative[j]),
                "pred": traj.preds[j].data.tolist(),
            }
            for j in range(traj.steps)
        ]
        path = out_dir / f"trace_{example_id}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(steps, fh, indent=2)
            fh.write("\n")
        print(f"{example_id}: {traj.steps} steps -> {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="atnm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p_gen)

    p_train = sub.add_parser("train", help="train one run per configured seed")
    common(p_train)

    p_eval = sub.add_parser("eval", help="score checkpoints on a split")
    common(p_eval)
    p_eval.add_argument("checkpoints", nargs="*", help="checkpoint files")
    p_eval.add_argument(
        "--split", choices=("train", "val", "test"), default="test", help="dataset split"
    )

    p_trace = sub.add_parser("trace", help="export glimpse trajectories as JSON")
    common(p_trace)
    p_trace.add_argument("checkpoint", help="glimpse-model checkpoint")
    p_trace.add_argument("ids", nargs="*", help="example ids to trace")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "gen-data": cmd_gen_data,
            "train": cmd_train,
            "eval": cmd_eval,
            "trace": cmd_trace,
        }[args.command]
        return handler(args)
    except (ConfigError, DimensionError, EmptyMaskError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    except AtnmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
