"""Experiment runner CLI.

Subcommands:
  run            train/evaluate per the config file, write metrics to disk
  schedule-info  print the replay schedule implied by (R_I, b, m, r)
  grad-check     run the finite-difference verification suite
  suite-gen      emit a synthetic task suite to an .npz file
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import save_checkpoint
from .config import build_model, build_suite, load_config
from .diagnostics import MetricsRecord, count_violations, gate_stats, macro_accuracy
from .episodes import ReplaySchedule, replay_frequency
from .learners import run as run_learner
from .model import Classifier, ModelConfig
from .numerics import InputError, LossMode, NumericalError, grad_check
from .stream import Batch, CandidateBatch, make_synthetic_suite


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True) + "\n"


def emit_metrics(records, path: Path) -> None:
    """Write line-delimited metric records with stable field names."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_json_line(rec))


def run_experiment(config_path, out_dir, seed_override=None, debug_traces=False) -> int:
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(config_path, out / "config.json")
    seeds = [seed_override] if seed_override is not None else cfg.seeds

    suite = build_suite(cfg)
    model = build_model(cfg, suite)
    per_seed_macro = []
    timings = []

    for seed in seeds:
        order_macros = []
        for oi, order in enumerate(cfg.orders):
            t0 = time.perf_counter()
            accs, params, memory, trace, gates = run_learner(
                model, suite, cfg.learner, seed,
                stream_order=order, combined_test=cfg.combined_test)
            elapsed = time.perf_counter() - t0

            record = MetricsRecord(
                method=cfg.method,
                seed=seed,
                per_task_accuracy=[float(a) for a in accs],
                macro_accuracy=macro_accuracy(accs),
                memory_size=len(memory) if memory is not None else 0,
                memory_offers=memory.offers if memory is not None else 0,
                replay_episodes=trace.replay_episodes,
                replay_skips=trace.replay_skips,
                violations_per_task={str(k): v for k, v in trace.violations_per_task.items()},
                flags={
                    "no_replay": cfg.learner.no_replay,
                    "no_meta_test_finetune": cfg.learner.no_meta_test_finetune,
                    "order": list(order),
                },
            )
            if gates:
                record.gate_mean, record.gate_frac_high, record.gate_frac_low = gate_stats(gates)

            run_dir = out / f"order{oi}_seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            emit_metrics([record.to_dict()], run_dir / "metrics.jsonl")
            # Wall-clock goes in a sidecar so metrics files stay byte-reproducible.
            timings.append({"order": oi, "seed": seed, "seconds": elapsed})
            if debug_traces:
                with open(run_dir / "episodes.tsv", "w", encoding="utf-8") as fh:
                    for idx, source, n_sup, n_q in trace.episodes:
                        fh.write(f"{idx}\t{source}\t{n_sup}\t{n_q}\n")
                if memory is not None:
                    memory.dump(run_dir / "memory.tsv")
            if cfg.save_checkpoints:
                save_checkpoint(run_dir / "checkpoint.npz", params, model.config)
            order_macros.append(record.macro_accuracy)
        per_seed_macro.append(macro_accuracy(order_macros))

    summary = {
        "method": cfg.method,
        "seeds": seeds,
        "orders": cfg.orders,
        "macro_accuracy_mean": float(np.mean(per_seed_macro)),
        "macro_accuracy_std": float(np.std(per_seed_macro)),
        "per_seed_macro_accuracy": [float(a) for a in per_seed_macro],
    }
    emit_metrics([summary], out / "summary.jsonl")
    with open(out / "timing.jsonl", "w", encoding="utf-8") as fh:
        for t in timings:
            fh.write(json.dumps(t, sort_keys=True) + "\n")
    return 0


def schedule_info(replay_interval, batch_size, support_size, replay_rate, file=None):
    file = file or sys.stdout
    sched = ReplaySchedule(batch_size=batch_size, support_size=support_size,
                           replay_interval=replay_interval, replay_rate=replay_rate)
    print(f"replay frequency R_F      : {sched.frequency} episodes", file=file)
    print(f"replay batch size         : {sched.replay_batch_size} examples", file=file)
    print(f"baseline replay frequency : {sched.baseline_frequency} optimizer steps", file=file)
    if sched.frequency == 1:
        print("warning: replay would occur every episode "
              f"(rate at or above 1/m = {1.0 / support_size:.0%})", file=file)
    return sched


def run_grad_check_suite(trials: int = 100, seed: int = 0, eps: float = 1e-4,
                         file=None) -> float:
    """Finite-difference verification across layer types and architectures.

    Covers linear, ReLU, sigmoid gating, softmax-CE and sigmoid-BCE paths via
    small randomized OML and ANML models in both loss modes.
    """
    file = file or sys.stdout
    rng = np.random.default_rng(seed)
    configs = [
        ModelConfig(input_dim=6, encoder_dims=(7,), num_classes=4, architecture="OML"),
        ModelConfig(input_dim=6, encoder_dims=(5, 4), num_classes=3, architecture="OML"),
        ModelConfig(input_dim=6, encoder_dims=(7,), num_classes=4,
                    architecture="ANML", nm_hidden_dim=5),
        ModelConfig(input_dim=8, encoder_dims=(6,), num_classes=2, architecture="OML",
                    loss_mode=LossMode.CANDIDATE_BCE),
        ModelConfig(input_dim=8, encoder_dims=(6,), num_classes=2, architecture="ANML",
                    nm_hidden_dim=4, loss_mode=LossMode.CANDIDATE_BCE),
    ]
    def min_preactivation(clf, params, batch):
        """Smallest |z| over all ReLU inputs; central differences are only
        trustworthy when no unit sits within eps of the kink."""
        if clf.config.loss_mode == LossMode.CANDIDATE_BCE:
            x = batch.stacked()[0]
        else:
            x = batch.features
        _, cache = clf._forward(params, x)
        zs = [np.abs(z).min() for z in cache["enc_out"]]
        for key in ("nm_z0", "nm_z1"):
            if key in cache:
                zs.append(np.abs(cache[key]).min())
        return min(zs)

    worst = 0.0
    for trial in range(trials):
        config = configs[trial % len(configs)]
        clf = Classifier(config)
        params = clf.init_params(rng)
        # Perturb biases so no unit sits exactly at a ReLU kink.
        for name, t in params.tensors.items():
            if name.endswith(".b"):
                t += 0.1 * rng.standard_normal(t.shape)
        while True:
            if config.loss_mode == LossMode.CANDIDATE_BCE:
                batch = CandidateBatch(
                    tuple(rng.standard_normal((int(rng.integers(2, 5)), config.input_dim))
                          for _ in range(4)),
                    np.array([0, 1, 0, 1]),
                )
            else:
                batch = Batch(rng.standard_normal((8, config.input_dim)),
                              rng.integers(0, config.num_classes, size=8))
            if min_preactivation(clf, params, batch) > 20 * eps:
                break
        parts = set(params.partitions.values())
        _, grads = clf.loss_and_grad(params, batch, parts)
        err = grad_check(params, lambda p: clf.loss_and_grad(p, batch, parts)[0],
                         grads, eps=eps)
        worst = max(worst, err)
    print(f"grad-check: {trials} trials, max relative error {worst:.3e}", file=file)
    return worst


def suite_gen(args) -> int:
    suite = make_synthetic_suite(
        kind=args.kind, num_tasks=args.num_tasks,
        classes_per_task=args.classes_per_task,
        examples_per_class=args.examples_per_class,
        input_dim=args.input_dim, seed=args.seed,
        test_per_class=args.test_per_class)
    arrays = {}
    for split, tasks in (("train", suite.train), ("test", suite.test)):
        for t in tasks:
            arrays[f"{split}/{t.task_id}/features"] = t.features
            arrays[f"{split}/{t.task_id}/labels"] = t.labels
    arrays["__meta__"] = np.frombuffer(
        json.dumps(suite.meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(args.out, **arrays)
    print(f"wrote {args.out}: {len(suite.train)} tasks, "
          f"{sum(t.size for t in suite.train)} train examples")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metareplay")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config's seed list")
    p_run.add_argument("--debug-traces", action="store_true")

    p_sched = sub.add_parser("schedule-info", help="print the replay schedule")
    p_sched.add_argument("--replay-interval", type=int, required=True)
    p_sched.add_argument("--batch-size", type=int, required=True)
    p_sched.add_argument("--support-size", type=int, required=True)
    p_sched.add_argument("--replay-rate", type=float, required=True)

    p_gc = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p_gc.add_argument("--trials", type=int, default=100)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--eps", type=float, default=1e-4)

    p_gen = sub.add_parser("suite-gen", help="emit a synthetic suite to disk")
    p_gen.add_argument("--kind", choices=["BALANCED", "IMBALANCED"], default="BALANCED")
    p_gen.add_argument("--num-tasks", type=int, default=5)
    p_gen.add_argument("--classes-per-task", type=int, default=2)
    p_gen.add_argument("--examples-per-class", type=int, default=1000)
    p_gen.add_argument("--test-per-class", type=int, default=250)
    p_gen.add_argument("--input-dim", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config, args.out, args.seed, args.debug_traces)
        if args.command == "schedule-info":
            schedule_info(args.replay_interval, args.batch_size,
                          args.support_size, args.replay_rate)
            return 0
        if args.command == "grad-check":
            worst = run_grad_check_suite(args.trials, args.seed, args.eps)
            return 0 if worst < 1e-5 else 1
        if args.command == "suite-gen":
            return suite_gen(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc} {exc.payload}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
