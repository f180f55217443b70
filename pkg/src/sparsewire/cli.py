"""Command-line harness: topographic-map runs with connectivity analysis,
sparse-classifier training, and scaling/timing benchmarks."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .classifier import EpropClassifierTrainer, SyntheticTask
from .config import ExperimentConfig, load_config, serialize_config
from .connectivity import write_snapshot_csv
from .errors import ConfigError, SparsewireError
from .topomap import TopomapModel, TopomapRecorder


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=str, default=None, help="config file path")
    sub.add_argument("--seed", type=int, default=None, help="global RNG seed")
    sub.add_argument("--out", type=str, default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=None,
                     help="row-update worker count (never changes results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsewire",
        description="sparse spiking-network simulations with runtime rewiring")
    subs = parser.add_subparsers(dest="command", required=True)

    topo = subs.add_parser("topomap", help="run the topographic-map model")
    _add_common(topo)
    topo.add_argument("--scale", type=int, default=None, help="grid scaling factor")
    topo.add_argument("--duration-ms", type=float, default=None)
    topo.add_argument("--snapshot-every-ms", type=float, default=None)
    topo.add_argument("--record-spikes", action="store_true",
                      help="also write per-population spike CSVs")

    clf = subs.add_parser("classifier", help="train the spiking classifier")
    _add_common(clf)
    clf.add_argument("--deep-r", choices=("on", "off"), default=None)
    clf.add_argument("--l1", type=float, default=None,
                     help="L1 strength of the rewiring gradient nudge")
    clf.add_argument("--batches", type=int, default=None)
    clf.add_argument("--hidden", type=int, default=None)
    clf.add_argument("--input-density", type=float, default=None)
    clf.add_argument("--recurrent-density", type=float, default=None)

    bench = subs.add_parser("bench", help="timing benchmark across scales")
    _add_common(bench)
    bench.add_argument("--scales", type=str, default=None,
                       help="comma-separated list, e.g. 1,2,3")
    bench.add_argument("--duration-ms", type=float, default=None)
    return parser


def _resolve_config(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    config.experiment = experiment
    overrides = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
        "scale": getattr(args, "scale", None),
        "snapshot_every_ms": getattr(args, "snapshot_every_ms", None),
        "l1_strength": getattr(args, "l1", None),
        "num_batches": getattr(args, "batches", None),
        "hidden_size": getattr(args, "hidden", None),
        "input_density": getattr(args, "input_density", None),
        "recurrent_density": getattr(args, "recurrent_density", None),
    }
    if experiment == "bench":
        overrides["bench_duration_ms"] = getattr(args, "duration_ms", None)
        scales = getattr(args, "scales", None)
        if scales is not None:
            config.bench_scales = tuple(int(s) for s in scales.split(","))
    else:
        overrides["duration_ms"] = getattr(args, "duration_ms", None)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    deep_r = getattr(args, "deep_r", None)
    if deep_r is not None:
        config.deep_r = deep_r == "on"
    return config.validate()


def _prepare_out(config: ExperimentConfig) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    with open(os.path.join(config.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(config))
    return config.out_dir


def cmd_topomap(config: ExperimentConfig, record_spikes: bool = False) -> int:
    out = _prepare_out(config)
    model = TopomapModel(config.scale, config.seed, workers=config.workers,
                         always_remap=config.always_remap)
    recorder = TopomapRecorder(config.snapshot_every_ms,
                               record_spikes=record_spikes)
    model.run(config.duration_ms, recorder)
    if record_spikes:
        for pop in ("source", "target"):
            with open(os.path.join(out, f"spikes_{pop}.csv"), "w",
                      encoding="utf-8") as fh:
                recorder.write_spikes_csv(fh, pop)
    with open(os.path.join(out, "degrees.csv"), "w", encoding="utf-8") as fh:
        recorder.write_degrees_csv(fh)
    with open(os.path.join(out, "profile.csv"), "w", encoding="utf-8") as fh:
        recorder.write_profile_csv(fh)
    with open(os.path.join(out, "eliminations.csv"), "w", encoding="utf-8") as fh:
        recorder.write_events_csv(fh, "elimination")
    with open(os.path.join(out, "formations.csv"), "w", encoding="utf-8") as fh:
        recorder.write_events_csv(fh, "formation")
    for proj in ("ff", "lat"):
        for tag in ("initial", "final"):
            path = os.path.join(out, f"connectivity_{proj}_{tag}.csv")
            pre, post, w = recorder.snapshots[(proj, tag)]
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("pre,post,weight\n")
                order = np.lexsort((post, pre))
                for k in order:
                    fh.write(f"{pre[k]},{post[k]},{float(w[k])!r}\n")
    with open(os.path.join(out, "timing.csv"), "w", encoding="utf-8") as fh:
        model.net.timers.write_csv(fh)
    return 0


def cmd_classifier(config: ExperimentConfig) -> int:
    out = _prepare_out(config)
    task = SyntheticTask(num_classes=config.num_classes,
                         num_inputs=config.num_inputs,
                         example_steps=config.example_steps,
                         seed=config.seed,
                         num_train=config.num_train, num_test=config.num_test)
    trainer = EpropClassifierTrainer(
        task, hidden=config.hidden_size,
        input_density=config.input_density,
        recurrent_density=config.recurrent_density,
        deep_r=config.deep_r, l1_strength=config.l1_strength,
        learning_rate=config.learning_rate, batch_size=config.batch_size,
        seed=config.seed, workers=config.workers)
    try:
        trainer.run(config.num_batches)
    except FloatingPointError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write("batch,loss,accuracy,fraction_rewired\n")
        for rec in trainer.history:
            fh.write(f"{rec['batch']},{rec['loss']:.9g},{rec['accuracy']:.9g},"
                     f"{rec['fraction_rewired']:.9g}\n")
    with open(os.path.join(out, "deep_r_log.csv"), "w", encoding="utf-8") as fh:
        fh.write("update_index,removed,total,fraction_rewired\n")
        for rec in trainer.history:
            fh.write(f"{rec['batch']},{rec['removed']},{rec['total']},"
                     f"{rec['fraction_rewired']:.9g}\n")
    test_accuracy = trainer.evaluate(task.test_ids())
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        final = trainer.history[-1]
        fh.write(f"final_train_accuracy = {final['accuracy']:.9g}\n")
        fh.write(f"test_accuracy = {test_accuracy:.9g}\n")
    for name in ("in", "rec"):
        m, syn = trainer.net.matrices[name]
        with open(os.path.join(out, f"connectivity_{name}_final.csv"), "w",
                  encoding="utf-8") as fh:
            write_snapshot_csv(fh, m, syn, columns=(("weight", "w"),))
    return 0


def cmd_bench(config: ExperimentConfig) -> int:
    import time

    out = _prepare_out(config)
    path = os.path.join(out, "bench.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scale,phase,seconds\n")
        for s in config.bench_scales:
            model = TopomapModel(s, config.seed, workers=config.workers,
                                 always_remap=config.always_remap,
                                 record_events=False)
            t0 = time.perf_counter()
            model.run(config.bench_duration_ms, recorder=None)
            wall = time.perf_counter() - t0
            timers = model.net.timers
            for phase in timers.seconds:
                fh.write(f"{s},{phase},{timers.seconds[phase]:.9f}\n")
            # total is the wall clock of the whole run; the six phases
            # exclude loop bookkeeping, so their sum stays below it
            fh.write(f"{s},total,{wall:.9f}\n")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args, args.command)
        if args.command == "topomap":
            return cmd_topomap(config, record_spikes=args.record_spikes)
        if args.command == "classifier":
            return cmd_classifier(config)
        return cmd_bench(config)
    except (ConfigError, SparsewireError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
