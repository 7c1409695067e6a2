"""Command line front end.

One subcommand per pipeline step: train a base decoder, harvest its
failures, augment them with biased re-sampling, transfer weights between
configurations, train a post stage, and evaluate (FER curves, residual
failure rate, complexity, error histograms).

Settings come from, in increasing priority: built-in defaults, the YAML
file given with --config, LDPCBOOST_SECTION__KEY environment variables,
and command line flags. Every run ends with a one-line key=value summary
on stdout. Exit codes: 0 success, 1 runtime failure, 2 configuration
error, 3 frame budget exhausted before the requested target was reached
(partial results are still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .channel import sample_llr_batch, spawn_stream
from .codes import CodeModelError, bundled_code_path, load_code
from .config import ConfigError, ExperimentConfig
from .evaluate import (average_iterations, complexity_report, error_histogram,
                       fer_csv, fer_curve, test_fer)
from .fastsim import set_workers
from .pipeline import (DatasetError, TransferError, UcDataset, augment,
                       collect_failures, extend_with_stage, transfer_init)
from .training import CSV_HEADER, train
from .weights import WeightSet, WeightShapeError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


def _summary(cmd: str, **kv) -> None:
    parts = [f"cmd={cmd}"]
    for k, v in kv.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.6g}")
        else:
            parts.append(f"{k}={v}")
    print(" ".join(parts))


def _fmt_path(p) -> str:
    return str(Path(p))


def _write_metrics(path, rows) -> None:
    if path is None:
        return
    lines = [CSV_HEADER] + [r.csv() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _resolve_code(code_id: str, override: str | None):
    if override:
        return load_code(override)
    for suffix in (".bm", ".alist"):
        try:
            return load_code(bundled_code_path(code_id + suffix))
        except FileNotFoundError:
            continue
    raise ConfigError(f"cannot resolve code {code_id!r} to a bundled file; "
                      "pass the code file explicitly")


def _load_weights(path, graph) -> WeightSet:
    ws = WeightSet.load(path)
    ws.validate_against(graph)
    return ws


def _training_frames(cfg: ExperimentConfig, graph, count: int, worker_base: int):
    """Fresh frames spread evenly over the configured SNR list."""
    snrs = cfg.get("training.snr_list")
    seed = cfg.get("run.seed")
    per = [count // len(snrs)] * len(snrs)
    per[0] += count - sum(per)
    parts = []
    for i, (ebno, c) in enumerate(zip(snrs, per)):
        if c == 0:
            continue
        chan = cfg.build_channel(graph, ebno_db=float(ebno))
        parts.append(sample_llr_batch(chan, graph, spawn_stream(seed, worker_base + i), c))
    return np.concatenate(parts, axis=0)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_train_base(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = cfg.build_base_weights(graph)
    count = cfg.get("training.train_frames")
    train_llr = _training_frames(cfg, graph, count, worker_base=0)
    test_llr = _training_frames(cfg, graph, max(1, count // 10), worker_base=1000)
    rows = train(graph, ws, train_llr, cfg.schedule_spec(), cfg.loss_spec(),
                 np.random.default_rng(cfg.get("run.seed")), trainable_stage=0,
                 test_llr=test_llr, base_lr=cfg.get("training.base_lr"),
                 clip=cfg.weight_clip())
    ws.save(args.out)
    _write_metrics(args.metrics, rows)
    _summary("train-base", code=graph.code_id, iters=ws.total_iters,
             sharing=cfg.get("base.sharing"), params=ws.param_count,
             epochs=len(rows), final_loss=rows[-1].mean_loss,
             test_fer=rows[-1].test_fer, out=_fmt_path(args.out))
    return EXIT_OK


def cmd_collect(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    channel = cfg.build_channel(graph)
    target = args.target if args.target is not None else cfg.get("collect.target_failures")
    ds = collect_failures(graph, ws, channel, target, cfg.get("run.seed"),
                          max_frames=cfg.get("run.budget_frames"),
                          batch_size=cfg.get("collect.batch_size"))
    ds.save(args.out)
    _summary("collect", code=graph.code_id, ebno_db=channel.ebno_db,
             failures=len(ds), frames=ds.frames_examined,
             fer=ds.collection_fer, partial=ds.partial, out=_fmt_path(args.out))
    return EXIT_BUDGET if ds.partial else EXIT_OK


def cmd_augment(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    source = UcDataset.load(args.dataset)
    beta = args.beta if args.beta is not None else cfg.get("augment.beta")
    out = augment(graph, ws, source, beta, cfg.get("augment.per_source"),
                  cfg.get("run.seed"), max_frames=cfg.get("run.budget_frames"),
                  batch_size=cfg.get("augment.batch_size"))
    out.save(args.out)
    _summary("augment", code=graph.code_id, beta=beta, sources=len(source),
             frames=len(out), shifted_fer=out.augmentation.shifted_fer,
             partial=out.partial, out=_fmt_path(args.out))
    return EXIT_BUDGET if out.partial else EXIT_OK


def cmd_transfer(args, cfg: ExperimentConfig) -> int:
    source = WeightSet.load(args.source)
    target = WeightSet.load(args.target)
    source_graph = _resolve_code(source.code_id, args.source_code)
    target_graph = _resolve_code(target.code_id, args.target_code)
    out = transfer_init(target, source, target_graph, source_graph)
    out.save(args.out)
    copied = min(source.stages[-1].num_iters, target.stages[-1].num_iters)
    _summary("transfer", source=source.code_id, target=target.code_id,
             mode=out.stages[-1].mode, copied_iters=copied, out=_fmt_path(args.out))
    return EXIT_OK


def cmd_train_post(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    ds = UcDataset.load(args.dataset)
    if len(ws.stages) == 1:
        if ds.base_hash != ws.content_hash():
            raise DatasetError("dataset was not collected with these base weights")
        ws = extend_with_stage(ws, graph, cfg.get("post.num_iters"),
                               cfg.get("post.sharing"))
    rows = train(graph, ws, ds.train_frames, cfg.schedule_spec(), cfg.loss_spec(),
                 np.random.default_rng(cfg.get("run.seed")),
                 test_llr=ds.test_frames, base_lr=cfg.get("training.base_lr"),
                 clip=cfg.weight_clip())
    ws.save(args.out)
    _write_metrics(args.metrics, rows)
    _summary("train-post", code=graph.code_id, stage_iters=ws.stage_lengths[-1],
             sharing=ws.stages[-1].mode, params=ws.param_count,
             train_frames=ds.train_count, epochs=len(rows),
             final_loss=rows[-1].mean_loss, test_fer=rows[-1].test_fer,
             out=_fmt_path(args.out))
    return EXIT_OK


def cmd_fer(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    channel = cfg.build_channel(graph)
    mask = cfg.info_mask(graph) if args.info_only else None
    points = fer_curve(graph, ws, channel, cfg.get("eval.ebno_list"),
                       cfg.get("run.seed"), stop_errors=cfg.get("eval.stop_errors"),
                       batch_size=cfg.get("eval.batch_size"),
                       max_frames=cfg.get("run.budget_frames"), info_mask=mask)
    text = fer_csv(points)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    short = points[-1]
    _summary("fer", code=graph.code_id, points=len(points),
             last_ebno=short.ebno_db, last_fer=short.fer,
             budget_hit=any(p.budget_exhausted for p in points),
             out=_fmt_path(args.out) if args.out else "-")
    return EXIT_BUDGET if any(p.budget_exhausted for p in points) else EXIT_OK


def cmd_test_fer(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    ds = UcDataset.load(args.dataset)
    mask = cfg.info_mask(graph) if args.info_only else None
    frames = ds.test_frames if args.split == "test" else (
        ds.train_frames if args.split == "train" else ds.frames.astype(np.float64))
    value = test_fer(graph, ws, frames, info_mask=mask)
    _summary("test-fer", code=graph.code_id, split=args.split,
             frames=len(frames), residual_fer=value)
    return EXIT_OK


def cmd_complexity(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    if args.avg_iters is not None:
        avg = args.avg_iters
    else:
        channel = cfg.build_channel(graph)
        frames = int(min(cfg.get("run.budget_frames"), 20000))
        avg = average_iterations(graph, ws, channel, cfg.get("run.seed"),
                                 frames=frames, batch_size=cfg.get("eval.batch_size"))
    rep = complexity_report(graph, ws, avg)
    text = json.dumps(rep.to_jsonable(), indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _summary("complexity", code=graph.code_id, kind=rep.decoder_kind,
             avg_iters=rep.avg_iterations, total_ops=rep.total_operations,
             weight_memory=rep.weight_memory)
    return EXIT_OK


def cmd_histogram(args, cfg: ExperimentConfig) -> int:
    graph = cfg.build_graph()
    ws = _load_weights(args.weights, graph)
    mask = cfg.info_mask(graph) if args.info_only else None
    if args.dataset:
        frames = UcDataset.load(args.dataset).frames.astype(np.float64)
    else:
        channel = cfg.build_channel(graph)
        count = int(min(cfg.get("eval.histogram_frames"),
                        cfg.get("run.budget_frames")))
        frames = sample_llr_batch(channel, graph,
                                  spawn_stream(cfg.get("run.seed"), 0), count)
    hist = error_histogram(graph, ws, frames, info_mask=mask,
                           boundary=cfg.get("eval.histogram_boundary"))
    text = json.dumps(hist.to_jsonable(), indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    _summary("histogram", code=graph.code_id, frames=hist.total_frames,
             failed=hist.failed_frames, boundary=hist.boundary,
             fraction_small=hist.fraction_small)
    return EXIT_OK


# ----------------------------------------------------------------------
# parser / dispatch
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ldpcboost",
        description="Weighted min-sum decoding with staged training on failures.")
    p.add_argument("--config", metavar="PATH", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("--workers", type=int, help="kernel worker threads")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   default=None, help="fixed reduction order (always on; recorded)")
    p.add_argument("--budget", type=int, metavar="N",
                   help="global frame budget (exit 3 when exhausted)")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("train-base", help="train the first-stage weights on fresh frames")
    sp.add_argument("--out", required=True)
    sp.add_argument("--metrics", help="per-epoch CSV path")
    sp.set_defaults(fn=cmd_train_base)

    sp = sub.add_parser("collect", help="harvest frames the decoder fails on")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--target", type=int, help="failure count to collect")
    sp.set_defaults(fn=cmd_collect)

    sp = sub.add_parser("augment", help="biased re-sampling around failure positions")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--beta", type=float, help="mean shift toward the noise")
    sp.set_defaults(fn=cmd_augment)

    sp = sub.add_parser("transfer", help="seed a post stage from trained weights")
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--source-code", help="code file of the source weights")
    sp.add_argument("--target-code", help="code file of the target weights")
    sp.set_defaults(fn=cmd_transfer)

    sp = sub.add_parser("train-post", help="train a post stage on a failure dataset")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--metrics", help="per-epoch CSV path")
    sp.set_defaults(fn=cmd_train_post)

    sp = sub.add_parser("fer", help="Monte-Carlo FER curve")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", help="CSV path (stdout when omitted)")
    sp.add_argument("--info-only", action="store_true",
                    help="count only information-bit errors")
    sp.set_defaults(fn=cmd_fer)

    sp = sub.add_parser("test-fer", help="residual failure rate on a dataset")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--split", choices=["all", "train", "test"], default="test")
    sp.add_argument("--info-only", action="store_true")
    sp.set_defaults(fn=cmd_test_fer)

    sp = sub.add_parser("complexity", help="operation-count report")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--avg-iters", type=float,
                    help="average iteration count (measured when omitted)")
    sp.add_argument("--out", help="JSON path (stdout when omitted)")
    sp.set_defaults(fn=cmd_complexity)

    sp = sub.add_parser("histogram", help="residual bit-error histogram")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--dataset", help="UCV1 dataset (fresh frames when omitted)")
    sp.add_argument("--out", help="JSON path (stdout when omitted)")
    sp.add_argument("--info-only", action="store_true")
    sp.set_defaults(fn=cmd_histogram)
    return p


def resolve_config(args, environ=None) -> ExperimentConfig:
    cfg = (ExperimentConfig.load(args.config) if args.config
           else ExperimentConfig.defaults())
    cfg = cfg.apply_env(os.environ if environ is None else environ)
    updates = {}
    if args.seed is not None:
        updates["run.seed"] = args.seed
    if args.workers is not None:
        updates["run.workers"] = args.workers
    if args.deterministic is not None:
        updates["run.deterministic"] = args.deterministic
    if args.budget is not None:
        updates["run.budget_frames"] = args.budget
    return cfg.with_updates(updates) if updates else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        set_workers(cfg.get("run.workers"))
        return args.fn(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, TransferError, CodeModelError, WeightShapeError,
            ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
