"""Command-line entry points.

Subcommands: synth, extract, analyze, train, evaluate, predict,
paramcount, gradcheck. Numeric outputs are TSV with 6 significant digits;
exit code is 0 on success and nonzero with a stderr diagnostic otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline, storage
from .data import parse_manifest, parse_manifest_pair, synth_fixture
from .models import (
    SubSpectralConfig,
    build_baseline,
    build_subspectralnet,
    count_params,
    load_model,
)
from .training import (
    TrainConfig,
    evaluate_model,
    predict_heads,
    predict_probs,
    train_model,
    write_confusion_tsv,
    write_curves_tsv,
    write_report_tsv,
)
from .verification import run_gradient_suite


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=["subspectralnet", "baseline"], default="subspectralnet")
    p.add_argument("--mel-bins", type=int, default=40, help="spectrogram height F")
    p.add_argument("--sub-size", type=int, default=20, help="band crop height X")
    p.add_argument("--hop-size", type=int, default=10, help="vertical band hop Y")
    p.add_argument("--head-compat", action="store_true", help="size the global head to match the published parameter count")
    p.add_argument("--no-sub-loss", action="store_true", help="drop per-band softmax heads; train the global head only")
    p.add_argument("--width-mult", type=int, default=1, help="baseline conv width multiplier")
    p.add_argument("--channels", choices=["mono", "stereo"], default="stereo")


def cmd_synth(args) -> int:
    manifest = synth_fixture(
        args.classes,
        args.per_class,
        args.out,
        test_per_class=args.test_per_class,
        seconds=args.seconds,
        sample_rate=args.sample_rate,
        channels=2 if args.channels == "stereo" else 1,
        seed=args.seed,
    )
    print(f"wrote {len(manifest.entries)} clips under {args.out}")
    return 0


def cmd_extract(args) -> int:
    if args.manifest:
        manifest = parse_manifest(args.manifest)
    elif args.train_manifest and args.test_manifest:
        manifest = parse_manifest_pair(args.train_manifest, args.test_manifest)
    else:
        raise SystemExit("need --manifest or both --train-manifest/--test-manifest")
    summary = pipeline.extract_dataset(
        manifest,
        args.audio_root,
        args.out,
        mel_bins=args.mel_bins,
        channels=args.channels,
        f_min=args.f_min,
        f_max=args.f_max,
    )
    c, f, t = summary["shape"]
    print(
        f"extracted {summary['train_samples']} train / {summary['test_samples']} test samples, "
        f"{c}x{f}x{t} features, classes: {', '.join(summary['class_names'])}"
    )
    return 0


def cmd_analyze(args) -> int:
    artifacts = pipeline.analyze_dataset(args.features, args.out, k=args.k)
    matrix = artifacts["matrices"][args.metric]
    print(f"wrote histograms and {len(artifacts['matrices'])} distance matrices to {args.out}")
    print(f"{args.metric} matrix (post-transform):")
    for row in matrix.values:
        print("\t".join(f"{v:.6g}" for v in row))
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch,
        seed=args.seed,
        repeats=args.repeats,
        model=args.model,
        sub_size=args.sub_size,
        hop_size=args.hop_size,
        head_compat=args.head_compat,
        include_sub_heads=not args.no_sub_loss,
        use_sub_losses=not args.no_sub_loss,
        width_multiplier=args.width_mult,
    )


def cmd_train(args) -> int:
    data = pipeline.load_feature_dir(args.features)
    cfg = _train_config(args)
    result = train_model(data["train_x"], data["train_y"], data["test_x"], data["test_y"], cfg, data["class_names"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "model.ssnw"
    best = result.histories[result.best_run]
    result.graph.save(
        checkpoint,
        meta={
            "best_run": result.best_run,
            "best_epoch": best.best_epoch,
            "best_accuracy": best.best_accuracy,
            "average_best": result.average_best,
        },
    )
    write_report_tsv(out / "report.tsv", result.final_report)
    for name, matrix in result.final_report.confusion.items():
        write_confusion_tsv(out / f"confusion_{name}.tsv", matrix, data["class_names"])
    for history in result.histories:
        write_curves_tsv(out / f"curves_seed{history.run_seed}.tsv", history)
    print(f"average-best global accuracy over {cfg.repeats} run(s): {result.average_best:.6g}")
    print(f"best checkpoint (run {result.best_run}, epoch {best.best_epoch}) saved to {checkpoint}")
    return 0


def cmd_evaluate(args) -> int:
    data = pipeline.load_feature_dir(args.features)
    graph, _meta = load_model(args.checkpoint)
    report = evaluate_model(graph, data["test_x"], data["test_y"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_tsv(out / "report.tsv", report)
    for name, matrix in report.confusion.items():
        write_confusion_tsv(out / f"confusion_{name}.tsv", matrix, data["class_names"])
    for name in report.head_names:
        print(f"{name}\taccuracy {report.accuracy[name]:.6g}")
    return 0


def cmd_predict(args) -> int:
    features, labels = storage.read_features(args.features)
    graph, _meta = load_model(args.checkpoint)
    preds = predict_heads(graph, features)
    probs = predict_probs(graph, features)["global"]
    class_names = graph.desc.get("class_names") or [str(i) for i in range(graph.desc["n_classes"])]
    heads = graph.head_names()
    lines = ["index\tlabel\t" + "\t".join(f"pred_{h}" for h in heads) + "\t" + "\t".join(f"p_{c}" for c in class_names)]
    for i in range(features.shape[0]):
        row = [str(i), class_names[int(labels[i])]]
        row += [class_names[int(preds[h][i])] for h in heads]
        row += [f"{v:.6g}" for v in probs[i]]
        lines.append("\t".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote predictions for {features.shape[0]} samples to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_paramcount(args) -> int:
    channels = 2 if args.channels == "stereo" else 1
    if args.model == "baseline":
        graph = build_baseline(args.mel_bins, args.frames, channels, width_multiplier=args.width_mult)
    else:
        cfg = SubSpectralConfig(args.mel_bins, args.sub_size, args.hop_size)
        graph = build_subspectralnet(
            cfg,
            args.frames,
            channels,
            head_compat=args.head_compat,
            include_sub_heads=not args.no_sub_loss,
        )
    print("layer\tkind\tparams")
    for row in graph.layer_table():
        print(f"{row['name']}\t{row['kind']}\t{row['params']}")
    print(f"total\t\t{count_params(graph)}")
    return 0


def cmd_gradcheck(args) -> int:
    entries = run_gradient_suite(seeds=range(args.seeds))
    print("case\tdtype\tcoords\tmax_rel_error\ttolerance\tstatus")
    worst: dict[tuple, float] = {}
    status_ok = True
    for e in entries:
        key = (e.case, e.dtype)
        worst[key] = max(worst.get(key, 0.0), e.report.max_rel_error)
        if not e.passed:
            status_ok = False
    by_case: dict[tuple, list] = {}
    for e in entries:
        by_case.setdefault((e.case, e.dtype), []).append(e)
    for (case, dtype), group in by_case.items():
        coords = sum(g.report.n_coords for g in group)
        tol = group[0].report.tolerance
        ok = all(g.passed for g in group)
        print(f"{case}\t{dtype}\t{coords}\t{worst[(case, dtype)]:.6g}\t{tol:.6g}\t{'pass' if ok else 'FAIL'}")
    return 0 if status_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subspectral", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic band-limited fixture")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=4)
    p.add_argument("--test-per-class", type=int, default=None)
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--sample-rate", type=int, default=48000)
    p.add_argument("--channels", choices=["mono", "stereo"], default="stereo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("extract", help="extract normalized log-mel features to containers")
    p.add_argument("--manifest")
    p.add_argument("--train-manifest")
    p.add_argument("--test-manifest")
    p.add_argument("--audio-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mel-bins", type=int, default=40)
    p.add_argument("--channels", choices=["mono", "stereo"], default="stereo")
    p.add_argument("--f-min", type=float, default=0.0)
    p.add_argument("--f-max", type=float, default=None)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("analyze", help="band-activation histograms and distance matrices")
    p.add_argument("--features", required=True, help="directory written by extract")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=float, default=10.0, help="distance transform constant")
    p.add_argument("--metric", choices=["chisq", "kl", "hellinger"], default="chisq")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("train", help="train a model on extracted features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="per-head accuracy and confusion matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="per-sample head predictions for a feature container")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True, help="a .ssnf file")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("paramcount", help="per-layer trainable parameter table")
    p.add_argument("--frames", type=int, default=500)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_paramcount)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
