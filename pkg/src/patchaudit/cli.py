"""Command-line entry point.

Subcommands: scan, featurize, audit, train, eval, perturb, synth, repro.
Reports are JSON with a top-level format_version; plot data is plain CSV;
figures are rendered next to them unless --no-figures. Exit codes: 0 on
success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import classify, corpus, features, forensics, perturb, synth
from .errors import PatchAuditError
from .parallel import default_threads

log = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1

# Directory names of the colorectal histology corpus this toolkit is most
# often pointed at, with display names in its conventional table order
# (which coincides with lexicographic order of the directory names).
NCT_CLASS_NAMES = {
    "ADI": "Adipose tissue",
    "BACK": "Background",
    "DEB": "Debris",
    "LYM": "Lymphocytes",
    "MUC": "Mucus",
    "MUS": "Smooth muscle",
    "NORM": "Normal colon mucosa",
    "STR": "Cancer-associated stroma",
    "TUM": "Adenocarcinoma epithelium",
}
NCT_SPLIT_DIRS = ("NCT-CRC-HE-100K", "CRC-VAL-HE-7K")


def _display_names(class_names: list[str]) -> list[str]:
    if set(class_names) == set(NCT_CLASS_NAMES):
        return [NCT_CLASS_NAMES[c] for c in class_names]
    return list(class_names)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, metavar="U64",
                        help="master seed for all randomness (default 0)")
    parser.add_argument("--threads", type=int, default=default_threads(),
                        metavar="N", help="worker threads (default: all cores)")
    parser.add_argument("--strict", action="store_true",
                        help="abort on undecodable files instead of skipping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchaudit",
        description="Audit image-patch corpora for color signatures, JPEG "
                    "artifacts, and clipping; quantify exploitability with "
                    "shallow baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan a directory-per-class tree into a manifest")
    p.add_argument("root", help="corpus root; immediate subdirectories are classes")
    p.add_argument("--split", choices=corpus.SPLITS, default="train")
    p.add_argument("-o", "--out", required=True, help="output manifest CSV")
    _add_common(p)

    p = sub.add_parser("featurize", help="extract features for every manifest entry")
    p.add_argument("manifest", help="manifest CSV")
    p.add_argument("--extractor", choices=features.EXTRACTORS, default="mean-rgb")
    p.add_argument("--bins", type=int, default=16, help="histogram bins per channel")
    p.add_argument("-o", "--out", required=True, help="output feature CSV")
    _add_common(p)

    p = sub.add_parser("audit", help="run all defect detectors over a corpus")
    p.add_argument("train_manifest", help="manifest CSV of the training corpus")
    p.add_argument("--test-manifest", help="optional manifest CSV of the test corpus")
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--out-json", required=True, help="output report JSON")
    p.add_argument("--out-dir", required=True,
                   help="directory for per-class histogram CSVs and figures")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render matplotlib figures alongside the CSVs")
    _add_common(p)

    p = sub.add_parser("train", help="train a classifier on a feature CSV")
    p.add_argument("features_csv")
    p.add_argument("--model", choices=("forest", "softmax"), default="forest")
    p.add_argument("--split", default="train",
                   help="train on rows with this split tag (default train)")
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--features-per-split", type=int, default=None)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("-o", "--out", required=True, help="output model JSON")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a model on a feature CSV")
    p.add_argument("model", help="model JSON")
    p.add_argument("features_csv")
    p.add_argument("--split", default="test",
                   help="evaluate rows with this split tag (default test)")
    p.add_argument("-o", "--out", required=True, help="output per-class CSV")
    _add_common(p)

    p = sub.add_parser("perturb", help="robustness sweep over a test corpus")
    p.add_argument("model", help="model JSON")
    p.add_argument("test_manifest")
    p.add_argument("--extractor", choices=features.EXTRACTORS, default="mean-rgb")
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--jpeg", default="80,60,40,20",
                   help="comma-separated JPEG qualities ('' to skip)")
    p.add_argument("--hue", default="-10,10,-20,20",
                   help="comma-separated hue deltas in degrees; use the "
                        "--hue=-10,10 form for leading minus ('' to skip)")
    p.add_argument("-o", "--out", required=True, help="output sweep CSV")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a spec JSON")
    p.add_argument("spec_json")
    p.add_argument("out_root")
    _add_common(p)

    p = sub.add_parser("repro", help="end-to-end baseline comparison on a dataset root")
    p.add_argument("dataset_root",
                   help="directory containing train/test split subdirectories")
    p.add_argument("-o", "--out", default="repro_out",
                   help="output directory (default repro_out)")
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--trees", type=int, default=200)
    _add_common(p)

    return parser


def cmd_scan(args) -> int:
    manifest = corpus.scan_corpus(args.root, split=args.split)
    corpus.write_manifest(manifest, args.out)
    print(f"scanned {len(manifest)} images in {len(manifest.class_names)} classes "
          f"-> {args.out}")
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_featurize(args) -> int:
    manifest = corpus.read_manifest(args.manifest)
    table = features.featurize_corpus(manifest, extractor=args.extractor,
                                      bins=args.bins, threads=args.threads,
                                      strict=args.strict)
    features.write_feature_csv(table, args.out)
    print(f"featurized {len(table)} rows ({table.schema}) -> {args.out}")
    return 0


def _audit_one(manifest, args, calibration):
    return forensics.audit_corpus(
        manifest, bins=args.bins, calibration=calibration,
        saturation_threshold=0.05, threads=args.threads, strict=args.strict,
    )


def cmd_audit(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    calibration = forensics.calibrate_quality_bands(seed=args.seed)
    train_manifest = corpus.read_manifest(args.train_manifest)
    train_report = _audit_one(train_manifest, args, calibration)
    forensics.write_histogram_csv(train_report, out_dir / "histograms_train.csv")
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "train": train_report.to_dict(),
    }
    test_report = None
    if args.test_manifest:
        test_manifest = corpus.read_manifest(args.test_manifest)
        test_report = _audit_one(test_manifest, args, calibration)
        forensics.write_histogram_csv(test_report, out_dir / "histograms_test.csv")
        doc["test"] = test_report.to_dict()
        doc["train_test_shift"] = forensics.train_test_shift(train_report, test_report)
    with open(args.out_json, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    if args.figures:
        from . import plots

        plots.save_class_histograms(train_report, out_dir / "histograms_train.png")
        plots.save_blockiness_summary(train_report, out_dir / "blockiness_train.png")
        plots.save_mean_rgb_scatter(train_report.mean_features,
                                    out_dir / "mean_rgb_train.png")
        if test_report is not None:
            plots.save_class_histograms(test_report, out_dir / "histograms_test.png")
            plots.save_blockiness_summary(test_report, out_dir / "blockiness_test.png")
            plots.save_mean_rgb_scatter(test_report.mean_features,
                                        out_dir / "mean_rgb_test.png")
    flagged = sum(c.flagged for c in train_report.clipping)
    print(f"audited {train_report.n_images} train images; "
          f"{flagged} flagged for clipping -> {args.out_json}")
    return 0


def cmd_train(args) -> int:
    table = features.read_feature_csv(args.features_csv)
    if args.split:
        subset = table.filter_split(args.split)
        if len(subset) == 0:
            raise PatchAuditError(
                f"no rows with split {args.split!r} in {args.features_csv}"
            )
        table = subset
    if args.model == "forest":
        params = classify.ForestParams(
            n_trees=args.trees,
            max_depth=args.max_depth,
            min_samples_leaf=args.min_samples_leaf,
            features_per_split=args.features_per_split,
            bootstrap=not args.no_bootstrap,
        )
        model = classify.train_forest(table, params, seed=args.seed,
                                      threads=args.threads)
    else:
        params = classify.SoftmaxParams(learning_rate=args.learning_rate,
                                        epochs=args.epochs, l2=args.l2,
                                        seed=args.seed)
        model = classify.train_softmax(table, params)
    classify.save_model(model, args.out)
    print(f"trained {args.model} on {len(table)} rows ({table.schema}) -> {args.out}")
    return 0


def _print_evaluation(result, class_names) -> None:
    display = _display_names(class_names)
    width = max(len(n) for n in display + ["Overall Balanced Accuracy"]) + 2
    print(f"{'Class':<{width}}Recall, %")
    for name, recall in zip(display, result.per_class_recall):
        shown = "n/a" if recall != recall else f"{100 * recall:.1f}"
        print(f"{name:<{width}}{shown}")
    print(f"{'Overall Balanced Accuracy':<{width}}{100 * result.balanced_accuracy:.2f}")
    print(f"{'Overall Accuracy':<{width}}{100 * result.accuracy:.2f}")


def _write_evaluation_csv(result, class_names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# accuracy: {repr(result.accuracy)}\n")
        fh.write(f"# balanced_accuracy: {repr(result.balanced_accuracy)}\n")
        fh.write("class,recall,support\n")
        support = result.confusion.counts.sum(axis=1)
        for i, name in enumerate(class_names):
            recall = result.per_class_recall[i]
            shown = "" if recall != recall else repr(float(recall))
            fh.write(f"{name},{shown},{int(support[i])}\n")


def cmd_eval(args) -> int:
    model = classify.load_model(args.model)
    table = features.read_feature_csv(args.features_csv)
    if args.split:
        subset = table.filter_split(args.split)
        if len(subset) == 0:
            raise PatchAuditError(
                f"no rows with split {args.split!r} in {args.features_csv}"
            )
        table = subset
    result = classify.evaluate(model, table)
    _write_evaluation_csv(result, table.class_names, args.out)
    _print_evaluation(result, table.class_names)
    return 0


def cmd_perturb(args) -> int:
    model = classify.load_model(args.model)
    manifest = corpus.read_manifest(args.test_manifest)
    qualities = tuple(int(q) for q in args.jpeg.split(",") if q)
    deltas = tuple(float(d) for d in args.hue.split(",") if d)
    spec = perturb.PerturbationSpec(jpeg_qualities=qualities, hue_deltas=deltas)
    table = perturb.robustness_sweep(model, manifest, extractor=args.extractor,
                                     spec=spec, bins=args.bins,
                                     threads=args.threads)
    table.write_csv(args.out)
    if args.figures:
        from . import plots

        plots.save_robustness_chart(table, Path(args.out).with_suffix(".png"))
    for row in table.rows:
        print(f"{row.perturbation:<10} accuracy={row.accuracy:.4f} "
              f"delta={row.delta_accuracy:+.4f}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.SynthSpec.from_json(args.spec_json)
    manifest = synth.generate_corpus(spec, args.out_root, threads=args.threads)
    print(f"generated {len(manifest)} images in {len(manifest.class_names)} "
          f"classes -> {args.out_root}")
    return 0


def _find_split_roots(root: Path) -> tuple[Path, Path]:
    if (root / "train").is_dir() and (root / "test").is_dir():
        return root / "train", root / "test"
    train, test = (root / d for d in NCT_SPLIT_DIRS)
    if train.is_dir() and test.is_dir():
        return train, test
    raise PatchAuditError(
        f"{root} must contain train/ and test/ (or "
        f"{NCT_SPLIT_DIRS[0]}/ and {NCT_SPLIT_DIRS[1]}/) subdirectories"
    )


def cmd_repro(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_root, test_root = _find_split_roots(Path(args.dataset_root))

    train_manifest = corpus.scan_corpus(train_root, split="train")
    test_manifest = corpus.scan_corpus(test_root, split="test")
    corpus.write_manifest(train_manifest, out / "manifest_train.csv")
    corpus.write_manifest(test_manifest, out / "manifest_test.csv")

    summary = {"format_version": REPORT_FORMAT_VERSION, "methods": {}}
    results = {}
    for method, extractor in (("meanrgb", "mean-rgb"), ("hist", "hist")):
        tables = {}
        for split, manifest in (("train", train_manifest), ("test", test_manifest)):
            table = features.featurize_corpus(manifest, extractor=extractor,
                                              bins=args.bins, threads=args.threads,
                                              strict=args.strict)
            features.write_feature_csv(table, out / f"features_{method}_{split}.csv")
            tables[split] = table
        params = classify.ForestParams(n_trees=args.trees)
        model = classify.train_forest(tables["train"], params, seed=args.seed,
                                      threads=args.threads)
        classify.save_model(model, out / f"model_{method}.json")
        result = classify.evaluate(model, tables["test"])
        _write_evaluation_csv(result, tables["test"].class_names,
                              out / f"eval_{method}.csv")
        results[method] = result
        summary["methods"][method] = {
            "schema": tables["train"].schema,
            "accuracy": result.accuracy,
            "balanced_accuracy": result.balanced_accuracy,
            "per_class_recall": [
                None if r != r else float(r) for r in result.per_class_recall
            ],
        }
    with open(out / "repro_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")

    display = _display_names(train_manifest.class_names)
    width = max(len(n) for n in display + ["Overall Balanced Accuracy"]) + 2
    print(f"{'Class':<{width}}{'mean-rgb + forest':>20}{'histogram + forest':>20}")
    for i, name in enumerate(display):
        cells = []
        for method in ("meanrgb", "hist"):
            r = results[method].per_class_recall[i]
            cells.append("n/a" if r != r else f"{100 * r:.1f}")
        print(f"{name:<{width}}{cells[0]:>20}{cells[1]:>20}")
    ba = [f"{100 * results[m].balanced_accuracy:.2f}" for m in ("meanrgb", "hist")]
    acc = [f"{100 * results[m].accuracy:.2f}" for m in ("meanrgb", "hist")]
    print(f"{'Overall Balanced Accuracy':<{width}}{ba[0]:>20}{ba[1]:>20}")
    print(f"{'Overall Accuracy':<{width}}{acc[0]:>20}{acc[1]:>20}")
    return 0


COMMANDS = {
    "scan": cmd_scan,
    "featurize": cmd_featurize,
    "audit": cmd_audit,
    "train": cmd_train,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "synth": cmd_synth,
    "repro": cmd_repro,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0:
        parser.error("--seed must be non-negative")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (PatchAuditError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
