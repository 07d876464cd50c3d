"""Command-line front end.

    otclean simulate --out DIR [--classes K --dim D --if IF --noise joint --eta 0.5 ...]
    otclean extract --train X.otsb --labels L.csv --out DIR [--config FILE] [pipeline flags]
    otclean evaluate --subset subset.csv --labels L.csv
    otclean ot solve --cost D.csv [--a ... --b ...] [--gamma G | --exact]

Exit status is 0 on success, 2 on bad arguments and 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import io
from .datamodel import EmbeddingSet
from .errors import MissingTruth, OTCleanError
from .metrics import imbalance_factor, noise_ratio, per_class_accuracy, pseudo_label_quality, shot_partition_report
from .ot import SinkhornConfig, exact_ot, plan_objective, sinkhorn
from .pipeline import LABELERS, PipelineConfig, run_pipeline
from .simkit import NOISE_MODELS, SimSpec, sample_gaussian_mixture
from .weighting import SCHEMES

log = logging.getLogger("otclean")


def _on_off(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("on", "true", "1", "yes"):
        return True
    if value in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


def _optional_float(text: str):
    return None if str(text).strip().lower() in ("", "none", "auto") else float(text)


# PipelineConfig field -> parser for both flag and config-file values
_PIPELINE_TYPES = {
    "epochs": int, "batch_size": int, "alpha": float, "beta": float, "gamma": float,
    "weighting": str, "icf_r": float, "cost": str, "update_counts": _on_off, "seed": int,
    "sinkhorn_iters": int, "sinkhorn_tol": float, "clf_epochs": int, "clf_step": _optional_float,
    "clf_l2": float, "labeler": str, "threads": int,
}
_CHOICES = {"weighting": SCHEMES, "cost": ("cosine", "euclidean"), "labeler": LABELERS}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline (flags override --config, which overrides defaults)")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = _PIPELINE_TYPES[f.name]
        kw = {"default": None, "dest": f.name, "help": f"default {f.default}"}
        if f.name == "update_counts":
            kw.update(type=_on_off, metavar="{on,off}")
        elif f.name in _CHOICES:
            kw.update(choices=_CHOICES[f.name])
        else:
            kw["type"] = kind
        g.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otclean", description="Clean, class-balanced subset extraction by entropic OT.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="write a synthetic long-tailed noisy embedding set")
    sim.add_argument("--out", required=True, type=Path, help="output directory")
    sim.add_argument("--classes", type=int, default=10)
    sim.add_argument("--dim", type=int, default=32)
    sim.add_argument("--head-count", type=int, default=500, help="samples in the largest class")
    sim.add_argument("--if", dest="imbalance", type=float, default=100.0, help="imbalance factor")
    sim.add_argument("--sep", type=float, default=10.0, help="mean separation in within-class std units")
    sim.add_argument("--std", type=float, default=1.0, help="within-class standard deviation")
    sim.add_argument("--noise", choices=NOISE_MODELS, default="joint")
    sim.add_argument("--eta", type=float, default=0.5)
    sim.add_argument("--target-class", type=int, default=None, help="asym noise target (default: smallest)")
    sim.add_argument("--test-per-class", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=cmd_simulate)

    ext = sub.add_parser("extract", help="run the epoch loop and write the clean subset")
    ext.add_argument("--train", required=True, type=Path, help="training embeddings (.otsb)")
    ext.add_argument("--labels", required=True, type=Path, help="training label CSV")
    ext.add_argument("--test", type=Path, help="optional test embeddings (.otsb)")
    ext.add_argument("--test-labels", type=Path, help="label CSV for --test")
    ext.add_argument("--classes", type=int, default=None, help="class count (default: inferred)")
    ext.add_argument("--out", required=True, type=Path, help="output directory")
    ext.add_argument("--config", type=Path, help="flat key = value file with pipeline settings")
    _add_pipeline_flags(ext)
    ext.set_defaults(func=cmd_extract)

    ev = sub.add_parser("evaluate", help="score a subset CSV against ground truth")
    ev.add_argument("--subset", required=True, type=Path)
    ev.add_argument("--labels", required=True, type=Path, help="label CSV with a truth column")
    ev.set_defaults(func=cmd_evaluate)

    ot = sub.add_parser("ot", help="transport solver utilities")
    ot_sub = ot.add_subparsers(dest="ot_command", required=True, parser_class=_Parser)
    solve = ot_sub.add_parser("solve", help="solve one problem from a cost CSV and print the plan")
    solve.add_argument("--cost", required=True, type=Path, help="n x K cost matrix CSV (no header)")
    solve.add_argument("--a", type=str, default=None, help="row marginal, comma separated (default uniform)")
    solve.add_argument("--b", type=str, default=None, help="column marginal, comma separated (default uniform)")
    solve.add_argument("--gamma", type=float, default=1e-2)
    solve.add_argument("--sinkhorn-iters", type=int, default=1000)
    solve.add_argument("--sinkhorn-tol", type=float, default=1e-9)
    solve.add_argument("--exact", action="store_true", help="unregularized transportation simplex instead")
    solve.add_argument("--out", type=Path, default=None, help="plan CSV path (default stdout)")
    solve.set_defaults(func=cmd_ot_solve)
    return parser


def cmd_simulate(args) -> int:
    spec = SimSpec(
        num_classes=args.classes, dim=args.dim, head_count=args.head_count, imbalance=args.imbalance,
        separation=args.sep, within_std=args.std, noise=args.noise, eta=args.eta,
        target_class=args.target_class, test_per_class=args.test_per_class, seed=args.seed,
    )
    train, train_labels, test, test_labels = sample_gaussian_mixture(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_embeddings(args.out / "train.otsb", train)
    io.write_labels(args.out / "train_labels.csv", train.ids, train_labels)
    io.write_embeddings(args.out / "test.otsb", test)
    io.write_labels(args.out / "test_labels.csv", test.ids, test_labels)
    log.info("wrote %d train and %d test rows to %s", train.n, test.n, args.out)
    return 0


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the config file, then explicitly given flags."""
    values = {}
    if getattr(args, "config", None) is not None:
        for key, raw in io.read_config(args.config).items():
            if key not in _PIPELINE_TYPES:
                raise OTCleanError(f"{args.config}: unknown setting {key!r}")
            try:
                values[key] = _PIPELINE_TYPES[key](raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise OTCleanError(f"{args.config}: bad value for {key}: {exc}") from None
            if key in _CHOICES and values[key] not in _CHOICES[key]:
                raise OTCleanError(f"{args.config}: {key} must be one of {_CHOICES[key]}")
    for key in _PIPELINE_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    return replace(PipelineConfig(), **values)


def _load_split(emb_path, label_path, num_classes):
    ids, labels = io.read_labels(label_path, num_classes)
    return io.read_embeddings(emb_path, ids=ids), labels


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    if (args.test is None) != (args.test_labels is None):
        raise OTCleanError("--test and --test-labels must be given together")
    data, labels = _load_split(args.train, args.labels, args.classes)
    test = test_labels = None
    if args.test is not None:
        test, test_labels = _load_split(args.test, args.test_labels, labels.num_classes)

    args.out.mkdir(parents=True, exist_ok=True)
    report_path = args.out / "epochs.jsonl"
    report_path.write_text("", encoding="utf-8")

    def stream(report):
        io.append_jsonl(report_path, report.to_dict())
        log.info("epoch %d: kept %d, IF %s, NR %s", report.epoch, report.subset_size,
                 report.imbalance_factor, report.noise_ratio)

    out = run_pipeline(data, labels, cfg, test, test_labels, on_epoch=stream)
    io.write_subset(args.out / "subset.csv", data.ids, out.result)
    bank = out.prototypes
    io.write_embeddings(args.out / "prototypes.otsb",
                        EmbeddingSet(ids=np.arange(bank.num_classes, dtype=np.uint64), features=bank.prototypes))
    return 0


def evaluate_subset(ids, pseudo, kept, label_ids, labels) -> dict:
    """Metrics for a subset CSV; AUC scores are the one-hot pseudo labels."""
    if not labels.has_truth:
        raise MissingTruth("evaluate needs a label CSV with a truth column")
    row_of = {int(i): r for r, i in enumerate(label_ids)}
    missing = [int(i) for i in ids if int(i) not in row_of]
    if missing:
        raise OTCleanError(f"{len(missing)} subset ids are absent from the label file, e.g. {missing[0]}")
    rows = np.array([row_of[int(i)] for i in ids], dtype=np.int64)
    k = labels.num_classes
    observed, truth = labels.observed[rows], labels.truth[rows]
    if pseudo.size and (pseudo.min() < 0 or pseudo.max() >= k):
        raise OTCleanError(f"pseudo labels must lie in [0, {k})")
    counts = np.bincount(observed[kept], minlength=k)
    quality = pseudo_label_quality(pseudo, np.eye(k)[pseudo], truth)
    recall = per_class_accuracy(pseudo, truth, k)
    truth_counts = np.bincount(truth, minlength=k)
    present = truth_counts > 0
    shots = shot_partition_report(recall[present], truth_counts[present])
    return {
        "subset_size": int(kept.sum()),
        "imbalance_factor": imbalance_factor(counts) if counts.any() else None,
        "noise_ratio": noise_ratio(observed[kept], truth[kept]),
        "per_class_counts": counts.tolist(),
        "precision": quality["precision"],
        "recall": quality["recall"],
        "accuracy": quality["accuracy"],
        "macro_auc": quality["macro_auc"],
        "pseudo_imbalance_factor": imbalance_factor(np.bincount(pseudo, minlength=k)) if pseudo.size else None,
        "per_class_recall": recall.tolist(),
        "shot_recall": {name: shots[name] for name in ("many", "medium", "few") if name in shots},
    }


def cmd_evaluate(args) -> int:
    ids, pseudo, kept = io.read_subset(args.subset)
    label_ids, labels = io.read_labels(args.labels)
    print(io.dumps_json(evaluate_subset(ids, pseudo, kept, label_ids, labels)))
    return 0


def _marginal(text, size):
    if text is None:
        return np.full(size, 1.0 / size)
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


def cmd_ot_solve(args) -> int:
    d = io.read_matrix_csv(args.cost)
    a = _marginal(args.a, d.shape[0])
    b = _marginal(args.b, d.shape[1])
    if args.exact:
        plan, cost = exact_ot(d, a, b)
        summary = f"cost={cost!r}"
    else:
        cfg = SinkhornConfig(gamma=args.gamma, max_iterations=args.sinkhorn_iters, tolerance=args.sinkhorn_tol)
        t = sinkhorn(d, a, b, cfg)
        plan = t.plan
        cost, entropy, objective = plan_objective(t, d, args.gamma)
        summary = (f"cost={cost!r} entropy={entropy!r} objective={objective!r} "
                   f"iterations={t.iterations_used} residual={t.marginal_violation:.3e} converged={t.converged}")
    target = sys.stdout if args.out is None else open(args.out, "w", encoding="utf-8", newline="\n")
    try:
        np.savetxt(target, plan, delimiter=",", fmt="%.17g")
    finally:
        if args.out is not None:
            target.close()
    print(summary, file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OTCleanError, OSError, ValueError) as exc:
        print(f"otclean: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
