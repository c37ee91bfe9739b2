"""Command-line interface.

Exit codes: 0 success, 1 I/O or parse error, 2 invalid hierarchy structure,
3 evaluation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .demo import DemoConfig, default_demo_tree, run_demo
from .errors import EvaluationError, HierCosError, KOutOfRange, ParseError, StructureError, UnknownNode
from .hierarchy import read_hierarchy, serialize_hierarchy
from .inference import MODES
from .metrics import correct_order_fraction, evaluate, hops_trace, lca_rows
from .objective import WEIGHT_ORDERS
from .predfiles import derive_levels, fmt, read_levels, read_predictions, write_dense, write_levels
from .trainer import TrainConfig, save_checkpoint

DEFAULT_KS = (1, 5, 20)

log = logging.getLogger("hiercos")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _round(v):
    if isinstance(v, (list, tuple)):
        return [_round(u) for u in v]
    if isinstance(v, bool) or isinstance(v, int) or isinstance(v, str) or v is None:
        return v
    return float(fmt(v))


def _ks(arg, K):
    """Parse ``--ks``; the default list is clipped to K, explicit values are checked."""
    if arg is None:
        return tuple(k for k in DEFAULT_KS if k <= K)
    try:
        ks = tuple(int(t) for t in arg.split(",") if t.strip())
    except ValueError:
        raise ParseError(f"--ks expects comma-separated integers, got {arg!r}") from None
    for k in ks:
        if not 1 <= k <= K:
            raise KOutOfRange(f"k={k} outside [1, {K}]")
    return tuple(sorted(set(ks)))


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def report_text(report, fmt_name) -> str:
    if fmt_name == "json":
        d = report.to_dict()
        d["metrics"] = {k: _round(v) for k, v in d["metrics"].items()}
        return json.dumps(d, indent=2) + "\n"
    lines = ["metric,value"] + [f"{k},{fmt(v)}" for k, v in report.rows()]
    return "\n".join(lines) + "\n"


def summary_line(report) -> str:
    parts = [f"samples={report.samples}", f"accuracy={fmt(report.accuracy)}", f"hops={fmt(report.hops)}",
             f"ms={fmt(report.ms)}"]
    if report.fpa is not None:
        parts.append(f"fpa={fmt(report.fpa)}")
    if report.tice is not None:
        parts.append(f"tice={fmt(report.tice)}")
    return " ".join(parts)


def _load_batch(args, tree):
    samples = read_predictions(args.predictions, tree)
    if not samples:
        raise EvaluationError("no prediction rows", None, args.predictions)
    if args.levels_file:
        read_levels(args.levels_file, tree, samples)
    else:
        derive_levels(tree, samples, args.mode)
    return samples


# -- commands ----------------------------------------------------------------


def cmd_validate_tree(args) -> int:
    path = args.path or args.hierarchy
    if path is None:
        raise ParseError("validate-tree needs a hierarchy path")
    tree = read_hierarchy(path)
    kl = ",".join(str(k) for k in tree.level_sizes)
    print(f"n={tree.n} H={tree.H} K={tree.K} K_l={kl}")
    return 0


def cmd_eval(args) -> int:
    tree = read_hierarchy(args.hierarchy)
    ks = _ks(args.ks, tree.K)
    report = evaluate(tree, _load_batch(args, tree), ks)
    _emit(report_text(report, args.format), args.out)
    if args.out is not None:
        print(summary_line(report))
    return 0


def cmd_order_analysis(args) -> int:
    tree = read_hierarchy(args.hierarchy)
    batch = _load_batch(args, tree)
    ks = tuple(sorted(set(_ks(args.ks, tree.K)) | {tree.K}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(tree, batch, ks)
    with open(out / "correct_order.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "fraction"])
        for k in range(1, tree.K + 1):
            w.writerow([k, fmt(correct_order_fraction(tree, batch, k))])
    M = lca_rows(tree, batch)
    with open(out / "lca_matrix.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "true_class", *(f"c{i}" for i in range(1, tree.K + 1))])
        for s, row in zip(batch, M):
            w.writerow([s.sample_id, s.true_leaf, *(fmt(int(v)) for v in row)])
    (out / f"report.{args.format}").write_text(report_text(report, args.format), encoding="utf-8")
    print(summary_line(report))
    return 0


def cmd_hops_trace(args) -> int:
    tree = read_hierarchy(args.hierarchy)
    batch = read_predictions(args.predictions, tree)
    if args.sample:
        ids = {s.sample_id: s for s in batch}
        for sid in args.sample:
            if sid not in ids:
                raise UnknownNode(f"{args.predictions}: no sample {sid!r}")
        batch = [ids[sid] for sid in args.sample]
    traces = [hops_trace(tree, s) for s in batch]
    if args.format == "json":
        text = json.dumps([{k: _round(v) for k, v in t.items()} for t in traces], indent=2) + "\n"
    else:
        lines = ["sample_id,true_class,position,z,z_hat,eta,s,s_max,hops"]
        for t in traces:
            for i, (z, zh, e) in enumerate(zip(t["z"], t["z_hat"], t["eta"]), start=1):
                lines.append(",".join([t["sample_id"], t["true_class"], str(i), fmt(z), fmt(zh), fmt(e),
                                       fmt(t["s"]), fmt(t["s_max"]), fmt(t["hops"])]))
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def cmd_demo_train(args) -> int:
    start = time.perf_counter()
    tree = read_hierarchy(args.hierarchy) if args.hierarchy else default_demo_tree()
    ks = _ks(args.ks, tree.K)
    tcfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, alpha=args.alpha,
                       seed=args.seed, depth=args.depth, hidden=args.hidden, weight_order=args.weights)
    cfg = DemoConfig(d_in=args.d_in, train_per_leaf=args.train_per_leaf, test_per_leaf=args.test_per_leaf,
                     sigma_node=args.sigma_node, sigma_obs=args.sigma_obs,
                     data_seed=args.seed if args.data_seed is None else args.data_seed,
                     train=tcfg, mode=args.mode, ks=ks)
    res = run_demo(cfg, tree)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hierarchy.tsv").write_text(serialize_hierarchy(tree), encoding="utf-8")
    with open(out / "loss_curve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "batch_loss"])
        for e, (a, b) in enumerate(zip(res.fit.loss_curve, res.fit.batch_loss_curve), start=1):
            w.writerow([e, fmt(a), fmt(b)])
    save_checkpoint(out / "checkpoint.json", res.fit.module, res.idx, tcfg)
    splits = [("train", res.train)] + ([("test", res.test)] if res.test is not None else [])
    for name, split in splits:
        split.report.extra["bayes_error_estimate"] = res.bayes_error
        (out / f"report_{name}.{args.format}").write_text(report_text(split.report, args.format), encoding="utf-8")
    name, split = splits[-1]
    write_dense(out / f"predictions_{name}.csv", tree, [s.sample_id for s in split.samples],
                [s.true_leaf for s in split.samples], split.scores)
    write_levels(out / f"levels_{name}.csv", tree, split.samples)
    log.info("demo-train finished in %.1f s", time.perf_counter() - start)
    print(f"{name}: {summary_line(split.report)} cosine_alignment={fmt(split.report.extra['cosine_alignment'])}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hiercos", description="Hierarchy-aware orthogonal subspaces and HOPS evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate-tree", help="check a hierarchy TSV and print its sizes")
    v.add_argument("path", nargs="?")
    v.add_argument("--hierarchy")
    v.set_defaults(func=cmd_validate_tree)

    def eval_flags(q, out_help):
        q.add_argument("--hierarchy", required=True)
        q.add_argument("--predictions", required=True)
        q.add_argument("--levels-file")
        q.add_argument("--ks", help="comma-separated cut-offs (default 1,5,20 clipped to K)")
        q.add_argument("--mode", choices=MODES, default="per-level")
        q.add_argument("--format", choices=("json", "csv"), default="json")
        q.add_argument("--out", help=out_help)

    e = sub.add_parser("eval", help="score a prediction file")
    eval_flags(e, "report path (default stdout)")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("order-analysis", help="correct-order fraction per k and LCA-distance matrix")
    eval_flags(o, "output directory")
    o.set_defaults(func=cmd_order_analysis)
    o.set_defaults(out=None)

    h = sub.add_parser("hops-trace", help="dump z, z_hat, eta, s and s_max per sample")
    h.add_argument("--hierarchy", required=True)
    h.add_argument("--predictions", required=True)
    h.add_argument("--sample", action="append", help="restrict to this sample id (repeatable)")
    h.add_argument("--format", choices=("json", "csv"), default="json")
    h.add_argument("--out")
    h.set_defaults(func=cmd_hops_trace)

    d = sub.add_parser("demo-train", help="train on synthetic features and evaluate")
    d.add_argument("--hierarchy", help="hierarchy TSV (default: balanced 2x2x4 tree)")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--d-in", type=int, default=64)
    d.add_argument("--train-per-leaf", type=int, default=50)
    d.add_argument("--test-per-leaf", type=int, default=20)
    d.add_argument("--sigma-node", type=float, default=1.0)
    d.add_argument("--sigma-obs", type=float, default=DemoConfig.sigma_obs)
    d.add_argument("--lr", type=float, default=DemoConfig().train.lr)
    d.add_argument("--epochs", type=int, default=DemoConfig().train.epochs)
    d.add_argument("--batch-size", type=int, default=32)
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--depth", type=int, default=5)
    d.add_argument("--hidden", type=int)
    d.add_argument("--weights", choices=WEIGHT_ORDERS, default="increasing")
    d.add_argument("--seed", type=int, default=0, help="initialisation and shuffling seed")
    d.add_argument("--data-seed", type=int, help="synthetic data seed (default: --seed)")
    d.add_argument("--mode", choices=MODES, default="per-level")
    d.add_argument("--ks")
    d.add_argument("--format", choices=("json", "csv"), default="json")
    d.set_defaults(func=cmd_demo_train)
    return p


def _exit_code(exc) -> int:
    if isinstance(exc, (ParseError, OSError, json.JSONDecodeError)):
        return 1
    if isinstance(exc, StructureError):
        return 2
    return 3


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "order-analysis" and args.out is None:
            parser.error("order-analysis requires --out DIR")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except (HierCosError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
