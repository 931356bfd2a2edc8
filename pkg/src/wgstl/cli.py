"""Command-line interface: ``wgstl <subcommand> ...``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or validation error.
Options may come from ``--config FILE`` (YAML or JSON); flags override it.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import yaml

from . import io
from .engine import ParamStore, forward
from .graph import (GraphError, constant_from_sample, impute_zeros, next_step_dim, radius_graph,
                    split, window)
from .logic import (And, EvaluationError, GraphOp, Or, Predicate, StructureSyntaxError, Temporal,
                    TemplateError, boolean_sat, crisp_robustness, format_predicate, format_vector,
                    parse_formula, parse_structure, predicate_names, print_formula, to_text, walk)
from .schema import SchemaError
from .synth import SynthesisError, synth_dataset
from .train import TrainConfig, TrainedModel, TrainingError, evaluate, predict, train

log = logging.getLogger("wgstl")


class UsageError(Exception):
    pass


def _text_or_file(value: str) -> str:
    if value is None:
        return None
    p = Path(value)
    if "(" not in value and p.exists():
        return p.read_text()
    return value


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return doc


def _opt(args, cfg, name, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, cfg.get(name.replace("_", "-"), default))


def _train_config(args, cfg) -> TrainConfig:
    base = dict(cfg.get("train", {}))
    for f in fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is None:
            v = cfg.get(f.name)
        if v is not None:
            base[f.name] = v
    return TrainConfig.from_dict(base)


def _load_data(path, impute: bool):
    if not path:
        raise UsageError("no dataset given (--data)")
    ds = io.load_any(path)
    if impute:
        ds = impute_zeros(ds)
    return ds


def _apply_window(ds, args, cfg):
    K = _opt(args, cfg, "window")
    if not K:
        return ds
    stride = _opt(args, cfg, "stride", 1)
    rule_name = _opt(args, cfg, "label_rule", "constant")
    if rule_name == "constant":
        rule = constant_from_sample()
    else:
        dim = _opt(args, cfg, "label_dim")
        if dim is None:
            raise UsageError("--label-rule next-step needs --label-dim")
        idx = ds.dim_names.index(dim) if dim in ds.dim_names else int(dim)
        rule = next_step_dim(idx, float(_opt(args, cfg, "label_threshold", 0.0)),
                             _opt(args, cfg, "label_node") or _roots(args, cfg)[0])
    return window(ds, int(K), int(stride), rule)


def _roots(args, cfg):
    r = args.root if getattr(args, "root", None) else cfg.get("root")
    if r is None:
        raise UsageError("no root node given (--root)")
    return [r] if isinstance(r, str) else list(r)


def _check_predicates(template, cfg, dim):
    decl = cfg.get("predicates") or {}
    for name in predicate_names(template):
        if name in decl and int(decl[name].get("dims", dim)) != dim:
            raise UsageError(f"predicate {name} declared with {decl[name]['dims']} dims, "
                             f"data has {dim}")


def _train_one(job):
    train_ds, template, config, root = job
    return train(train_ds, template, config, root)


def _epoch_table(rows) -> str:
    lines = [f"{'stage':<11}{'epoch':>7}{'loss':>16}{'accuracy':>10}"]
    for r in rows:
        lines.append(f"{r['stage']:<11}{r['epoch']:>7}{r['loss']:>16.6g}{r['accuracy']:>9.2f}%")
    return "\n".join(lines)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    structure = _text_or_file(_opt(args, cfg, "structure"))
    if not structure:
        raise UsageError("no structure given (--structure)")
    template = parse_structure(structure)
    impute = bool(_opt(args, cfg, "impute_zeros", False))
    ds = _apply_window(_load_data(_opt(args, cfg, "data"), impute), args, cfg)
    roots = _roots(args, cfg)
    for r in roots:
        if r not in ds.graph.nodes:
            raise UsageError(f"root node {r!r} is not in the graph")
    _check_predicates(template, cfg, ds.dim)
    config = _train_config(args, cfg)
    test_path = _opt(args, cfg, "test_data")
    if test_path:
        train_ds = ds
        test_ds = _apply_window(_load_data(test_path, impute), args, cfg)
    else:
        frac = float(_opt(args, cfg, "train_fraction", 0.8))
        train_ds, test_ds = split(ds, frac, config.seed)
    out = Path(_opt(args, cfg, "out", "out"))
    out.mkdir(parents=True, exist_ok=True)

    jobs = [(train_ds, template, config, r) for r in roots]
    t0 = time.perf_counter()
    n_jobs = int(_opt(args, cfg, "jobs", 1))
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            models = list(ex.map(_train_one, jobs))
    else:
        models = [_train_one(j) for j in jobs]
    elapsed = time.perf_counter() - t0

    summary = []
    report = []
    for root, model in zip(roots, models):
        name = "model.json" if len(roots) == 1 else f"model_{root}.json"
        model.save(out / name)
        train_acc = evaluate(model, train_ds)
        test_acc = evaluate(model, test_ds) if len(test_ds) else None
        text = print_formula(model.template, model.assignment, model.params, ds.dim_names)
        report += [f"root: {root}", "formula:", text, "",
                   f"train accuracy: {train_acc:.2f}%",
                   f"test accuracy: {test_acc:.2f}%" if test_acc is not None else "test accuracy: n/a",
                   "", _epoch_table(model.training_log), ""]
        summary.append({"root": root, "model": name, "assignment": model.assignment,
                        "train_accuracy": train_acc, "test_accuracy": test_acc,
                        "n_train": len(train_ds), "n_test": len(test_ds), "formula": text})
        with open(out / f"training_log_{root}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, ["stage", "epoch", "loss", "accuracy"])
            w.writeheader()
            w.writerows(model.training_log)
    (out / "report.txt").write_text("\n".join(report))
    (out / "report.json").write_text(json.dumps({"runs": summary, "seconds": elapsed}, indent=1))
    for s in summary:
        print(f"[{s['root']}] {s['formula'].splitlines()[0]}")
        print(f"[{s['root']}] train accuracy: {s['train_accuracy']:.2f}%"
              + (f", test accuracy: {s['test_accuracy']:.2f}%" if s["test_accuracy"] is not None else ""))
    print(f"wrote {out}")
    return 0


def _model_and_data(args):
    model = TrainedModel.load(args.model)
    ds = _load_data(args.data, args.impute_zeros)
    if len(ds) == 0:
        raise UsageError("dataset is empty")
    if ds.dim != len(model.dim_names):
        raise UsageError(f"dimension mismatch: model has {len(model.dim_names)} dimensions, "
                         f"data has {ds.dim}")
    return model, ds


def cmd_eval(args) -> int:
    model, ds = _model_and_data(args)
    acc = evaluate(model, ds)
    print(f"samples: {len(ds)}")
    print(f"accuracy: {acc:.2f}%")
    return 0


def cmd_predict(args) -> int:
    model, ds = _model_and_data(args)
    r = model.robustness(ds)
    pred = predict(model, ds)
    rows = [{"sample": i, "robustness": float(r[i]), "predicted": int(pred[i]),
             "label": s.label} for i, s in enumerate(ds.samples)]
    print(f"{'sample':>6} {'robustness':>12} {'predicted':>9} {'label':>5}")
    for row in rows:
        print(f"{row['sample']:>6} {row['robustness']:>12.6f} {row['predicted']:>9d} {row['label']:>5d}")
    if args.out:
        _write_csv(args.out, rows)
    return 0


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, list(rows[0]) if rows else ["sample"])
        w.writeheader()
        w.writerows(rows)


def _load_predicates(path) -> dict[str, Predicate]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return {k: Predicate(k, tuple(float(x) for x in v["a"]), float(v.get("c", 0.0)))
            for k, v in doc.items()}


def cmd_monitor(args) -> int:
    ds = _load_data(args.data, args.impute_zeros)
    if args.model:
        model = TrainedModel.load(args.model)
        formula, preds = model.formula, model.params.predicates()
        params = model.params
    else:
        if not (args.formula and args.predicates):
            raise UsageError("monitor needs --model, or --formula with --predicates")
        formula = parse_formula(_text_or_file(args.formula))
        preds = _load_predicates(args.predicates)
        params = None
    for n in walk(formula):
        if isinstance(n, (Temporal, GraphOp)) and n.kind in ("tempX", "graphX"):
            raise UsageError("monitor needs a formula with every operator determined")
    nodes = list(ds.graph.nodes) if args.all_nodes else [args.root or (args.model and model.root)]
    if nodes[0] is None:
        raise UsageError("no root node given (--root or --all-nodes)")
    for v in nodes:
        if v not in ds.graph.nodes:
            raise UsageError(f"node {v!r} is not in the graph")
    mode = "soft" if args.soft else "crisp"
    rows = []
    for v in nodes:
        if mode == "soft":
            try:
                if params is not None and v == model.root:
                    p = params
                else:
                    p = ParamStore.init(formula, ds.graph, v, ds.dim, sigma=args.sigma,
                                        relaxed=False, coef_scale=0.0)
                    for name, pr in preds.items():
                        p.set(f"a:{name}", pr.a)
                        p.set(f"c:{name}", [pr.c])
                r, _ = forward(formula, p, ds, ds.graph, v)
            except EvaluationError as e:
                if not args.all_nodes:
                    raise
                log.info("%s", e)
                r = [None] * len(ds)
        for i, s in enumerate(ds.samples):
            if mode == "soft":
                rob = r[i]
            else:
                try:
                    rob = crisp_robustness(s.trajectory, ds.graph, v, 0, formula, preds)
                except EvaluationError:
                    if not args.all_nodes:
                        raise
                    rob = None
            sat = None
            if rob is not None:
                sat = (boolean_sat(s.trajectory, ds.graph, v, 0, formula, preds)
                       if mode == "crisp" else bool(rob > 0))
            rows.append({"sample": i, "node": v, "label": s.label,
                         "robustness": None if rob is None else float(rob), "satisfied": sat})
    print(f"# {mode} robustness")
    print(f"{'sample':>6} {'node':>12} {'label':>5} {'robustness':>12} {'satisfied':>9}")
    for row in rows:
        rob = "n/a" if row["robustness"] is None else f"{row['robustness']:.6f}"
        sat = "n/a" if row["satisfied"] is None else str(row["satisfied"]).lower()
        print(f"{row['sample']:>6} {row['node']:>12} {row['label']:>5} {rob:>12} {sat:>9}")
    if args.csv:
        _write_csv(args.csv, rows)
    return 0


def cmd_synth(args) -> int:
    graph = io.load_graph(args.graph)
    formula = parse_formula(_text_or_file(args.formula))
    preds = _load_predicates(args.predicates)
    missing = set(predicate_names(formula)) - set(preds)
    if missing:
        raise UsageError(f"no parameters for predicate(s) {sorted(missing)}")
    dims = tuple(args.dims.split(",")) if args.dims else tuple(
        f"x{j + 1}" for j in range(len(next(iter(preds.values())).a)))
    ds = synth_dataset(graph, formula, preds, root=args.root, n_pos=args.n_pos, n_neg=args.n_neg,
                       noise=args.noise, seed=args.seed, horizon=args.horizon, dim_names=dims,
                       margin=args.margin)
    io.save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples ({args.n_pos} positive, {args.n_neg} negative) to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    try:
        with open(args.model) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise SchemaError("model:<root>", f"not valid JSON ({e})") from None
    model = TrainedModel.from_dict(doc)
    p = model.params
    norm = p.normalized()
    out = [f"structure: {doc['structure_text']}",
           f"formula:   {to_text(model.formula)}",
           f"root: {model.root}"]
    out.append(f"sigma: {p.sigma}")
    if model.assignment:
        out.append("operators: " + ", ".join(f"{k}={v}" for k, v in model.assignment.items()))
    for n in walk(model.formula):
        if isinstance(n, (And, Or)):
            w = norm[f"w:{n.slot}"]
            out.append(f"{n.slot} {'and' if isinstance(n, And) else 'or'}: "
                       f"w = {format_vector(w)}  (sum {w.sum():.6f})")
        elif isinstance(n, Temporal):
            w = norm[f"omega:{n.slot}"]
            out.append(f"{n.slot} {n.kind} [{n.lo} {n.hi}]: Ω = {format_vector(w)}  "
                       f"(sum {w.sum():.6f})")
        elif isinstance(n, GraphOp):
            for key in [k for k in norm if k.startswith(f"W:{n.slot}@")]:
                w = norm[key]
                at = key.split("@", 1)[1]
                out.append(f"{n.slot} {n.kind} at {at} over ({', '.join(p.neighbor_order[key])}): "
                           f"𝒲 = {format_vector(w)}  (sum {w.sum():.6f})")
    for name, pr in p.predicates().items():
        out.append(f"{name} := {format_predicate(pr, model.dim_names)}")
    if model.training_log:
        last = model.training_log[-1]
        best = min(r["loss"] for r in model.training_log if r["stage"] == last["stage"])
        out.append(f"training: {len(model.training_log)} epochs logged, best {last['stage']} "
                   f"loss {best:.6g}")
    print("\n".join(out))
    return 0


def cmd_make_graph(args) -> int:
    coords = io.load_coords(args.coords)
    g = radius_graph(coords, args.radius_km)
    doc = io.graph_to_dict(g)
    text = json.dumps(doc, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote graph with {len(g.nodes)} nodes and {g.n_edges} edges to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wgstl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="learn operators and parameters for a structure")
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--test-data")
    t.add_argument("--structure", help="structure text or a file containing it")
    t.add_argument("--root", action="append", help="root node (repeat for per-region models)")
    t.add_argument("--out")
    t.add_argument("--train-fraction", type=float)
    t.add_argument("--impute-zeros", action="store_true", default=None)
    t.add_argument("--window", type=int, help="window length K_I")
    t.add_argument("--stride", type=int)
    t.add_argument("--label-rule", choices=["constant", "next-step"])
    t.add_argument("--label-dim")
    t.add_argument("--label-threshold", type=float)
    t.add_argument("--label-node")
    t.add_argument("--jobs", type=int)
    for f in fields(TrainConfig):
        t.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), dest=f.name)
    t.set_defaults(func=cmd_train)

    for name, func, hlp in (("eval", cmd_eval, "accuracy of a model on a dataset"),
                            ("predict", cmd_predict, "per-sample robustness and labels")):
        e = sub.add_parser(name, help=hlp)
        e.add_argument("--model", required=True)
        e.add_argument("--data", required=True)
        e.add_argument("--impute-zeros", action="store_true")
        if name == "predict":
            e.add_argument("--out", help="CSV output")
        e.set_defaults(func=func)

    m = sub.add_parser("monitor", help="crisp or smooth robustness of a formula")
    m.add_argument("--data", required=True)
    m.add_argument("--model")
    m.add_argument("--formula", help="hardened formula text or file")
    m.add_argument("--predicates", help="YAML/JSON {name: {a: [...], c: x}}")
    m.add_argument("--root")
    m.add_argument("--all-nodes", action="store_true")
    g = m.add_mutually_exclusive_group()
    g.add_argument("--crisp", action="store_true")
    g.add_argument("--soft", action="store_true")
    m.add_argument("--sigma", type=float, default=1.0)
    m.add_argument("--csv")
    m.add_argument("--impute-zeros", action="store_true")
    m.set_defaults(func=cmd_monitor)

    s = sub.add_parser("synth", help="generate a labeled dataset from a formula")
    s.add_argument("--graph", required=True, help="graph file or dataset file")
    s.add_argument("--formula", required=True)
    s.add_argument("--predicates", required=True)
    s.add_argument("--root", required=True)
    s.add_argument("--n-pos", type=int, default=50)
    s.add_argument("--n-neg", type=int, default=50)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--margin", type=float, default=0.5)
    s.add_argument("--horizon", type=int)
    s.add_argument("--dims", help="comma-separated dimension names")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    i = sub.add_parser("inspect", help="print a model's formula and normalized weights")
    i.add_argument("--model", required=True)
    i.set_defaults(func=cmd_inspect)

    g = sub.add_parser("make-graph", help="radius graph from node coordinates")
    g.add_argument("--coords", required=True, help="JSON {id: [lat, lon]} or CSV id,lat,lon")
    g.add_argument("--radius-km", type=float, default=300.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_make_graph)
    return ap


USAGE_ERRORS = (UsageError, SchemaError, StructureSyntaxError, TemplateError, GraphError,
                EvaluationError, FileNotFoundError, KeyError, ValueError, json.JSONDecodeError)
RUNTIME_ERRORS = (TrainingError, SynthesisError, FloatingPointError, RuntimeError, OSError)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RUNTIME_ERRORS[:3] as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except USAGE_ERRORS as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
