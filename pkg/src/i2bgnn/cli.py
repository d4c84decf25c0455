"""Command-line pipeline: ingest -> extract -> train -> eval, plus synth, baseline, sweep, depth.

Settings resolve as built-in defaults < config file (``key = value``) <
``I2B_<KEY>`` environment variables < command-line flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import baselines as bl
from .features import FeatureSchema, SchemaMismatch
from .gnn import TrainConfig, load_checkpoint, predict, prepare, save_checkpoint, train
from .gnn.train import deterministic_kernels
from .graph_store import (
    ingest_calls,
    ingest_edges,
    ingest_labels,
    load_graph,
    save_graph,
    write_calls_csv,
    write_edges_csv,
    write_labels_csv,
)
from .harness import BaselineConfig, ExperimentConfig, run_comparison, run_depth_study, run_split_sweep
from .metrics import evaluate
from .sampler import Bundle, SamplingConfig, extract_dataset, read_bundle, write_bundle
from .splits import SWEEP_RATIOS, make_split
from .synth import SynthConfig, generate

log = logging.getLogger("i2bgnn")

ENV_PREFIX = "I2B_"


@dataclass(frozen=True)
class Key:
    default: object
    help: str
    choices: tuple | None = None
    path: bool = False


KEYS: dict[str, Key] = {
    "workdir": Key(".", "directory that relative artifact paths resolve against", path=True),
    "edges": Key("edges.csv", "edges file (src,dst,volume,count[,timestamp])", path=True),
    "labels": Key("labels.csv", "labels file (account,label)", path=True),
    "calls": Key("calls.csv", "contract calls file (account,contract,count)", path=True),
    "graph": Key("graph.i2bg", "persisted transaction graph", path=True),
    "bundle": Key("bundle.jsonl", "subgraph bundle", path=True),
    "checkpoint": Key("model.ckpt", "model checkpoint", path=True),
    "history": Key("history.csv", "per-epoch training history", path=True),
    "metrics": Key("metrics.csv", "evaluation metrics", path=True),
    "comparison": Key("comparison.csv", "method comparison table", path=True),
    "depth_out": Key("depth.csv", "depth study table", path=True),
    "sweep_out": Key("sweep.csv", "split-ratio sweep table", path=True),
    "signatures": Key("", "optional FGSD signature export", path=True),
    "label_map": Key("0=0,1=1", "label token to class map, e.g. phisher=1,normal=0"),
    "top_c": Key(14885, "number of most-called contracts kept as features"),
    "hops": Key(2, "neighbourhood depth", choices=(1, 2)),
    "max_neighbors": Key(10, "per-node neighbour cap n_u"),
    "eosio": Key(False, "EOSIO mode: name-kind features and system-account stoplist"),
    "symmetrize": Key(True, "add the transpose to each subgraph adjacency"),
    "binary_features": Key(False, "0/1 contract-call features instead of ln(1+count)"),
    "variant": Key("t", "adjacency fed to the GCN: v (volume) or t (frequency)", choices=("v", "t")),
    "hidden": Key(128, "hidden width of both GCN layers"),
    "epochs": Key(50, "training epochs"),
    "batch": Key(30, "graphs per batch"),
    "dropout": Key(0.3, "dropout rate"),
    "lr": Key(1e-3, "Adam learning rate"),
    "seed": Key(0, "base seed for splits, init, dropout and shuffling"),
    "ratio": Key("1:1", "train:test ratio"),
    "n_seeds": Key(3, "number of resplits"),
    "raw_weights": Key(False, "normalize raw edge weights instead of ln(1+w)"),
    "row_normalize": Key(False, "row-normalize node features"),
    "threads": Key(1, "worker cap for extraction"),
    "strict_determinism": Key(False, "single-threaded kernels and sequential extraction"),
    "per_class": Key(500, "synthetic accounts per class"),
    "noise": Key(0.1, "synthetic class-profile blending in [0, 1]"),
    "vocab": Key(32, "synthetic contract vocabulary size"),
    "n_u_target": Key(10, "synthetic degree scale"),
    "k": Key(5, "kNN neighbours"),
    "bins": Key(128, "signature dimension"),
    "methods": Key("", "comma-separated methods (empty: the command default)"),
    "ratios": Key(",".join(SWEEP_RATIOS), "comma-separated train:test ratios"),
}

COMMAND_KEYS = {
    "ingest": ("edges", "labels", "label_map", "graph"),
    "synth": ("seed", "per_class", "noise", "vocab", "n_u_target", "edges", "labels", "calls", "graph"),
    "extract": ("graph", "calls", "top_c", "hops", "max_neighbors", "eosio", "symmetrize",
                "binary_features", "threads", "bundle"),
    "train": ("bundle", "variant", "hidden", "epochs", "batch", "dropout", "lr", "seed", "ratio",
              "raw_weights", "row_normalize", "checkpoint", "history"),
    "eval": ("bundle", "checkpoint", "metrics"),
    "baseline": ("bundle", "methods", "ratio", "n_seeds", "seed", "k", "bins", "variant", "hidden", "epochs",
                 "batch", "dropout", "lr", "raw_weights", "row_normalize", "comparison", "signatures"),
    "sweep": ("bundle", "ratios", "methods", "n_seeds", "seed", "hidden", "epochs", "batch", "dropout", "lr",
              "raw_weights", "row_normalize", "k", "bins", "sweep_out"),
    "depth": ("graph", "calls", "top_c", "max_neighbors", "eosio", "symmetrize", "binary_features", "methods",
              "ratio", "n_seeds", "seed", "hidden", "epochs", "batch", "dropout", "lr", "raw_weights",
              "row_normalize", "depth_out"),
}
COMMON = ("workdir", "threads", "strict_determinism")


class CliError(Exception):
    pass


def _coerce(key: str, raw):
    spec = KEYS[key]
    d = spec.default
    if isinstance(raw, str):
        s = raw.strip()
        if isinstance(d, bool):
            if s.lower() in ("1", "true", "yes", "on"):
                val = True
            elif s.lower() in ("0", "false", "no", "off"):
                val = False
            else:
                raise CliError(f"invalid boolean for {key}: {raw!r}")
        elif isinstance(d, int):
            try:
                val = int(s)
            except ValueError:
                raise CliError(f"invalid integer for {key}: {raw!r}") from None
        elif isinstance(d, float):
            try:
                val = float(s)
            except ValueError:
                raise CliError(f"invalid number for {key}: {raw!r}") from None
        else:
            val = s
    else:
        val = raw
    if spec.choices is not None and val not in spec.choices:
        raise CliError(f"invalid value for {key}: {val!r} (choose from {', '.join(map(str, spec.choices))})")
    return val


def read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            k, _, v = line.partition("=")
            k = k.strip().replace("-", "_")
            if k not in KEYS:
                raise CliError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = _coerce(k, v)
    return out


def resolve(args: argparse.Namespace, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    cfg = {k: spec.default for k, spec in KEYS.items()}
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for k in KEYS:
        env = environ.get(ENV_PREFIX + k.upper())
        if env is not None:
            cfg[k] = _coerce(k, env)
    for k in KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _coerce(k, v)
    return cfg


def provenance(cfg: dict, command: str) -> dict:
    """Resolved settings echoed into artifacts; the workdir is left out so reruns elsewhere match."""
    keys = sorted(set(COMMAND_KEYS[command]) | {"strict_determinism"})
    return {"command": command, **{k: cfg[k] for k in keys if k != "workdir"}}


def _path(cfg, key) -> str:
    p = cfg[key]
    return p if os.path.isabs(p) else os.path.join(cfg["workdir"], p)


def _require(path):
    if not os.path.exists(path):
        raise CliError(f"missing file: {path}")
    return path


def _comment(cfg, command) -> str:
    return "config: " + json.dumps(provenance(cfg, command), sort_keys=True)


def _train_config(cfg, variant=None, seed=None) -> TrainConfig:
    return TrainConfig(
        variant=variant or cfg["variant"],
        hidden=cfg["hidden"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch"],
        dropout=cfg["dropout"],
        lr=cfg["lr"],
        seed=cfg["seed"] if seed is None else seed,
        weight_transform="raw" if cfg["raw_weights"] else "log1p",
        row_normalize=cfg["row_normalize"],
        strict_determinism=cfg["strict_determinism"],
    )


def _experiment(cfg, ratio=None) -> ExperimentConfig:
    return ExperimentConfig(
        ratio=ratio or cfg["ratio"],
        n_seeds=cfg["n_seeds"],
        base_seed=cfg["seed"],
        train=_train_config(cfg),
        baseline=BaselineConfig(k=cfg["k"], bins=cfg["bins"], timescales=cfg["bins"]),
    )


DEFAULT_METHODS = {"baseline": "fgsd+knn,netlsd+knn", "sweep": "i2bgnn-t", "depth": "i2bgnn-v,i2bgnn-t"}


def _methods(cfg, command):
    raw = cfg["methods"] or DEFAULT_METHODS[command]
    return [m.strip() for m in raw.split(",") if m.strip()]


def cmd_ingest(cfg):
    graph = ingest_edges(_require(_path(cfg, "edges")))
    labels_path = _path(cfg, "labels")
    missing = []
    if os.path.exists(labels_path):
        graph, missing = graph.with_labels(ingest_labels(labels_path, cfg["label_map"]))
    save_graph(graph, _path(cfg, "graph"))
    print(f"ingested {graph.n_accounts} accounts, {graph.n_edges} edges, {len(graph.labels)} labels "
          f"({graph.dropped_self_loops} self-loops dropped, {len(missing)} labeled accounts without edges)")


def cmd_synth(cfg):
    data = generate(SynthConfig(seed=cfg["seed"], n_per_class=cfg["per_class"], noise=cfg["noise"],
                                n_u_target=cfg["n_u_target"], vocab_size=cfg["vocab"]))
    os.makedirs(cfg["workdir"], exist_ok=True)
    write_edges_csv(_path(cfg, "edges"), data.edge_rows)
    write_labels_csv(_path(cfg, "labels"), data.label_rows)
    write_calls_csv(_path(cfg, "calls"), data.call_rows)
    save_graph(data.graph, _path(cfg, "graph"))
    print(f"synthesized {len(data.label_rows)} labeled accounts, {data.graph.n_accounts} accounts, "
          f"{data.graph.n_edges} edges")


def cmd_extract(cfg):
    graph = load_graph(_require(_path(cfg, "graph")))
    calls_path = _path(cfg, "calls")
    calls = ingest_calls(calls_path, cfg["top_c"]) if os.path.exists(calls_path) else None
    vocab = calls.vocabulary if calls is not None else ()
    if not vocab and not cfg["eosio"]:
        raise CliError("no contract-call features and EOSIO mode off: feature dimension would be zero")
    schema = FeatureSchema(tuple(vocab), cfg["eosio"], "binary" if cfg["binary_features"] else "log1p")
    sampling = SamplingConfig(cfg["hops"], cfg["max_neighbors"], cfg["eosio"], cfg["symmetrize"])
    threads = 1 if cfg["strict_determinism"] else cfg["threads"]
    if not graph.labels:
        raise CliError("graph has no labeled accounts; ingest a labels file first")
    subgraphs = extract_dataset(graph, None, sampling, calls, schema, threads=threads)
    write_bundle(_path(cfg, "bundle"), Bundle(sampling, schema, subgraphs, provenance(cfg, "extract")))
    sizes = [sg.m for sg in subgraphs]
    print(f"extracted {len(subgraphs)} subgraphs, avg |V| {np.mean(sizes):.2f}, max |V| {max(sizes)}, "
          f"feature dim {schema.dim}")


def cmd_train(cfg):
    bundle = read_bundle(_require(_path(cfg, "bundle")))
    tc = _train_config(cfg)
    split = make_split(bundle.labels, cfg["ratio"], cfg["seed"], tc.val_fraction)
    result = train(bundle.subgraphs, tc, split.train, split.val)
    save_checkpoint(
        _path(cfg, "checkpoint"), result.params, bundle.schema.digest(), tc.variant,
        hyperparameters=tc.to_dict(),
        extra={"ratio": cfg["ratio"], "seed": cfg["seed"], "val_fraction": tc.val_fraction,
               "best_epoch": result.best_epoch, "run_config": provenance(cfg, "train")},
    )
    with open(_path(cfg, "history"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_comment(cfg, 'train')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_f1"])
        for h in result.history:
            w.writerow([h["epoch"], f"{h['train_loss']:.10f}", f"{h['val_f1']:.6f}"])
    print(f"trained {tc.epochs} epochs, best epoch {result.best_epoch}, "
          f"final train loss {result.history[-1]['train_loss']:.4f}")


def cmd_eval(cfg):
    bundle = read_bundle(_require(_path(cfg, "bundle")))
    params, header = load_checkpoint(_require(_path(cfg, "checkpoint")), bundle.schema.digest())
    hp, extra = header["hyperparameters"], header["extra"]
    split = make_split(bundle.labels, extra["ratio"], extra["seed"], extra["val_fraction"])
    prepared = prepare(bundle.subgraphs, header["variant"], hp["weight_transform"], hp["row_normalize"])
    pred = predict(params, prepared, split.test)
    rep = evaluate(pred, bundle.labels[split.test])
    with open(_path(cfg, "metrics"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_comment(cfg, 'eval')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "ratio", "seed", "n_test", "precision", "recall", "f1"])
        w.writerow([f"i2bgnn-{header['variant']}", extra["ratio"], extra["seed"], len(split.test),
                    f"{rep.precision:.6f}", f"{rep.recall:.6f}", f"{rep.f1:.6f}"])
    print(f"precision {rep.precision:.4f}  recall {rep.recall:.4f}  f1 {rep.f1:.4f}")


def cmd_baseline(cfg):
    bundle = read_bundle(_require(_path(cfg, "bundle")))
    table, _ = run_comparison(bundle.subgraphs, _methods(cfg, "baseline"), _experiment(cfg))
    table.to_csv(_path(cfg, "comparison"), _comment(cfg, "baseline"))
    if cfg["signatures"]:
        width = bl.calibrate_bin_width(bundle.subgraphs, cfg["bins"])
        sigs = [bl.fgsd_signature(sg, cfg["bins"], width) for sg in bundle.subgraphs]
        bl.write_signatures_csv(_path(cfg, "signatures"), sigs, bundle.labels,
                                [sg.graph_id for sg in bundle.subgraphs])
    print(table.render())


def cmd_sweep(cfg):
    bundle = read_bundle(_require(_path(cfg, "bundle")))
    ratios = [r.strip() for r in cfg["ratios"].split(",") if r.strip()]
    table = run_split_sweep(bundle.subgraphs, ratios, _methods(cfg, "sweep"), _experiment(cfg))
    table.to_csv(_path(cfg, "sweep_out"), _comment(cfg, "sweep"))
    print(table.render())


def cmd_depth(cfg):
    graph = load_graph(_require(_path(cfg, "graph")))
    calls_path = _path(cfg, "calls")
    calls = ingest_calls(calls_path, cfg["top_c"]) if os.path.exists(calls_path) else None
    schema = FeatureSchema(tuple(calls.vocabulary) if calls else (), cfg["eosio"],
                           "binary" if cfg["binary_features"] else "log1p")
    sampling = SamplingConfig(2, cfg["max_neighbors"], cfg["eosio"], cfg["symmetrize"])
    table = run_depth_study(graph, None, calls, schema, sampling, _methods(cfg, "depth"), _experiment(cfg))
    table.to_csv(_path(cfg, "depth_out"), _comment(cfg, "depth"))
    print(table.render())


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "extract": cmd_extract, "train": cmd_train,
    "eval": cmd_eval, "baseline": cmd_baseline, "sweep": cmd_sweep, "depth": cmd_depth,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="i2bgnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        for key in dict.fromkeys(COMMON + COMMAND_KEYS[name]):
            spec = KEYS[key]
            flag = "--" + key.replace("_", "-")
            if isinstance(spec.default, bool):
                p.add_argument(flag, action=argparse.BooleanOptionalAction, default=None, help=spec.help)
            else:
                typ = type(spec.default) if not spec.path else str
                p.add_argument(flag, type=typ, default=None, choices=spec.choices, help=spec.help)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        with deterministic_kernels(cfg["strict_determinism"]):
            COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SchemaMismatch as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
