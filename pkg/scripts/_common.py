"""Shared flags and dataset construction for the experiment scripts."""
import argparse
import json
import os
from dataclasses import asdict

from i2bgnn.features import FeatureSchema
from i2bgnn.gnn import TrainConfig
from i2bgnn.harness import ExperimentConfig
from i2bgnn.sampler import SamplingConfig, extract_dataset
from i2bgnn.synth import SynthConfig, generate


def base_parser(description, out):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--per-class", type=int, default=500)
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--max-neighbors", type=int, default=10)
    ap.add_argument("--n-seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--out", default=out)
    return ap


def synthetic(args):
    synth = SynthConfig(seed=args.seed, n_per_class=args.per_class, noise=args.noise)
    data = generate(synth)
    return data, FeatureSchema(data.calls.vocabulary), synth


def subgraphs(data, schema, hops, max_neighbors):
    return extract_dataset(data.graph, data.labeled, SamplingConfig(hops, max_neighbors), data.calls, schema)


def experiment(args, ratio="1:1"):
    return ExperimentConfig(ratio=ratio, n_seeds=args.n_seeds, base_seed=args.seed,
                            train=TrainConfig(epochs=args.epochs))


def write(table, path, **config):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    plain = {k: asdict(v) if hasattr(v, "__dataclass_fields__") else v for k, v in config.items()}
    table.to_csv(path, "config: " + json.dumps(plain, sort_keys=True))
    print(table.render())
    print(f"written to {path}")
