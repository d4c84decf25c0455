"""1-hop against 2-hop neighbourhoods on the same accounts and splits.

    python scripts/depth_study.py
"""
import logging

from _common import base_parser, experiment, synthetic, write

from i2bgnn.harness import run_depth_study
from i2bgnn.sampler import SamplingConfig


def main():
    ap = base_parser(__doc__.splitlines()[0], "results/depth_study.csv")
    ap.add_argument("--methods", default="i2bgnn-v,i2bgnn-t")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data, schema, synth = synthetic(args)
    exp = experiment(args)
    table = run_depth_study(data.graph, data.labeled, data.calls, schema, SamplingConfig(2, args.max_neighbors),
                            args.methods.split(","), exp)
    write(table, args.out, synth=synth, max_neighbors=args.max_neighbors, experiment=exp)


if __name__ == "__main__":
    main()
