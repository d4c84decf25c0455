"""F1 against train:test ratio on synthetic data.

    python scripts/split_sweep.py --methods i2bgnn-t,fgsd+knn
"""
import logging

from _common import base_parser, experiment, subgraphs, synthetic, write

from i2bgnn.harness import run_split_sweep
from i2bgnn.splits import SWEEP_RATIOS


def main():
    ap = base_parser(__doc__.splitlines()[0], "results/split_sweep.csv")
    ap.add_argument("--ratios", default=",".join(SWEEP_RATIOS))
    ap.add_argument("--methods", default="i2bgnn-t")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data, schema, synth = synthetic(args)
    sgs = subgraphs(data, schema, 2, args.max_neighbors)
    exp = experiment(args)
    table = run_split_sweep(sgs, args.ratios.split(","), args.methods.split(","), exp)
    write(table, args.out, synth=synth, max_neighbors=args.max_neighbors, experiment=exp)


if __name__ == "__main__":
    main()
