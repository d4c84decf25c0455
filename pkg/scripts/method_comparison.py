"""Method comparison (both GCN variants and both spectral baselines) on synthetic data.

    python scripts/method_comparison.py --out results/method_comparison.csv
"""
import logging

from _common import base_parser, experiment, subgraphs, synthetic, write

from i2bgnn.harness import METHODS, run_comparison


def main():
    ap = base_parser(__doc__.splitlines()[0], "results/method_comparison.csv")
    ap.add_argument("--hops", type=int, default=2, choices=(1, 2))
    ap.add_argument("--methods", default=",".join(METHODS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    data, schema, synth = synthetic(args)
    sgs = subgraphs(data, schema, args.hops, args.max_neighbors)
    exp = experiment(args)
    table, _ = run_comparison(sgs, args.methods.split(","), exp)
    write(table, args.out, synth=synth, hops=args.hops, max_neighbors=args.max_neighbors, experiment=exp)


if __name__ == "__main__":
    main()
