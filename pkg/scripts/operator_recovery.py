"""Step-1 operator recovery on a 4-node star.

For every (temporal, graph) operator pair, generate data from the hardened
formula and count how often step 1 picks the generating pair back.

    python3 scripts/operator_recovery.py --seeds 20 --noise 0.1
"""
import argparse
import time

from wgstl.experiments import COMBINATIONS, recovery_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--noise", type=float, default=0.1)
    ap.add_argument("--n-per-class", type=int, default=30)
    ap.add_argument("--margin", type=float, default=0.5)
    args = ap.parse_args()

    t0 = time.perf_counter()
    print(f"{'truth':<22}{'recovered':>10}   mistakes")
    for temporal, graph_op in COMBINATIONS:
        runs = [recovery_run(temporal, graph_op, s, n_per_class=args.n_per_class,
                             noise=args.noise, margin=args.margin) for s in range(args.seeds)]
        wrong = [f"seed {r.seed} -> {'/'.join(r.found)}" for r in runs if not r.ok]
        print(f"{temporal + '/' + graph_op:<22}{sum(r.ok for r in runs):>5}/{args.seeds:<4}   "
              + (", ".join(wrong) or "-"))
    print(f"total {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
