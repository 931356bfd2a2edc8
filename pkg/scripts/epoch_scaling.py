"""Per-epoch training time against sample count.

    python3 scripts/epoch_scaling.py --sizes 256 512 1024 2048
"""
import argparse
import time

from wgstl.engine import ParamStore
from wgstl.experiments import REGIME_STRUCTURE, REGIME_TRUTH, regime_dataset
from wgstl.logic import harden, parse_structure
from wgstl.train import TrainConfig, fit


def epoch_seconds(ds, template, repeats):
    best = float("inf")
    for _ in range(repeats):
        params = ParamStore.init(template, ds.graph, "r", ds.dim, relaxed=False)
        t0 = time.perf_counter()
        fit(ds, template, "r", TrainConfig(epochs=1), params, {}, "parameters")
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    template = harden(parse_structure(REGIME_STRUCTURE), REGIME_TRUTH)
    full = regime_dataset(seed=0, n=max(args.sizes))
    prev = None
    for n in sorted(args.sizes):
        s = epoch_seconds(full.subset(range(n)), template, args.repeats)
        ratio = f"  x{s / prev:.2f}" if prev else ""
        print(f"N={n:>6}  {s * 1000:8.1f} ms/epoch{ratio}")
        prev = s


if __name__ == "__main__":
    main()
