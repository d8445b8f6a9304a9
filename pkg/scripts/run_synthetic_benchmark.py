"""Train and evaluate on the seeded synthetic dataset for several seeds.

    python3 scripts/run_synthetic_benchmark.py --seeds 0 1 2 3 4 --work /tmp/bench
"""
import argparse
import json
import logging
import time

from ritescene.benchmark import run_seed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--work", default="bench")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--kinds", default="knn,ann,svm")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    rows = []
    for seed in args.seeds:
        t = time.perf_counter()
        r = run_seed(seed, args.work, args.workers, args.kinds.split(","))
        rows.append({"seed": seed, "test_accuracy": r.accuracy, "train_accuracy": r.train_accuracy,
                     "seconds": round(time.perf_counter() - t, 1)})
        print(json.dumps(rows[-1]), flush=True)


if __name__ == "__main__":
    main()
