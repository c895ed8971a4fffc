"""Count runs per fixture as the thread and length bounds grow, with and
without partial-order reduction."""
import argparse
import time

from pclbench.config import Bounds, SemanticsConfig
from pclbench.engine import enumerate_runs
from pclbench.repro import fixture


def count(protocol, bounds, config, reduction, cap):
    n = 0
    t0 = time.perf_counter()
    for _ in enumerate_runs(protocol, bounds, config, reduction=reduction):
        n += 1
        if n >= cap:
            break
    return n, time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixtures", nargs="+", default=["cr", "hash3", "dh_min", "perm"])
    ap.add_argument("--threads", nargs="+", type=int, default=[1, 2])
    ap.add_argument("--lengths", nargs="+", type=int, default=[6, 10, 14])
    ap.add_argument("--untyped", action="store_true")
    ap.add_argument("--cap", type=int, default=200_000, help="stop counting at this many runs")
    args = ap.parse_args()

    print(f"{'fixture':10s} {'thr':>3s} {'len':>3s} {'runs(sleep)':>12s} {'s':>7s} "
          f"{'runs(none)':>12s} {'s':>7s}")
    for name in args.fixtures:
        p = fixture(name)
        cfg = SemanticsConfig(typed=not args.untyped, dh_theory=(name == "dh_min"))
        for t in args.threads:
            for n in args.lengths:
                b = Bounds(t, n, 4)
                rs, ts = count(p, b, cfg, "sleep", args.cap)
                rn, tn = count(p, b, cfg, "none", args.cap)
                mark = "+" if rn >= args.cap else ""
                print(f"{name:10s} {t:3d} {n:3d} {rs:12d} {ts:7.2f} {rn:11d}{mark:1s} {tn:7.2f}")


if __name__ == "__main__":
    main()
