"""Run every reproduction case and write the reports to one JSON file."""
import argparse
import json
import sys

from pclbench.repro import CASES, reproduce


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/repro.json")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("cases", nargs="*", default=list(CASES))
    args = ap.parse_args()

    reports = []
    for name in args.cases:
        r = reproduce(name, workers=args.workers)
        print(f"{name:16s} {'agrees' if r.ok else 'DISAGREES':10s} {r.seconds:7.2f}s  {r.observed}")
        reports.append(r.to_dict())
    if args.out != "-":
        import os
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as f:
            json.dump(reports, f, indent=2)
        print(f"wrote {args.out}")
    return 0 if all(r["agrees"] for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
