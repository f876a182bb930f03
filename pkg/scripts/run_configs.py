"""Run every shipped config (or a chosen subset) and print one status line per run."""
import argparse
import json
import time
from pathlib import Path

from mmsde.cli import run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help="config stems, default: all")
    ap.add_argument("--out", default="out", help="parent directory for results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    names = args.names or sorted(p.stem for p in CONFIGS.glob("*.json"))
    for name in names:
        cfg = json.loads((CONFIGS / f"{name}.json").read_text())
        t0 = time.perf_counter()
        status, man = run_experiment(cfg, workers=args.workers, output_dir=str(Path(args.out) / name))
        print(f"{name:24s} status={status} {time.perf_counter() - t0:7.1f}s  {', '.join(man['artifacts'])}")
        if man["message"]:
            print(f"    {man['message']}")


if __name__ == "__main__":
    main()
