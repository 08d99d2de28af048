"""Solve every spec in fixtures/ and print one line per file."""
import argparse
import time
from pathlib import Path

from sge.logic import size
from sge.specfile import load_spec
from sge.synth import solve

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", type=Path, default=ROOT / "fixtures")
    ap.add_argument("--skip", nargs="*", default=[], help="fixture names to skip")
    args = ap.parse_args()
    print(f"{'fixture':<16} {'|phi|':>5} {'k':>2} {'outcome':<26} {'bound':>6} {'states':>6} {'secs':>7}")
    for path in sorted(args.dir.glob("*.spec")):
        if path.stem in args.skip:
            continue
        spec = load_spec(path)
        cfg = spec.config()
        t0 = time.perf_counter()
        out = solve(spec.phi, spec.partition, cfg)
        secs = time.perf_counter() - t0
        states = out.tge.num_states if out.tge else "-"
        print(f"{path.stem:<16} {size(spec.phi):>5} {cfg.memory:>2} {out.tag:<26} {out.bound!s:>6} {states!s:>6} {secs:>7.2f}")


if __name__ == "__main__":
    main()
