"""Verdicts for the delay family G(i <-> X^d o) across memory sizes.

With the input hidden and the output guided, delay ``d`` needs memory ``2^d``:
the environment has to remember the last ``d`` inputs.
"""
import argparse
import time

from sge.logic import SignalPartition, parse_formula
from sge.synth import SolverConfig, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-delay", type=int, default=2)
    ap.add_argument("--time-budget", type=float, default=300.0)
    args = ap.parse_args()
    part = SignalPartition((), ("i",), (), ("o",))
    print(f"{'d':>2} {'k':>2} {'outcome':<26} {'secs':>7}")
    for d in range(1, args.max_delay + 1):
        phi = parse_formula(f"G (i <-> {'X ' * d}o)")
        for k in range(1, 2**d + 1):
            t0 = time.perf_counter()
            out = solve(phi, part, SolverConfig(memory=k, time_budget=args.time_budget))
            print(f"{d:>2} {k:>2} {out.tag:<26} {time.perf_counter() - t0:>7.2f}", flush=True)


if __name__ == "__main__":
    main()
