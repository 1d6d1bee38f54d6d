"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --batch 32 --steps 128 --hidden 128

Prints one row per (kernel, backend) with the median of ``--repeat`` runs and
the speed-up of the compiled version. Outputs of both backends are compared
before timing so a fast-but-wrong build cannot report a win.
"""
import argparse
import time

import numpy as np

from handpd import kernels


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--steps", type=int, default=128)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--draws", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    r = np.random.default_rng(0)
    B, T, h = args.batch, args.steps, args.hidden
    xw = r.normal(size=(B, T, 4 * h))
    U = r.normal(scale=1.0 / np.sqrt(h), size=(4 * h, h))
    dH = r.normal(size=(B, T, h))
    mods = kernels.backends()

    fwd = {name: m.lstm_forward(xw, U) for name, m in mods.items()}
    if "compiled" in mods:
        diff = max(np.max(np.abs(a - b)) for a, b in zip(fwd["compiled"], fwd["python"]))
        print(f"forward max |compiled - python| = {diff:.2e}")

    rows = []
    for name, m in mods.items():
        H, C, A = fwd[name]
        rows.append(("lstm_forward", name, median_time(lambda: m.lstm_forward(xw, U), args.repeat)))
        rows.append(("lstm_backward", name, median_time(lambda: m.lstm_backward(dH, A, C, U), args.repeat)))
        rows.append(("xorshift_uniform", name, median_time(lambda: m.xorshift_uniform(12345, args.draws), args.repeat)))

    base = {k: t for k, b, t in rows if b == "python"}
    print(f"B={B} T={T} h={h} draws={args.draws} repeat={args.repeat} active={kernels.BACKEND}")
    print(f"{'kernel':<18}{'backend':<10}{'median ms':>12}{'speed-up':>10}")
    for k, b, t in rows:
        print(f"{k:<18}{b:<10}{1000 * t:>12.2f}{base[k] / t:>9.2f}x")


if __name__ == "__main__":
    main()
