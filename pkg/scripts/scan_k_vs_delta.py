"""Mode count K against the fit tolerance delta for the subohmic flagship bath.

Writes ``k_vs_delta.csv`` and prints the slope and correlation of K against
``|log10 delta|``.
"""

import argparse
from pathlib import Path

import numpy as np

from fpheom import io
from fpheom.polefit import scan_K_vs_delta
from fpheom.spectrum import SubohmicParams, SubohmicSpectrum, build_domain, sample


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--omega-c", type=float, default=20.0)
    ap.add_argument("--ppd", type=int, default=100, help="grid points per decade")
    ap.add_argument("--out", type=Path, default=Path("out"))
    args = ap.parse_args()

    p = SubohmicParams(args.s, args.alpha, args.omega_c)
    samples = sample(SubohmicSpectrum(p), 0.0, build_domain(1e-4, 1e3, args.ppd).grid)
    deltas = [10.0**-k for k in range(3, 11)]
    scan = scan_K_vs_delta(samples, deltas)
    x = np.array([-np.log10(d) for d, _ in scan])
    K = np.array([k for _, k in scan], float)
    for d, k in scan:
        print(f"delta = {d:.0e}  K = {k}")
    slope, icpt = np.polyfit(x, K, 1)
    print(f"K ~ {slope:.2f} |log10 delta| + {icpt:.2f}, correlation {np.corrcoef(x, K)[0, 1]:.4f}")
    args.out.mkdir(parents=True, exist_ok=True)
    f = io.write_series(args.out / "k_vs_delta.csv", {"delta": deltas, "abs_log10_delta": x, "K": K},
                        [f"s = {p.s}, alpha = {p.alpha}, omega_c = {p.omega_c}, T = 0, {args.ppd} points/decade"])
    print(f"wrote {f}")


if __name__ == "__main__":
    main()
