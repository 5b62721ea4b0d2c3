"""Exact decay of E g(B_t) for the centered indicator of [a, (a+b)/2].

Solves the renewal equation for h(t) = E g(B_t), prints it next to the
plain Monte Carlo standard error at a given replica count, and reports
the log-linear fits the decay probe would make from noiseless values.

    python scripts/decay_analysis.py [--replicas 1000000]
"""

import argparse
import math

import numpy as np

from fragclt.dislocation import MeasureSpec, waiting_law
from fragclt.functions import Indicator
from fragclt.renewal import eta_integral, renewal_function


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replicas", type=int, default=10**6)
    args = ap.parse_args()
    law = waiting_law(MeasureSpec.binary_uniform(0.3))
    g = Indicator(law.a, 0.5 * (law.a + law.b))
    gc = g - eta_integral(law, g)
    h = renewal_function(law, gc, t_max=12.0)
    # variance of g(B_t) is close to its stationary value for t >= 1
    sd = math.sqrt(eta_integral(law, gc * gc))
    se = sd / math.sqrt(args.replicas)
    ts = np.arange(1, 9, dtype=float)
    vals = np.array([float(h(np.array(t))) for t in ts])
    print(f"{'t':>3} {'h(t)':>12} {'|h|/se':>8}")
    for t, v in zip(ts, vals):
        print(f"{t:3.0f} {v:12.4e} {abs(v) / se:8.3f}")
    for hi in (4, 5):
        x, y = ts[:hi], np.log(np.abs(vals[:hi]))
        slope, icpt = np.polyfit(x, y, 1)
        r2 = 1 - np.sum((y - slope * x - icpt) ** 2) / np.sum((y - y.mean()) ** 2)
        print(f"noiseless fit on t=1..{hi}: slope {slope:.3f}, r^2 {r2:.3f}")


if __name__ == "__main__":
    main()
