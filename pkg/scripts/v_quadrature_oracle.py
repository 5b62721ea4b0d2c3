"""Deterministic reference values of V and of the eta-part of K.

Independent of the package: the waiting law, eta, the renewal function
and the pair integrand are rebuilt here from closed forms with scipy
quadrature, and V is integrated on a fixed grid with no sampling.
Writes tests/data/v_oracle.json.

    python scripts/v_quadrature_oracle.py
"""

import json
import os

import numpy as np
from scipy import integrate

C = 0.3
A, B = -np.log(1 - C), -np.log(C)


def pi(x):
    return np.where((x >= A) & (x <= B), 2 * np.exp(-2 * x) / (1 - 2 * C), 0.0)


def F(x):
    x = np.minimum(np.asarray(x, float), B)
    return np.where(x < A, 0.0, (1 - np.exp(-2 * (x - A))) * (1 - C) ** 2 / (1 - 2 * C))


MU = integrate.quad(lambda x: x * pi(x), A, B, epsabs=0, epsrel=1e-13)[0]


def eta_density(x):
    return np.where((x >= 0) & (x <= B), (1 - F(x)) / MU, 0.0)


def eta_int(fr, cuts=()):
    pts = sorted({A, *[c for c in cuts if 0 < c < B]})
    return integrate.quad(lambda x: fr(x) * eta_density(x), 0, B, points=pts, epsabs=1e-15, epsrel=1e-12,
                          limit=400)[0]


def solve_h(fr, cuts, dt, tmax):
    """E fr(B_t) for an ordinary renewal process started at 0, trapezoid-Stieltjes."""
    tg = np.arange(0, tmax + dt / 2, dt)

    def g0(t):
        lo = max(t, A)
        if lo >= B:
            return 0.0
        pts = [t + c for c in cuts if lo < t + c < B]
        return integrate.quad(lambda y: fr(y - t) * pi(y), lo, B, points=pts or None, epsabs=1e-15,
                              epsrel=1e-12, limit=200)[0]

    g = np.array([g0(t) if t < B else 0.0 for t in tg])
    m = int(np.ceil(B / dt)) + 1
    dF = F(np.arange(1, m + 1) * dt) - F(np.arange(0, m) * dt)
    h = np.zeros(tg.size)
    for k in range(tg.size):
        jmax = min(k - 1, m - 1)
        s = 0.0
        if jmax >= 0:
            j = np.arange(jmax + 1)
            s = np.dot(0.5 * (h[k - j] + h[k - j - 1]), dF[j])
        h[k] = g[k] + s
    return tg, h


def residual_map(fr, cuts, tmax=20.0):
    # Richardson over dt and dt/2 (trapezoid-Stieltjes error is O(dt^2))
    t1, h1 = solve_h(fr, cuts, 2e-3, tmax)
    t2, h2 = solve_h(fr, cuts, 1e-3, tmax)
    h = (4 * h2[::2] - h1) / 3
    lim = eta_int(fr, cuts)

    def R(r):
        r = np.asarray(r, float)
        return np.where(r > 0, fr(np.maximum(r, 0)), np.interp(-r, t1, h, right=lim))

    return R


def v_value(R1, R2, v_lo=-12.0, dv=0.01, nx=48, nc=800):
    xs, wx = np.polynomial.legendre.leggauss(nx)
    s = A + (B - A) * (xs + 1) / 2
    ws = wx * (B - A) / 2
    u = (np.arange(nc) + 0.5) / nc
    vs = np.arange(v_lo, B + 1e-12, dv)
    out = np.empty(vs.size)
    for i, v in enumerate(vs):
        tot = 0.0
        for si, wi in zip(s, ws):
            c = u * si  # age; residual is si - c
            alive = (c >= v) if v > 0 else np.ones(nc, bool)
            w2 = -np.log(1 - np.exp(-si))
            val = alive * R1(v + si - c) * R2(v - c + w2)
            tot += wi * pi(si) * si * val.mean()
        out[i] = np.exp(-v) * tot / MU
    return float(np.trapezoid(out, vs))


def main():
    ident = lambda y: np.exp(-y)
    ind = lambda y: (np.exp(-y) >= 0.5).astype(float)  # indicator of [0.5, 1] on the log side
    g_id = eta_int(ident)
    g_ind = eta_int(ind, (np.log(2),))
    f1 = lambda y: ident(y) - g_id
    f2 = lambda y: ind(y) - g_ind
    R1 = residual_map(f1, ())
    R2 = residual_map(f2, (np.log(2),))
    eta11 = eta_int(lambda y: np.exp(-y) * f1(y) ** 2)
    eta12 = eta_int(lambda y: np.exp(-y) * f1(y) * f2(y), (np.log(2),))
    eta22 = eta_int(lambda y: np.exp(-y) * f2(y) ** 2, (np.log(2),))
    v11 = v_value(R1, R1)
    v12 = 0.5 * (v_value(R1, R2) + v_value(R2, R1))
    v22 = v_value(R2, R2)
    out = {
        "what": "deterministic quadrature of V and eta(Id f g) for [center(Id), center(1_[0.5,1])], binary uniform c=0.3",
        "mu": MU, "gamma_inf_identity": g_id, "gamma_inf_indicator": g_ind,
        "eta_part": [[eta11, eta12], [eta12, eta22]],
        "V": [[v11, v12], [v12, v22]],
        "rel_accuracy": 0.01,
    }
    path = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "v_oracle.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
