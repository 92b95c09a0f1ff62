"""Regenerates lp_oracle.json: 1-D optimal transport costs solved as a linear program."""
import json

import numpy as np
from scipy.optimize import linprog


def transport_lp(xa, wa, xb, wb, p):
    n, m = len(xa), len(xb)
    cost = np.abs(xa[:, None] - xb[None, :]) ** p
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([wa, wb]),
                  bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return float(res.fun)


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    for _ in range(200):
        n, m = rng.integers(1, 9, size=2)
        xa = rng.uniform(-5, 5, n)
        xb = rng.uniform(-5, 5, m)
        if rng.random() < 0.2:
            xb[: min(n, m) // 2] = xa[: min(n, m) // 2]
        wa = rng.uniform(0.05, 1.0, n)
        wb = rng.uniform(0.05, 1.0, m)
        wa /= wa.sum()
        wb /= wb.sum()
        p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        cases.append({
            "a_support": xa.tolist(), "a_weights": wa.tolist(),
            "b_support": xb.tolist(), "b_weights": wb.tolist(),
            "p": p, "cost": transport_lp(xa, wa, xb, wb, p),
        })
    with open("lp_oracle.json", "w") as f:
        json.dump(cases, f, indent=1)


if __name__ == "__main__":
    main()
