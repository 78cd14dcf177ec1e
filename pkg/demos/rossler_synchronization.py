"""Transverse exponent of a Rossler copy nudged through y in short bursts.

For a fixed burst strength the exponent is negative (the copy locks onto
the target) when bursts are frequent and turns positive as they thin out.
A direct simulation of the nudged copy confirms the sign for two cells.

    python demos/rossler_synchronization.py
"""
import numpy as np

from rarecast import dynsys, lyapunov
from rarecast.lyapunov import OnOffCoupling

C = 0.8


def nudged_gap(system, active, period, n_steps=20000):
    # drive a copy with the discrete update rule on y and track |copy - target|
    target = dynsys.integrate_ode(system, dynsys.default_initial_state(system, 0), n_steps)
    x = target.data[0] + np.array([1.0, -1.0, 0.5])
    gaps = []
    for t in range(1, n_steps):
        x = dynsys.integrate_ode(system, x, 2, discard=0).data[1]
        if t % period < active:
            x[1] = (1 - C) * x[1] + C * target.data[t, 1]
        gaps.append(np.linalg.norm(x - target.data[t]))
    return float(np.mean(gaps[-2000:]))


def main():
    s = dynsys.ode_system("rossler")
    print(f"lambda_max = {lyapunov.max_lyapunov(s, 100000).value:.4f}")
    grid = lyapunov.stability_map(s, C, [1, 2, 5, 10], [10, 20, 50, 100, 200], 40000)
    print("transverse exponent, rows T, columns T0 =", grid.x_values)
    for T, row in zip(grid.y_values, grid.cells):
        print(f"T={T:4d} " + " ".join("   --  " if np.isnan(v) else f"{v:+.4f}" for v in row))
    for active, period in [(5, 10), (1, 200)]:
        lam = lyapunov.transverse_lyapunov(s, OnOffCoupling.from_discrete(C, period, active, s.dt),
                                           40000).value
        print(f"T0={active}, T={period}: exponent {lam:+.4f}, late mean gap {nudged_gap(s, active, period):.3g}")


if __name__ == "__main__":
    main()
