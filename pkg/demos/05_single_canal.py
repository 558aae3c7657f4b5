"""Water-level regulation of a single canal with two boundary devices.

A rectangular canal at subcritical equilibrium (H* = 1, V* = 0.5) is
perturbed in depth by one millimetre.  Feedback traces in the diagonal
variables translate into flow-rate prescriptions for the devices at the
two ends, and the state returns to the equilibrium exactly, in finite
time, without wave bounces.

Run:  python3 demos/05_single_canal.py [--plot]
"""

import argparse
import warnings

import numpy as np

from hypstab import profiles, quasilinear as ql, saintvenant as sv, transport as tr
from hypstab.feedback import FeedbackTrace, PowerFeedback


def main(plot=False):
    p = sv.CanalParams(depth=1.0, velocity=0.5, length=1.0)
    c = sv.pick_c(p)
    lam0, mu0 = sv.char_speeds(sv.RiemannPair(0.0, 0.0), p)
    print(f"= equilibrium: H*={p.depth}, V*={p.velocity}, Q*={p.flow_rate}, "
          f"celerity {p.celerity:.4f}")
    print(f"= characteristic speeds at equilibrium: {lam0:.4f}, {mu0:.4f}; floor c = {c:.4f}")

    fb = PowerFeedback(1.0, 0.5)
    pert = profiles.cosine_bump(1e-3)
    xs = np.linspace(0.0, 1.0, 4001)
    u_vals, v_vals = sv.riemann_fields(1.0 + pert(xs), 0.5 + 0.0 * xs, p)
    u0 = profiles.from_samples(xs, u_vals)
    v0 = profiles.from_samples(xs, v_vals)
    amp = max(u0.sup, v0.sup)
    t_star = amp**0.5 / 0.5
    deadline = p.length / c + t_star
    print(f"= diagonal amplitude {amp:.2e}; trace extinction t* = {t_star:.4f}; "
          f"deadline l/c + t* = {deadline:.4f}")

    print("\n= what the devices do: flow rate from the measured depth and the trace =")
    right = FeedbackTrace(float(v0(np.array([1.0]))[0]), fb)
    for t in (0.0, 0.05, t_star, 2 * t_star):
        q = sv.controlled_flow_rate("right", 1.0005, float(np.asarray(right(t))), p)
        print(f"  t={t:6.3f}  v-trace {float(np.asarray(right(t))):+.2e}  ->  Q(t, l) = {q:.6f}")

    grid = tr.GridSpec(nt=201, nx=401, horizon=deadline)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = ql.picard_two_control(sv.diagonal_system(p, c), u0, v0, fb, grid, tol=1e-11)
    depth_fld, vel_fld = sv.physical_fields(sol.u.values, sol.v.values, p)
    print(f"\n= Picard converged in {sol.iterations} iterations")
    print("  t      sup|H - H*|   sup|V - V*|")
    for frac in (0.0, 0.3, 0.6, 0.8, 1.0):
        k = int(frac * (grid.nt - 1))
        print(f"  {grid.t_nodes[k]:5.3f}  {np.abs(depth_fld[k] - 1.0).max():11.2e}  "
              f"{np.abs(vel_fld[k] - 0.5).max():11.2e}")
    print(f"\n= equilibrium restored exactly by the deadline {deadline:.3f} "
          f"(theory: l/c + t*, with the actual speeds ~{lam0:.1f} it is much sooner)")

    if plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 4))
        for frac in (0.0, 0.1, 0.2, 0.4, 1.0):
            k = int(frac * (grid.nt - 1))
            ax.plot(grid.x_nodes, depth_fld[k], label=f"t = {grid.t_nodes[k]:.2f}")
        ax.legend()
        ax.set(xlabel="x", ylabel="H(t, x)", title="depth returning to equilibrium")
        fig.savefig("demo05_canal.png", dpi=120)
        print("\nwrote demo05_canal.png")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--plot", action="store_true")
    main(plot=parser.parse_args().plot)
