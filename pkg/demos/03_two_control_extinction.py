"""Closed loop with feedback at both ends of a quasilinear channel.

Speeds lam = 1 + (3u + v)/4 and mu = -1 + (u + 3v)/4 couple the two
transported quantities; boundary feedback drives u(t, 0) and v(t, 1) to
zero in finite time t*, after which the interior flushes in one crossing
time.  The run reports the Picard residuals and the row-by-row decay.

Run:  python3 demos/03_two_control_extinction.py [--plot]
"""

import argparse
import warnings

import numpy as np

from hypstab import profiles, quasilinear as ql, transport as tr
from hypstab.feedback import PowerFeedback


def main(plot=False):
    full = lambda u, c: np.full_like(np.asarray(u, float), c)
    system = ql.DiagonalSystem(
        lam=lambda u, v: 1.0 + (3 * u + v) / 4.0,
        mu=lambda u, v: -1.0 + (u + 3 * v) / 4.0,
        floor=1.0,
        dlam_du=lambda u, v: full(u, 0.75),
        dlam_dv=lambda u, v: full(u, 0.25),
        dmu_du=lambda u, v: full(u, 0.25),
        dmu_dv=lambda u, v: full(u, 0.75),
    )
    fb = PowerFeedback(gain=1.0, exponent=0.5)
    amp = 0.02
    u0 = profiles.cosine_bump(amp)  # nonzero at the ends: the feedback engages
    v0 = profiles.cosine_bump(amp)
    ledger = ql.build_ledger(system, max(u0.sup, v0.sup), max(u0.lip, v0.lip), fb)
    report = ql.check_two_control(ledger)
    t_star = ledger.trace_extinction
    print(f"= constants: M1={ledger.speed_sup:.4f}  M2={ledger.speed_grad_sup:.2f}  "
          f"T={ledger.horizon:.4f}  t*={t_star:.4f}")
    print(f"= smallness condition margin {report.margins[0]:.3f} "
          f"({'holds' if report.holds else 'fails; iteration may still converge'})")

    # 10% headroom past the deadline so the settle scan can certify it
    grid = tr.GridSpec(nt=221, nx=401, horizon=ledger.horizon * 1.1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = ql.picard_two_control(system, u0, v0, fb, grid, tol=1e-10)
    print(f"= Picard converged in {sol.iterations} iterations; residuals:",
          " ".join(f"{r:.1e}" for r in sol.residual_history))

    print("\n  t      sup|u|     sup|v|")
    for frac in (0.0, 0.25, 0.5, 0.75, 0.9, 1.0):
        t = frac * ledger.horizon
        su, sv = sol.sup_at(t)
        print(f"  {t:5.3f}  {su:9.2e}  {sv:9.2e}")
    rep = ql.verify_extinction(sol, ledger.horizon, tol=1e-9)
    print(f"\n= boundary traces settle at u: {rep.boundary_settle_u:.3f}, "
          f"v: {rep.boundary_settle_v:.3f} (both = t* = {t_star:.3f})")
    print(f"= state at the deadline T = {ledger.horizon:.3f}: {rep.sup_u + rep.sup_v:.1e}")
    print(f"= interior identically below 1e-9 from t = {rep.interior_settle:.3f}")
    print("  (a hair past T: on this working box the slow speed dips just under")
    print("   the nominal floor, so the deadline computed with it is marginal)")

    if plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(1, 2, figsize=(10, 4))
        for a_, fld, name in ((ax[0], sol.u, "u"), (ax[1], sol.v, "v")):
            im = a_.imshow(
                fld.values, origin="lower", aspect="auto",
                extent=[0, 1, 0, ledger.horizon], cmap="RdBu_r",
                vmin=-amp, vmax=amp,
            )
            a_.axhline(t_star, color="k", ls=":", lw=0.8)
            a_.set(title=name, xlabel="x", ylabel="t")
            fig.colorbar(im, ax=a_)
        fig.savefig("demo03_two_control.png", dpi=120)
        print("\nwrote demo03_two_control.png")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--plot", action="store_true")
    main(plot=parser.parse_args().plot)
