"""Path sampling, the quadratic-variation band, and the compensated process.

Samples seeded ensembles under several volatility scenarios plus the
worst-case policy extracted from the lattice for a convex payoff.  On every
path the quadratic-variation increments stay inside [sigma_lo^2 dt, dt], the
summation-by-parts identity <B> = B^2 - 2 int B dB holds to machine
precision, and int f d<B> - 2 int G(f) dt is nonincreasing.
"""

import numpy as np

from gexpect import (
    CylinderFunctional,
    GParams,
    StepProcess,
    build_lattice,
    default_scenario_family,
    extract_worst_policy,
    g_compensated,
    sample_paths,
)
from gexpect.payoff import parse
from gexpect.stochastic import qv_identity_gap

PARAMS = GParams(sigma_lower_sq=0.25, sigma_upper_sq=1.0)


def main():
    lat = build_lattice(1.0, 100, PARAMS)
    policies = list(default_scenario_family(PARAMS))
    policies.append(extract_worst_policy(
        lat, CylinderFunctional((100,), parse("max(x1 - 0.5, 0)"))))

    f = StepProcess.adapted(lambda x: x, 100, name="B")
    print(f"{'policy':26s} {'E[B_T^2]':>10s} {'qv range':>18s} "
          f"{'qv-identity':>12s} {'max d(comp)':>12s}")
    for i, pol in enumerate(policies):
        ens = sample_paths(lat, pol, 4000, seed=10 + i)
        dqv = ens.d_qv / lat.dt  # realized variance rate per step
        comp = g_compensated(f, ens, PARAMS)
        print(f"{ens.policy_name:26s} "
              f"{np.mean(ens.B[:, -1] ** 2):10.4f} "
              f"[{dqv.min():6.3f}, {dqv.max():6.3f}]    "
              f"{qv_identity_gap(ens.B, ens):12.2e} "
              f"{np.max(np.diff(comp, axis=1)):12.2e}")

    print("\nEvery realized variance rate lies inside the band, the "
          "quadratic-variation\nidentity holds to roundoff, and the "
          "compensated process never increases.")


if __name__ == "__main__":
    main()
