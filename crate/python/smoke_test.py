"""Smoke test for the scaling_lab extension module."""

import math

import scaling_lab as sl


def main():
    a, acc = sl.solve_optimal_a(1.0)
    assert abs(acc - 0.2338) < 1e-3, acc
    assert abs(sl.solve_optimal_a(3.0)[1] - 0.574) < 1e-3

    assert sl.isserlis_moment([[1.0, 0.5], [0.5, 2.0]], [0, 0, 1, 1]) == 1.0 * 2.0 + 2 * 0.5**2
    assert abs(sl.fbm_covariance(1.0, 1.0, 0.3) - 1.0) < 1e-12

    path = sl.FbmPath.circulant(0.5, half_width=9.0, points=4001, seed=3)
    again = sl.FbmPath.circulant(0.5, half_width=9.0, points=4001, seed=3)
    assert path.values == again.values
    assert path.eval(0.0) == 0.0

    target = sl.Target.rwm_rough(path)
    summary = sl.run_chain(target, "rwm", dim=50, ell=1.0, beta=0.5, steps=5000, seed=1)
    assert 0.0 < summary["acceptance_rate"] < 1.0
    assert summary["steps"] == 5000

    s2 = sl.sigma2_rwm(0.5, 1.0)
    assert abs(s2 - math.sqrt(2 / math.pi)) < 1e-12
    assert abs(sl.limiting_acceptance(s2) - math.erfc(math.sqrt(s2) / (2 * math.sqrt(2)))) < 1e-12

    osc = sl.Target.oscillatory("mala_osc", 0.9, 5.0)
    psi = sl.psi_samples(osc, "mala", dim=100, sigma=0.05, count=2000, seed=2)
    assert len(psi) == 2000 and all(p <= 1e3 for p in psi)

    rows = sl.run_sweep("table2", steps=500)
    assert len(rows) == 6
    print(f"scaling_lab {sl.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
