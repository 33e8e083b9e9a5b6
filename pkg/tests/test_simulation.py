import io

import numpy as np
import pytest

from cismr.errors import ValidationError
from cismr.factors import scree
from cismr.psd import min_eigenvalue
from cismr.simulation import (
    ALL_METHODS,
    CSV_COLUMNS,
    PowerCurve,
    default_delta,
    factor_structured_ld,
    gen_base_population,
    make_design,
    run_power,
    simulate_replicate,
)


@pytest.fixture(scope="module")
def base():
    return gen_base_population(p=196, r=8, signal_share=0.95, seed=1)


@pytest.fixture(scope="module")
def small_base():
    return gen_base_population(p=40, r=4, signal_share=0.95, seed=5, max_t=12.0)


def test_base_population_scree(base):
    _, cum = scree(base.rho_true)
    assert cum[7] >= 0.95
    assert min_eigenvalue(base.rho_true) > 0


def test_rank_one_zero_noise():
    rho = factor_structured_ld(30, 1, 1.0, np.random.default_rng(0))
    np.testing.assert_allclose(np.diag(rho), 1.0)
    eig = np.linalg.eigvalsh(rho)
    assert eig[-2] < 1e-10 * eig[-1]


def test_population_bit_identical():
    a = gen_base_population(p=50, r=4, seed=3)
    b = gen_base_population(p=50, r=4, seed=3)
    assert np.array_equal(a.rho_true, b.rho_true) and np.array_equal(a.beta_x_true, b.beta_x_true)
    c = gen_base_population(p=50, r=4, seed=4)
    assert not np.array_equal(a.beta_x_true, c.beta_x_true)


def test_null_design_is_plain_sampling(small_base):
    for kind, param in (("small_sample", 1.0), ("invalid", 0.0), ("mismeasured", 0.0)):
        d = make_design(small_base, kind, param, seed=2)
        assert np.all(d.tau == 0)
        np.testing.assert_allclose(d.rho_used, small_base.rho_true, atol=1e-10)


def test_small_sample_variance_scales(small_base):
    d1 = make_design(small_base, "small_sample", 1.0)
    d4 = make_design(small_base, "small_sample", 0.25)
    a = simulate_replicate(small_base, d1, 0.0, 0)
    b = simulate_replicate(small_base, d4, 0.0, 0)
    np.testing.assert_allclose(b.se_x**2, 4 * a.se_x**2, rtol=1e-14)
    np.testing.assert_allclose(b.se_y**2, 4 * a.se_y**2, rtol=1e-14)
    # same stream key per design differs, but the empirical variance scales by 4
    dev1 = np.array([simulate_replicate(small_base, d1, 0.0, i).beta_x - small_base.beta_x_true for i in range(400)])
    dev4 = np.array([simulate_replicate(small_base, d4, 0.0, i).beta_x - small_base.beta_x_true for i in range(400)])
    ratio = dev4.var(axis=0).mean() / dev1.var(axis=0).mean()
    assert 3.5 < ratio < 4.5


def test_invalid_tau_range(small_base):
    d = make_design(small_base, "invalid", 2.0, seed=1)
    assert np.max(np.abs(d.tau)) <= 0.01
    again = make_design(small_base, "invalid", 2.0, seed=1)
    assert np.array_equal(d.tau, again.tau)


def test_mismeasured_perturbation_and_repair(small_base):
    d = make_design(small_base, "mismeasured", 0.15, seed=1)
    off = ~np.eye(small_base.p, dtype=bool)
    assert np.max(np.abs(d.kappa[off])) <= 0.15
    assert np.array_equal(d.kappa, d.kappa.T)
    assert not d.repair_failed
    assert min_eigenvalue(d.rho_used) >= -1e-8
    np.testing.assert_allclose(np.diag(d.rho_used), 1.0, atol=1e-12)


def test_design_validation(small_base):
    with pytest.raises(ValidationError):
        make_design(small_base, "bogus", 1.0)
    with pytest.raises(ValidationError):
        make_design(small_base, "small_sample", 0.0)
    with pytest.raises(ValidationError):
        make_design(small_base, "invalid", -1.0)
    d = make_design(small_base, "small_sample", 1.0)
    with pytest.raises(ValidationError):
        run_power(small_base, d, methods=("F-XX",), reps=100)
    with pytest.raises(ValidationError):
        run_power(small_base, d, reps=10)


def test_default_delta(small_base):
    assert [default_delta(make_design(small_base, "small_sample", e)) for e in (0.25, 0.5, 1.0)] == [0.1, 0.05, 0.01]


def test_null_calibration_far(small_base):
    d = make_design(small_base, "small_sample", 1.0)
    curve = run_power(small_base, d, methods=("F-AR",), reps=1000, seed=11)
    row = curve.row("F-AR")
    assert abs(row["rate"] - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / 1000)
    assert row["reps"] + row["errors"] == 1000


def test_power_goes_to_one(small_base):
    d = make_design(small_base, "small_sample", 1.0)
    curve = run_power(small_base, d, methods=ALL_METHODS, theta_grid=(3.0,), reps=100, seed=3)
    for m in ALL_METHODS:
        assert curve.rate(m, 3.0) >= 0.95, m


def test_thread_independence_and_csv(small_base):
    d = make_design(small_base, "invalid", 1.0, seed=2)
    a = run_power(small_base, d, theta_grid=(0.0, 0.5), reps=100, seed=4, threads=1)
    b = run_power(small_base, d, theta_grid=(0.0, 0.5), reps=100, seed=4, threads=4)
    assert a.to_csv() == b.to_csv()
    text = a.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 2 * len(ALL_METHODS)
    buf = io.StringIO()
    a.to_csv(buf)
    assert buf.getvalue() == text


def test_monotone_information(small_base):
    rates = []
    for eta in (0.25, 0.5, 1.0):
        d = make_design(small_base, "small_sample", eta)
        rates.append(run_power(small_base, d, methods=("F-AR",), theta_grid=(0.3,), reps=400, seed=8).row("F-AR"))
    for lo, hi in zip(rates, rates[1:]):
        se = np.sqrt(lo["mc_se"] ** 2 + hi["mc_se"] ** 2)
        assert hi["rate"] >= lo["rate"] - 3 * se


def test_power_curve_lookup():
    pc = PowerCurve([{"method": "F-AR", "design": "invalid", "param": 2.0, "theta_true": 0.0,
                      "rate": 0.05, "mc_se": 0.01, "reps": 100, "errors": 0}])
    assert pc.rate("F-AR") == 0.05
    with pytest.raises(KeyError):
        pc.rate("F-LM")
