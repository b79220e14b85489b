"""Motion synthesis tests: seeded determinism, distribution conformance,
drift crossfade behavior, and persistence."""

import math

import numpy as np
import pytest

from bmflc import (
    MotionSpec,
    SineComponent,
    SynthParams,
    apply_drift,
    drift_crossfade,
    evaluate,
    load_motion,
    make_motion,
    sample_spec,
    save_motion,
    vibration_defaults,
    vibration_force,
    voluntary_accel,
    voluntary_defaults,
    voluntary_position,
    voluntary_velocity,
)
from bmflc.synth import TWO_PI


def test_amplitude_means_decrease_linearly():
    # with zero amplitude spread the draws equal their means
    # (xi_total/b_n)*(b_n - k) exactly: 0.6, 0.4, 0.2 for xi_total=0.6, b_n=3
    p = SynthParams(a_nu=6.0, b_nu=10.0, a_n=3, b_n=3, xi_total=0.6, s_xi=0.0)
    comps = sample_spec(p, np.random.default_rng(0))
    assert [c.xi for c in comps] == [0.6, pytest.approx(0.4), pytest.approx(0.2)]


def test_component_count_bounds():
    p = vibration_defaults()
    counts = {len(sample_spec(p, np.random.default_rng(s))) for s in range(200)}
    assert counts == {1, 2, 3}


def test_normalized_ladder_sums_to_total_for_any_count():
    # normalize_total rescales the ladder to xi_total*2*(N-k)/(N*(N+1));
    # the means then sum to xi_total no matter how many components are drawn
    for n in (1, 2, 4, 6):
        p = SynthParams(a_nu=6.0, b_nu=10.0, a_n=n, b_n=n, xi_total=0.5,
                        s_xi=0.0, normalize_total=True)
        comps = sample_spec(p, np.random.default_rng(0))
        xs = [c.xi for c in comps]
        assert xs == sorted(xs, reverse=True)
        assert sum(xs) == pytest.approx(0.5, rel=1e-12)
    assert xs[0] == pytest.approx(0.5 * 2 * 6 / 42)


def test_seeded_determinism():
    a = make_motion(7)
    b = make_motion(7)
    assert a is not b
    for ca, cb in zip(a.voluntary + a.vibration, b.voluntary + b.vibration):
        assert (ca.nu, ca.phi, ca.xi, ca.nu_prime, ca.phi_prime) == \
               (cb.nu, cb.phi, cb.xi, cb.nu_prime, cb.phi_prime)
    ts = np.linspace(0.0, 20.0, 2000)
    np.testing.assert_array_equal(vibration_force(a, ts), vibration_force(b, ts))


def test_amplitude_means_monte_carlo():
    # 10^4 draws at fixed N: empirical per-component means within 3 sigma
    p = SynthParams(a_nu=6.0, b_nu=10.0, a_n=3, b_n=3, xi_total=0.6, s_xi=0.05)
    rng = np.random.default_rng(2024)
    n_draws = 10_000
    sums = np.zeros(3)
    for _ in range(n_draws):
        for k, c in enumerate(sample_spec(p, rng)):
            sums[k] += c.xi
    means = sums / n_draws
    sigma_mean = (0.05 / 3) / math.sqrt(n_draws)
    for k, m_k in enumerate((0.6, 0.4, 0.2)):
        assert abs(means[k] - m_k) < 3 * sigma_mean


def test_negative_amplitude_clamped():
    # mean 0 with positive spread: draws must never be negative
    p = SynthParams(a_nu=6.0, b_nu=10.0, a_n=1, b_n=50, xi_total=1e-9, s_xi=0.5)
    rng = np.random.default_rng(5)
    for _ in range(50):
        for c in sample_spec(p, rng):
            assert c.xi >= 0.0


def test_frequency_laws():
    rng = np.random.default_rng(99)
    uni = SynthParams(a_nu=6.0, b_nu=10.0, a_n=5, b_n=5, xi_total=1.0, s_xi=0.0,
                      frequency_law="uniform")
    nus = np.array([c.nu for _ in range(4000) for c in sample_spec(uni, rng)])
    assert nus.min() >= 6.0 and nus.max() < 10.0
    # mean of U(6,10) is 8, sd of the mean = (4/sqrt(12))/sqrt(n)
    assert abs(nus.mean() - 8.0) < 4 * (4 / math.sqrt(12)) / math.sqrt(nus.size)

    exp = SynthParams(a_nu=0.01, b_nu=0.3, a_n=5, b_n=5, xi_total=1.0, s_xi=0.0,
                      frequency_law="exponential")
    nus = np.array([c.nu for _ in range(4000) for c in sample_spec(exp, rng)])
    scale = (0.3 - 0.01) / 5.0
    assert nus.min() >= 0.01
    assert abs(nus.mean() - (0.01 + scale)) < 4 * scale / math.sqrt(nus.size)
    # the law prioritises low frequencies: median well below the uniform one
    assert np.median(nus) < 0.01 + scale


def test_phase_range():
    p = vibration_defaults()
    rng = np.random.default_rng(11)
    phis = np.array([c.phi for _ in range(500) for c in sample_spec(p, rng)])
    assert phis.min() >= 0.0 and phis.max() < TWO_PI


def test_apply_drift_zero_sigma_keeps_frequency():
    p = vibration_defaults()
    p.s_nu = 0.0
    spec = MotionSpec(vibration=[SineComponent(nu=7.0, phi=0.3, xi=0.5)])
    apply_drift(spec, p, np.random.default_rng(0))
    assert spec.vibration[0].nu_prime == 7.0


def test_crossfade_edges_and_midpoint():
    w_old, w_new = drift_crossfade(np.array([0.0, 12.25, 12.5, 12.75, 20.0]),
                                   12.25, 0.5)
    np.testing.assert_array_equal(w_old, [1.0, 1.0, 0.5, 0.0, 0.0])
    np.testing.assert_array_equal(w_new, [0.0, 0.0, 0.5, 1.0, 1.0])
    # degenerate zero-duration window is a hard switch
    w_old, w_new = drift_crossfade(np.array([12.24, 12.25]), 12.25, 0.0)
    np.testing.assert_array_equal(w_new, [0.0, 1.0])


def test_vibration_single_component_quarter_period():
    spec = MotionSpec(vibration=[SineComponent(nu=7.0, phi=0.0, xi=0.6)])
    f = vibration_force(spec, 1.0 / 28.0)
    assert f == pytest.approx(0.6, abs=1e-12)


def test_vibration_continuous_through_drift():
    spec = make_motion(3)
    dt = 1e-4
    ts = np.arange(12.0, 13.2, dt)
    f = vibration_force(spec, ts)
    # bound the jump by the largest possible slope of the faded sum
    max_slope = sum(c.xi * TWO_PI * max(c.nu, c.nu_prime or 0.0)
                    + 2.0 * c.xi / spec.drift_duration
                    for c in spec.vibration)
    assert np.max(np.abs(np.diff(f))) <= max_slope * dt * 1.01


def test_power_preserved_across_drift():
    # amplitudes are crossfaded, not re-drawn: average power in a long
    # window before the drift matches a long window after, within 5%
    pre, post = [], []
    dt = 1e-3
    t_pre = np.arange(1.0, 11.0, dt)
    t_post = np.arange(14.0, 24.0, dt)
    for seed in range(20):
        spec = make_motion(seed)
        pre.append(np.mean(vibration_force(spec, t_pre) ** 2))
        post.append(np.mean(vibration_force(spec, t_post) ** 2))
    ratio = np.mean(post) / np.mean(pre)
    assert 0.95 < ratio < 1.05


def test_voluntary_derivatives_match_finite_differences():
    spec = make_motion(1)
    h = 1e-6
    for t in (0.3, 5.7, 12.0):
        v_num = (voluntary_position(spec, t + h) - voluntary_position(spec, t - h)) / (2 * h)
        a_num = (voluntary_velocity(spec, t + h) - voluntary_velocity(spec, t - h)) / (2 * h)
        assert voluntary_velocity(spec, t) == pytest.approx(float(v_num), rel=1e-5, abs=1e-6)
        assert voluntary_accel(spec, t) == pytest.approx(float(a_num), rel=1e-5, abs=1e-4)


def test_evaluate_zero_amplitudes():
    spec = MotionSpec(voluntary=[SineComponent(nu=0.1, phi=0.2, xi=0.0)],
                      vibration=[SineComponent(nu=7.0, phi=0.1, xi=0.0)],
                      s_n=0.5)
    x, f_nu, f_n = evaluate(spec, np.linspace(0, 1, 100), np.random.default_rng(0))
    np.testing.assert_array_equal(x, 0.0)
    np.testing.assert_array_equal(f_nu, 0.0)
    assert np.any(f_n != 0.0)


def test_evaluate_noise_handling():
    spec = make_motion(0)
    ts = np.linspace(0, 1, 50)
    _, _, silent = evaluate(spec, ts)          # no rng -> zeros
    np.testing.assert_array_equal(silent, 0.0)
    _, _, n1 = evaluate(spec, ts, np.random.default_rng(1))
    _, _, n2 = evaluate(spec, ts, np.random.default_rng(1))
    np.testing.assert_array_equal(n1, n2)      # seeded -> reproducible
    spec.s_n = 0.0
    _, _, n3 = evaluate(spec, ts, np.random.default_rng(1))
    np.testing.assert_array_equal(n3, 0.0)


def test_make_motion_structure():
    spec = make_motion(4)
    assert 1 <= len(spec.vibration) <= 3
    assert 7 <= len(spec.voluntary) <= 10
    assert spec.seed == 4 and spec.s_n == 0.001
    for c in spec.vibration:
        assert 6.0 <= c.nu < 10.0
        assert c.nu_prime is not None and c.phi_prime is not None
    for c in spec.voluntary:
        assert c.nu >= 0.01
        assert c.nu_prime is None
    nodrift = make_motion(4, drift=False)
    assert all(c.nu_prime is None for c in nodrift.vibration)


def test_yaml_roundtrip(tmp_path):
    spec = make_motion(9)
    path = tmp_path / "motion.yaml"
    save_motion(path, spec)
    back = load_motion(path)
    assert back.seed == 9
    assert back.s_n == spec.s_n
    assert back.drift_start == spec.drift_start
    for ca, cb in zip(spec.voluntary + spec.vibration,
                      back.voluntary + back.vibration):
        assert (ca.nu, ca.phi, ca.xi, ca.nu_prime, ca.phi_prime) == \
               (cb.nu, cb.phi, cb.xi, cb.nu_prime, cb.phi_prime)
    ts = np.linspace(0, 24.5, 1000)
    np.testing.assert_array_equal(vibration_force(spec, ts),
                                  vibration_force(back, ts))


def test_validation_errors():
    with pytest.raises(ValueError):
        SynthParams(a_nu=10.0, b_nu=6.0, a_n=1, b_n=3, xi_total=0.6, s_xi=0.0).validate()
    with pytest.raises(ValueError):
        SynthParams(a_nu=6.0, b_nu=10.0, a_n=0, b_n=3, xi_total=0.6, s_xi=0.0).validate()
    with pytest.raises(ValueError):
        SynthParams(a_nu=6.0, b_nu=10.0, a_n=1, b_n=3, xi_total=0.6, s_xi=0.0,
                    frequency_law="gamma").validate()
    with pytest.raises(ValueError):
        MotionSpec(vibration=[SineComponent(nu=-1.0, phi=0.0, xi=0.1)]).validate()
    with pytest.raises(ValueError):
        MotionSpec(s_n=-0.1).validate()
