import numpy as np
import pytest

from eoqsim import noise


def test_preset_tables():
    nm1 = noise.make_noise_model("NM1")
    assert len(nm1.magnetic) == 6
    assert len(nm1.voltage) == 8
    assert np.isclose(nm1.magnetic[0].p, 7.45654e-4 * 1e12)
    assert np.isclose(nm1.voltage[0].p, 6.92857e-4)
    f0s = [c.f0 for c in nm1.magnetic]
    assert np.isclose(f0s[0], 1e-3) and np.isclose(f0s[-1], 1e5)
    f0v = [c.f0 for c in nm1.voltage]
    assert np.isclose(f0v[0], 1e-3) and np.isclose(f0v[-1], 1e9)
    nm3 = noise.make_noise_model("NM3")
    assert np.isclose(nm3.magnetic[0].p, 4.84165e-5 * 1e12)
    assert np.isclose(nm3.voltage[0].p, 4.59540e-5)
    assert nm1.insensitivity == 10.0
    with pytest.raises(KeyError):
        noise.make_noise_model("NM9")


def test_zero_strength_process():
    comp = noise.OUComponent(1.0, 0.0)
    rng = np.random.default_rng(0)
    s = noise.sample_boundaries(
        noise.NoiseModel((comp,), (comp,)), [0.0, 1.0, 2.0], 1, [(0, 1)], rng)
    assert np.all(s.magnetic == 0)
    assert np.all(s.voltage[(0, 1)] == 0)


def test_psd_matches_autocov():
    # S(f) = (1/pi) p f0 / (f0^2 + f^2); integral over f>=0 equals V = p/2
    comp = noise.OUComponent(10.0, 2.0)
    f = np.linspace(0, 1e4, 2_000_001)
    integral = np.trapezoid(comp.psd(f), f)
    assert abs(integral - comp.variance) < 1e-3 * comp.variance


def test_boundary_sampling_statistics():
    comp = noise.OUComponent(1.0, 2.0)  # V = 1
    model = noise.NoiseModel((comp,), ())
    rng = np.random.default_rng(42)
    dt = 0.2
    s = noise.sample_boundaries(model, [0.0, dt], 20000, [], rng)
    x0 = s.magnetic[:, 0, 0]
    x1 = s.magnetic[:, 0, 1]
    decay = np.exp(-comp.gamma * dt)
    n = len(x0)
    # stationary variance
    assert abs(np.var(x0) - comp.variance) < 4 * comp.variance * np.sqrt(2 / n)
    # conditional mean decay: regression slope of x1 on x0
    slope = np.sum(x0 * x1) / np.sum(x0 * x0)
    assert abs(slope - decay) < 4 / np.sqrt(n)
    resid_var = np.var(x1 - decay * x0)
    expect = comp.variance * -np.expm1(-2 * comp.gamma * dt)
    assert abs(resid_var - expect) < 4 * expect * np.sqrt(2 / n)


def test_long_gap_decorrelates():
    comp = noise.OUComponent(1.0, 2.0)
    model = noise.NoiseModel((comp,), ())
    rng = np.random.default_rng(1)
    s = noise.sample_boundaries(model, [0.0, 50.0], 100000, [], rng)
    x0, x1 = s.magnetic[:, 0, 0], s.magnetic[:, 0, 1]
    corr = np.corrcoef(x0, x1)[0, 1]
    assert abs(corr) < 3 / np.sqrt(len(x0))
    assert abs(np.var(x1) - comp.variance) < 4 * comp.variance * np.sqrt(2 / len(x1))


def test_autocovariance_matches_closed_form():
    comp = noise.OUComponent(0.5, 2.0)
    rng = np.random.default_rng(7)
    dt, n = 0.05, 400
    paths = noise.simulate_path(comp, dt, n, rng, n_paths=4000)
    for lag in (1, 5, 20):
        est = np.mean(paths[:, :-lag] * paths[:, lag:])
        expect = comp.autocov(lag * dt)
        se = np.std(paths[:, :-lag] * paths[:, lag:]) / np.sqrt(paths[:, :-lag].size / 10)
        assert abs(est - expect) < 3 * se + 0.01


def test_periodogram_matches_psd():
    """Averaged periodogram of simulated paths matches S(f) within 10 percent
    over two decades around f0."""
    comp = noise.OUComponent(1.0, 2.0)
    rng = np.random.default_rng(3)
    dt = 0.01
    n = 4096
    paths = noise.simulate_path(comp, dt, n, rng, n_paths=3000)
    spec = np.abs(np.fft.rfft(paths, axis=1)) ** 2 * dt / n
    pxx = 2 * spec.mean(axis=0)  # single-sided
    f = np.fft.rfftfreq(n, dt)
    sel = (f > 0.1) & (f < 10.0)
    ratio = pxx[sel] / comp.psd(f[sel])
    assert np.all(np.abs(np.log(ratio)) < np.log(1.12))


def test_psd_additivity():
    c1, c2 = noise.OUComponent(0.5, 1.0), noise.OUComponent(5.0, 3.0)
    rng = np.random.default_rng(4)
    dt, n = 0.01, 4096
    p1 = noise.simulate_path(c1, dt, n, rng, n_paths=1500)
    p2 = noise.simulate_path(c2, dt, n, rng, n_paths=1500)
    spec = np.abs(np.fft.rfft(p1 + p2, axis=1)) ** 2 * dt / n
    pxx = 2 * spec.mean(axis=0)
    f = np.fft.rfftfreq(n, dt)
    sel = (f > 0.1) & (f < 10.0)  # stay clear of Nyquist aliasing
    target = c1.psd(f[sel]) + c2.psd(f[sel])
    assert np.all(np.abs(np.log(pxx[sel] / target)) < np.log(1.15))


def test_bridge_mean_boundaries():
    comp = noise.OUComponent(0.3, 2.0)
    assert np.isclose(noise.bridge_mean(comp, 1.3, -0.4, 0.0, 2.0, 0.0), 1.3, atol=1e-12)
    assert np.isclose(noise.bridge_mean(comp, 1.3, -0.4, 0.0, 2.0, 2.0), -0.4, atol=1e-12)
    assert np.allclose(noise.bridge_mean(comp, 0.0, 0.0, 0.0, 2.0, np.linspace(0, 2, 7)), 0.0)
    with pytest.raises(ValueError):
        noise.bridge_mean(comp, 0.0, 0.0, 0.0, 1.0, 1.5)


def test_bridge_mean_large_gamma_stable():
    comp = noise.OUComponent(1e9, 1.0)
    t = np.linspace(0, 4e-7, 11)
    f = noise.bridge_mean(comp, 0.7, -0.2, 0.0, 4e-7, t)
    assert np.all(np.isfinite(f))
    assert np.isclose(f[0], 0.7) and np.isclose(f[-1], -0.2)
    assert np.all(np.abs(f[4:7]) < 1e-6)  # interior forgets the boundaries


def test_bridge_mean_vs_monte_carlo():
    """f(midpoint) for gamma*dt = 1 against pinned-path sampling."""
    comp = noise.OUComponent(1.0 / (2 * np.pi), 2.0)  # gamma = 1
    t0, t1 = 0.0, 1.0
    x0, x1 = 1.0, 0.0
    rng = np.random.default_rng(11)
    times = np.linspace(0.05, 0.95, 19)
    paths = noise.sample_bridge_path(comp, x0, x1, t0, t1, times, rng, n_paths=40000)
    mc = paths.mean(axis=0)
    se = paths.std(axis=0) / np.sqrt(paths.shape[0])
    expect = noise.bridge_mean(comp, x0, x1, t0, t1, times)
    assert np.all(np.abs(mc - expect) < 3.5 * se + 1e-4)


def test_bridge_cov_properties_and_monte_carlo():
    comp = noise.OUComponent(1.0 / (2 * np.pi), 2.0)  # gamma = 1, V = 1
    t0, t1 = 0.0, 1.0
    # pinned ends
    assert abs(noise.bridge_cov(comp, t0, t1, t0, 0.5)) < 1e-12
    assert abs(noise.bridge_cov(comp, t0, t1, 0.5, t1)) < 1e-12
    tgrid = np.linspace(0, 1, 100)
    assert np.all(noise.bridge_cov(comp, t0, t1, tgrid, tgrid) >= -1e-12)
    # symmetry
    assert np.isclose(noise.bridge_cov(comp, t0, t1, 0.2, 0.7),
                      noise.bridge_cov(comp, t0, t1, 0.7, 0.2))
    # closed form at (1/3, 2/3) vs Monte Carlo
    rng = np.random.default_rng(12)
    times = np.array([1 / 3, 2 / 3])
    paths = noise.sample_bridge_path(comp, 0.0, 0.0, t0, t1, times, rng, n_paths=60000)
    est = np.mean(paths[:, 0] * paths[:, 1])
    se = np.std(paths[:, 0] * paths[:, 1]) / np.sqrt(paths.shape[0])
    expect = noise.bridge_cov(comp, t0, t1, 1 / 3, 2 / 3)
    assert abs(est - expect) < 3.5 * se
    # explicit formula check
    g = comp.gamma
    direct = (comp.sigma**2 / g) * np.sinh(g / 3) * np.sinh(g / 3) / np.sinh(g)
    assert np.isclose(expect, direct, rtol=1e-12)


def test_bridge_cov_large_gamma_stable():
    comp = noise.OUComponent(1e9, 1.0)
    t0, t1 = 0.0, 4e-7
    t = np.linspace(t0, t1, 9)
    vals = noise.bridge_cov(comp, t0, t1, t, t)
    assert np.all(np.isfinite(vals)) and np.all(vals >= -1e-15)
    assert np.isclose(vals[4], comp.variance, rtol=1e-6)  # interior = stationary


def test_exp_ou_moments_trivial():
    comps = [noise.OUComponent(1.0, 0.0)] * 3
    mean, kernel = noise.exp_ou_conditional_moments(comps, [0, 0, 0], [0, 0, 0],
                                                    0.0, 1.0, np.linspace(0, 1, 5))
    assert np.allclose(mean, 0.0)
    assert np.allclose(kernel(0.3, 0.6), 0.0)


def test_exp_ou_moments_quasistatic():
    """Single component, x0 = x1 = x, gamma*dt << 1: mean ~ x + x^2/2."""
    comp = noise.OUComponent(1e-4, 2e-4)
    x = 0.05
    mean, _ = noise.exp_ou_conditional_moments([comp], [x], [x], 0.0, 1.0, np.array([0.5]))
    assert abs(mean[0] - (x + 0.5 * x * x)) < 1e-5


def test_exp_ou_moments_vs_lognormal_mc():
    """E[exp(X)-1 | boundaries] against pinned-path Monte Carlo of exp(X)."""
    comp = noise.OUComponent(1.0 / (2 * np.pi), 0.02)  # gamma = 1, V = 0.01
    t0, t1, x0, x1 = 0.0, 1.0, 0.15, -0.1
    rng = np.random.default_rng(5)
    times = np.array([0.25, 0.5, 0.75])
    paths = noise.sample_bridge_path(comp, x0, x1, t0, t1, times, rng, n_paths=200000)
    mc = np.mean(np.exp(paths) - 1, axis=0)
    se = np.std(np.exp(paths) - 1, axis=0) / np.sqrt(paths.shape[0])
    mean, _ = noise.exp_ou_conditional_moments([comp], [x0], [x1], t0, t1, times)
    # second-order truncation error ~ V^(3/2)
    assert np.all(np.abs(mean - mc) < 3.5 * se + 5 * comp.variance**1.5)


def test_gaussian_mgf_identity():
    """E[exp(sum X'_n)] = exp(sum g_n(t,t)/2) for zero-boundary bridges."""
    comp = noise.OUComponent(0.3, 0.5)
    rng = np.random.default_rng(6)
    t = np.array([0.4])
    paths = noise.sample_bridge_path(comp, 0.0, 0.0, 0.0, 1.0, t, rng, n_paths=200000)
    mc = np.mean(np.exp(paths[:, 0]))
    expect = np.exp(0.5 * noise.bridge_cov(comp, 0.0, 1.0, 0.4, 0.4))
    assert abs(mc - expect) < 0.01 * expect


def test_nonmonotone_times_rejected():
    model = noise.make_noise_model("NM1")
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        noise.sample_boundaries(model, [0.0, 1.0, 0.5], 1, [], rng)
