import numpy as np
import pytest
import scipy.linalg as sla
from scipy import integrate

from eoqsim import coarse, noise, spin

NM1 = noise.make_noise_model("NM1")
ZERO = noise.NoiseModel(
    tuple(noise.OUComponent(c.f0, 0.0) for c in NM1.magnetic),
    tuple(noise.OUComponent(c.f0, 0.0) for c in NM1.voltage),
)


def rand_rho(d, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def mag_bounds_like(model, n_dots, rng=None, scale=1.0):
    if rng is None:
        return np.zeros((n_dots, len(model.magnetic), 2))
    out = np.empty((n_dots, len(model.magnetic), 2))
    for n, c in enumerate(model.magnetic):
        sd = np.sqrt(c.variance) * scale
        out[:, n, :] = rng.normal(0.0, max(sd, 1e-300), (n_dots, 2))
    return out


def volt_bounds_like(model, pairs, rng=None, scale=1.0):
    out = {}
    for p in pairs:
        b = np.empty((len(model.voltage), 2))
        for n, c in enumerate(model.voltage):
            sd = np.sqrt(c.variance) * scale
            b[n] = rng.normal(0.0, max(sd, 1e-300), 2) if rng is not None else 0.0
        out[p] = b
    return out


def test_schedule_invariants():
    p = coarse.Pulse((0, 1), np.pi)
    assert np.isclose(p.duration * p.j, np.pi)
    s = coarse.PulseSchedule((p, coarse.Idle(1e-9), coarse.Pulse((1, 2), 0.5)))
    assert s.pulse_count == 2
    assert np.isclose(s.total_duration, p.duration + 1e-9 + 0.5 / coarse.J_MAX)
    with pytest.raises(ValueError):
        coarse.Pulse((0, 1), -0.1)


def test_noiseless_unitary_empty_and_inverse():
    orients = ("zn",)
    empty = coarse.PulseSchedule(())
    u = coarse.noiseless_unitary(orients, empty, 0.5)
    assert np.allclose(u, np.eye(3))
    # theta followed by 2 pi - theta inverts up to a phase
    sched = coarse.schedule_from_pulses([((0, 1), 0.7), ((0, 1), 2 * np.pi - 0.7)])
    u = coarse.noiseless_unitary(orients, sched, 0.5)
    phase = u[0, 0]
    assert abs(abs(phase) - 1) < 1e-12
    assert np.allclose(u, phase * np.eye(3), atol=1e-12)


def test_noiseless_pi_pulse_vs_expm():
    orients = ("nz", "zn")
    sched = coarse.schedule_from_pulses([((2, 3), np.pi)])
    for m in (0.0, 1.0):
        u = coarse.noiseless_unitary(orients, sched, m)
        g = coarse.restricted_exchange(orients, (2, 3), m)
        assert np.allclose(u, sla.expm(-1j * np.pi * g), atol=1e-12)


def test_zero_noise_channel_is_noiseless_conjugation():
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), 1.1), ((1, 2), 2.2)])
    pc = coarse.SchedulePrecomp(orients, sched, 0.5, ZERO)
    ch = coarse.build_channel(pc, mag_bounds_like(ZERO, 3), volt_bounds_like(ZERO, sched.pairs()))
    u = coarse.noiseless_unitary(orients, sched, 0.5)
    rho = rand_rho(3, 1)
    assert np.allclose(ch.apply(rho), u @ rho @ u.conj().T, atol=1e-13)


def test_trace_and_hermiticity_preservation():
    orients = ("zn",)
    rng = np.random.default_rng(5)
    sched = coarse.schedule_from_pulses([((0, 1), np.pi), ((1, 2), 0.4)])
    pc = coarse.SchedulePrecomp(orients, sched, 0.5, NM1)
    mb = mag_bounds_like(NM1, 3, rng)
    vb = volt_bounds_like(NM1, sched.pairs(), rng)
    ch = coarse.build_channel(pc, mb, vb)
    rho = rand_rho(3, 2)
    out = ch.apply(rho)
    assert abs(np.trace(out) - 1) < 1e-9
    assert np.linalg.norm(out - out.conj().T) < 1e-9


def test_block_preservation_exact_by_construction():
    # operators are restricted to the block; nothing to leak into. Assert the
    # generator inputs are block-restricted shapes.
    orients = ("nz", "zn")
    sched = coarse.schedule_from_pulses([((2, 3), np.pi)])
    pc = coarse.SchedulePrecomp(orients, sched, 1.0, NM1)
    assert pc.d == 15
    assert pc.G.shape == (15, 15)


def test_idle_channel_magnetic_dephasing_closed_form():
    """400 ns idle, one qubit, NM1 magnetic noise, zero boundaries: the
    (01,01) coherence factor matches an adaptive-quadrature evaluation of the
    same second-order generator to 1e-6."""
    orients = ("zn",)
    T = 400e-9
    ch = coarse.idle_channel(orients, T, 0.5, NM1,
                             np.zeros((3, len(NM1.magnetic), 2)))
    # independent construction: K = -1/2{G,.} + Xi with
    # G = sum_dots Q * A_dot^2, Xi = sum_dots Q * A_dot x A_dot^T,
    # Q = intint over [0,T]^2 of sum_n g_n (adaptive quadrature)
    Q = 0.0
    for comp in NM1.magnetic:
        # split at the diagonal kink so the adaptive rule converges fast
        val1, _ = integrate.dblquad(
            lambda s, t: noise.bridge_cov(comp, 0.0, T, s, t), 0, T,
            lambda t: 0, lambda t: t, epsrel=1e-11)
        Q += 2 * val1
    d = 3
    K = np.zeros((9, 9), dtype=complex)
    ident = np.eye(3)
    for dot in range(3):
        A = coarse.restricted_sz_dot(orients, dot, 0.5)
        G = Q * A @ A
        K += -0.5 * (np.kron(G, ident) + np.kron(ident, G.T)) + Q * np.kron(A, A.T)
    expect = sla.expm(K)
    got_pc = coarse.get_precomp(orients, coarse.PulseSchedule((coarse.Idle(T),)), 0.5, NM1,
                                include_voltage=False)
    got = coarse.build_channel(got_pc, np.zeros((3, len(NM1.magnetic), 2)), None)
    assert np.max(np.abs(got.superop - expect)) < 1e-6
    # populations preserved under uniform-field coupling is implied: check
    # that a diagonal computational state stays diagonal in populations trace
    rho = np.diag([0.4, 0.6, 0.0]).astype(complex)
    out = got.apply(rho)
    assert abs(np.trace(out) - 1) < 1e-10


def test_idle_zero_duration_identity():
    ch = coarse.idle_channel(("zn",), 0.0, 0.5, NM1, None)
    assert np.allclose(ch.superop, np.eye(9))


def test_second_order_scaling():
    """Scaling noise strength by 2 (p by 4) scales the boundary-independent
    generator (dissipator) by 4 within 10 percent."""
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), np.pi)])
    pc1 = coarse.SchedulePrecomp(orients, sched, 0.5, NM1)
    pc4 = coarse.SchedulePrecomp(orients, sched, 0.5, NM1.scaled(4.0, 4.0))
    n1 = np.linalg.norm(pc1.G) + np.linalg.norm(pc1.Xi)
    n4 = np.linalg.norm(pc4.G) + np.linalg.norm(pc4.Xi)
    assert abs(n4 / n1 - 4.0) < 0.4


@pytest.mark.slow
def test_ensemble_consistency_idle():
    """Averaging conditioned idle channels over boundary samples reproduces the
    unconditioned free-decay dephasing of a 1-qubit coherence."""
    orients = ("zn",)
    T = 400e-9
    rng = np.random.default_rng(9)
    n_samp = 600
    times = np.array([0.0, T])
    acc = np.zeros((9, 9), dtype=complex)
    for _ in range(n_samp):
        s = noise.sample_boundaries(NM1, times, 3, [], rng)
        mb = s.magnetic  # (3, ncomp, 2)
        ch = coarse.idle_channel(orients, T, 0.5, NM1, mb)
        acc += ch.superop
    acc /= n_samp
    # unconditioned second-order dephasing: replace bridge kernel by the
    # stationary autocovariance; same operator structure.
    Q = sum(noise.autocov_double_integral(c, T) for c in NM1.magnetic)
    ident = np.eye(3)
    K = np.zeros((9, 9), dtype=complex)
    for dot in range(3):
        A = coarse.restricted_sz_dot(orients, dot, 0.5)
        G = Q * A @ A
        K += -0.5 * (np.kron(G, ident) + np.kron(ident, G.T)) + Q * np.kron(A, A.T)
    expect = sla.expm(K)
    rho = np.full((3, 3), 1 / 3, dtype=complex)
    got_rho = (acc @ rho.reshape(-1)).reshape(3, 3)
    want_rho = (expect @ rho.reshape(-1)).reshape(3, 3)
    # Monte Carlo error ~ spread/sqrt(n); tolerance generous
    assert np.max(np.abs(got_rho - want_rho)) < 5e-3


@pytest.mark.slow
def test_oracle_agreement_single_qubit_pulse():
    """build_channel vs trajectory oracle, NM1, one pi pulse on a 1-qubit block."""
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), np.pi)])
    rng = np.random.default_rng(21)
    pc = coarse.SchedulePrecomp(orients, sched, 0.5, NM1)
    rho = np.full((3, 3), 1 / 3, dtype=complex)
    devs = []
    for k in range(6):
        mb = mag_bounds_like(NM1, 3, rng)
        vb = volt_bounds_like(NM1, sched.pairs(), rng)
        ch = coarse.build_channel(pc, mb, vb)
        orc = coarse.oracle_channel_by_trajectories(
            orients, sched, 0.5, NM1, mb, vb, n_paths=600, dt=1.9e-11,
            rng=np.random.default_rng(100 + k))
        devs.append(np.linalg.norm(ch.apply(rho) - orc.apply(rho)))
    assert np.mean(devs) < 1e-3


@pytest.mark.slow
def test_oracle_step_halving():
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), np.pi)])
    rng = np.random.default_rng(31)
    mb = mag_bounds_like(NM1, 3, rng)
    vb = volt_bounds_like(NM1, sched.pairs(), rng)
    rho = np.full((3, 3), 1 / 3, dtype=complex)
    a = coarse.oracle_channel_by_trajectories(orients, sched, 0.5, NM1, mb, vb,
                                              n_paths=400, dt=2e-11,
                                              rng=np.random.default_rng(7))
    b = coarse.oracle_channel_by_trajectories(orients, sched, 0.5, NM1, mb, vb,
                                              n_paths=400, dt=1e-11,
                                              rng=np.random.default_rng(7))
    # step-size sensitivity below the statistical scale
    stat = 1.0 / np.sqrt(400)
    assert np.linalg.norm(a.apply(rho) - b.apply(rho)) < 0.2 * stat


def test_oracle_zero_noise_is_noiseless():
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), 1.3)])
    ch = coarse.oracle_channel_by_trajectories(
        orients, sched, 0.5, ZERO, np.zeros((3, 6, 2)),
        {(0, 1): np.zeros((8, 2))}, n_paths=3, dt=1e-11,
        rng=np.random.default_rng(0))
    u = coarse.noiseless_unitary(orients, sched, 0.5)
    rho = rand_rho(3, 3)
    assert np.allclose(ch.apply(rho), u @ rho @ u.conj().T, atol=1e-10)


def test_oracle_rejects_coarse_dt():
    orients = ("zn",)
    sched = coarse.schedule_from_pulses([((0, 1), np.pi)])
    with pytest.raises(ValueError):
        coarse.oracle_channel_by_trajectories(
            orients, sched, 0.5, NM1, np.zeros((3, 6, 2)), {}, n_paths=2,
            dt=1e-9, rng=np.random.default_rng(0))
