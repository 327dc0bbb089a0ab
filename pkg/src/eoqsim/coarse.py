"""Temporal coarse graining: per-gate quantum operations conditioned on noise boundaries.

A gate interval [0, T] carries a piecewise-constant exchange schedule.  Given
boundary values of every OU process at 0 and T, the interval's evolution is
replaced by the channel  U . exp(K)  on one total-Sz block, with

    K(rho) = -i[Heff, rho] + [Om2, rho] - 1/2 {G, rho} + Xi(rho)

built in the interaction picture of the noiseless schedule:

    Heff = sum_a int d_a(t) A_a(t) dt                       (conditioned means)
    Om2  = -1/2 intint_{s<t} ( [S(t), S(s)]
             + sum_a K_a(t,s) [A_a(t), A_a(s)] ),   S(t) = sum_a d_a(t) A_a(t)
    G    = sum_a intint K_a(s,t) A_a(s) A_a(t) ds dt
    Xi(rho) = sum_a intint K_a(s,t) A_a(s) rho A_a(t) ds dt

Magnetic channels couple per dot via 2*pi*x(t)*Sz_dot (x in Hz) with the bridge
mean as drift and the bridge covariance as kernel.  Voltage couples per pulsed
exchange axis via J*(exp(dV/I)-1)*S.S; its conditional mean keeps the
second-order corrections of the exponential, and its centered kernel reduces
to the summed bridge covariances.  Everything is truncated at second order in
the noise strength.

The kernels K_a do not depend on the boundary values, so G, Xi, and the
bridge part of Om2 are precomputed once per (schedule, block) and reused
across realizations; only the drift terms are rebuilt per sample.

Within a pulse segment the voltage operator is constant in the interaction
picture (the pulse commutes with itself), so voltage integrals are scalar;
magnetic operators rotate and are handled on per-segment Gauss grids in the
segment eigenbasis.

Vectorization is row-major: vec(A rho B) = (A kron B^T) vec(rho).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import noise as noise_mod
from . import spin

J_MAX = 2.0 * np.pi * 1e8  # exchange strength during a pulse, rad/s
TWO_PI = 2.0 * np.pi
_GAUSS_Q = 10
_NEST_Q = 6


@dataclass(frozen=True)
class Pulse:
    """Square exchange pulse of angle theta on a chain spin pair."""

    pair: tuple[int, int]
    theta: float
    j: float = J_MAX

    def __post_init__(self):
        if self.j <= 0:
            raise ValueError("exchange rate must be positive")
        if self.theta < 0:
            raise ValueError("pulse angle must be nonnegative (unwrap mod 2 pi)")

    @property
    def duration(self) -> float:
        return self.theta / self.j


@dataclass(frozen=True)
class Idle:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("idle duration must be nonnegative")

    pair = None


@dataclass(frozen=True)
class PulseSchedule:
    """Sequential segments (pulses and idles); at most one pulse at a time."""

    segments: tuple

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def pulse_count(self) -> int:
        return sum(1 for s in self.segments if isinstance(s, Pulse))

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({s.pair for s in self.segments if isinstance(s, Pulse)})


def schedule_from_pulses(pulses: Iterable[tuple[tuple[int, int], float]],
                         j: float = J_MAX) -> PulseSchedule:
    return PulseSchedule(tuple(Pulse(tuple(pair), float(theta), j) for pair, theta in pulses))


@dataclass
class GateChannel:
    """Superoperator on one total-Sz block of the encoded product basis."""

    block_sz: float
    superop: np.ndarray
    schedule_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.superop.shape[0])))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.superop @ rho.reshape(-1)).reshape(d, d)


class QuadratureError(RuntimeError):
    """Raised when an integral discretization fails its self-check."""


# ---------------------------------------------------------------------------
# Block-restricted operators
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def block_indices(orientations: tuple[str, ...], block_sz: float) -> tuple[int, ...]:
    for b in spin.encoded_sz_blocks(len(orientations)):
        if b.total_sz == block_sz:
            return b.basis_indices
    raise ValueError(f"no total-Sz block {block_sz} for {len(orientations)} qubits")


@lru_cache(maxsize=None)
def restricted_exchange(orientations: tuple[str, ...], pair: tuple[int, int],
                        block_sz: float) -> np.ndarray:
    idx = block_indices(orientations, block_sz)
    g = spin.encoded_exchange(orientations, pair)
    return np.ascontiguousarray(g[np.ix_(idx, idx)])


@lru_cache(maxsize=None)
def restricted_sz_dot(orientations: tuple[str, ...], dot: int, block_sz: float) -> np.ndarray:
    """2*pi * Sz_dot restricted to the block (couples Hz-valued noise)."""
    idx = block_indices(orientations, block_sz)
    a = spin.encoded_spin_z(orientations, dot)
    return np.ascontiguousarray(TWO_PI * a[np.ix_(idx, idx)])


def block_dim(orientations: tuple[str, ...], block_sz: float) -> int:
    return len(block_indices(orientations, block_sz))


def _expm_herm(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def noiseless_unitary(orientations: tuple[str, ...], schedule: PulseSchedule,
                      block_sz: float, zeeman: float = 0.0) -> np.ndarray:
    """Ordered product of segment unitaries restricted to the block.

    `zeeman` (g muB Bz, rad/s) contributes the per-block global phase
    exp(-i zeeman m T); it only matters for coherences between blocks.
    """
    d = block_dim(tuple(orientations), block_sz)
    u = np.eye(d, dtype=complex)
    for seg in schedule.segments:
        if isinstance(seg, Pulse) and seg.theta > 0:
            g = restricted_exchange(tuple(orientations), seg.pair, block_sz)
            u = _expm_herm(seg.j * g, seg.duration) @ u
    if zeeman:
        u = u * np.exp(-1j * zeeman * block_sz * schedule.total_duration)
    return u


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------

def _gauss(a: float, b: float, q: int = _GAUSS_Q) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(q)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _subdivided_gauss(a: float, b: float, gamma: float, q: int = 8,
                      max_sub: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes resolving exp(-gamma t) variation over [a, b]."""
    n_sub = int(np.clip(np.ceil(gamma * (b - a) / 3.0), 1, max_sub))
    edges = np.linspace(a, b, n_sub + 1)
    xs = np.empty(n_sub * q)
    ws = np.empty(n_sub * q)
    for k in range(n_sub):
        x, w = _gauss(edges[k], edges[k + 1], q)
        xs[k * q:(k + 1) * q] = x
        ws[k * q:(k + 1) * q] = w
    return xs, ws


# ---------------------------------------------------------------------------
# Triangle quadrature (the bridge kernels are C0 across s = t)
# ---------------------------------------------------------------------------

def _triangle_nodes(a: float, L: float, q_out: int = 12, q_in: int = 12,
                    gamma_inner: float = 0.0):
    """Nodes/weights for intint_{a <= s <= t <= a+L}.

    Returns (t_nodes, t_weights, s_nodes (q_out, n_in), s_weights).  The inner
    grid is optionally subdivided to resolve exp(-gamma (t-s)).
    """
    t_n, t_w = _gauss(a, a + L, q_out)
    s_ns, s_ws = [], []
    for tj in t_n:
        if gamma_inner * (tj - a) > 3.0:
            x, w = _subdivided_gauss(a, tj, gamma_inner, q=q_in)
        else:
            x, w = _gauss(a, tj, q_in)
        s_ns.append(x)
        s_ws.append(w)
    return t_n, t_w, s_ns, s_ws


# ---------------------------------------------------------------------------
# Schedule precomputation
# ---------------------------------------------------------------------------

@dataclass
class _Segment:
    start: float
    duration: float
    pair: tuple[int, int] | None
    evals: np.ndarray             # eigenvalues of the segment Hamiltonian (zeros if idle)
    cv: np.ndarray                # cum^dag @ eigvecs (eigenframe -> lab); cum itself if idle
    aeig: list                    # per-dot Sz operator in the eigenframe
    cum: np.ndarray               # U0(start, 0)
    nodes: np.ndarray
    weights: np.ndarray
    volt_op: np.ndarray | None    # constant interaction-picture J * S.S
    is_pulse: bool


class SchedulePrecomp:
    """Boundary-independent data for one (orientations, schedule, block, model)."""

    def __init__(self, orientations: tuple[str, ...], schedule: PulseSchedule,
                 block_sz: float, model: noise_mod.NoiseModel,
                 include_magnetic: bool = True, include_voltage: bool = True):
        self.orientations = tuple(orientations)
        self.schedule = schedule
        self.block_sz = block_sz
        self.model = model
        self.include_magnetic = include_magnetic and len(model.magnetic) > 0
        self.include_voltage = include_voltage and len(model.voltage) > 0
        self.d = block_dim(self.orientations, block_sz)
        self.n_dots = 3 * len(self.orientations)
        self.T = schedule.total_duration
        self.dot_ops = [restricted_sz_dot(self.orientations, dot, block_sz)
                        for dot in range(self.n_dots)]
        self.volt_comps = tuple(
            noise_mod.OUComponent(c.f0, c.p / model.insensitivity**2)
            for c in model.voltage)
        self._build_segments()
        self._build_mag_nodes()
        self._build_dissipator()

    # -- segment geometry --------------------------------------------------
    def _build_segments(self):
        segs: list[_Segment] = []
        t = 0.0
        cum = np.eye(self.d, dtype=complex)
        for seg in self.schedule.segments:
            if seg.duration <= 0.0:
                continue
            nodes, weights = _gauss(t, t + seg.duration)
            if isinstance(seg, Pulse):
                h0 = seg.j * restricted_exchange(self.orientations, seg.pair, self.block_sz)
                w, v = np.linalg.eigh(h0)
                cv = cum.conj().T @ v
                aeig = [v.conj().T @ a @ v for a in self.dot_ops]
                volt_op = cum.conj().T @ h0 @ cum
                segs.append(_Segment(t, seg.duration, seg.pair, w, cv, aeig,
                                     cum, nodes, weights, volt_op, True))
                cum = _expm_herm(h0, seg.duration) @ cum
            else:
                aeig = [cum.conj().T @ a @ cum for a in self.dot_ops]
                segs.append(_Segment(t, seg.duration, None, np.zeros(self.d),
                                     np.eye(self.d, dtype=complex),
                                     aeig, cum, nodes, weights, None, False))
            t += seg.duration
        self.segments = segs
        self.u_total = cum

    def _mag_op_at(self, seg: _Segment, dot: int, times: np.ndarray) -> np.ndarray:
        """Interaction-picture dot operator at absolute times within seg; (nt, d, d)."""
        if not seg.is_pulse:
            return np.broadcast_to(seg.aeig[dot], (len(times), self.d, self.d))
        u = np.asarray(times) - seg.start
        wdiff = np.subtract.outer(seg.evals, seg.evals)
        phases = np.exp(1j * wdiff[None, :, :] * u[:, None, None])
        m = seg.aeig[dot][None, :, :] * phases
        return np.einsum("ab,nbc,dc->nad", seg.cv, m, seg.cv.conj())

    def _build_mag_nodes(self):
        if not self.segments:
            self.mag_t = np.empty(0)
            self.mag_w = np.empty(0)
            self.mag_ops = np.empty((self.n_dots, 0, self.d, self.d), dtype=complex)
            self.seg_node_slices = []
            return
        self.mag_t = np.concatenate([s.nodes for s in self.segments])
        self.mag_w = np.concatenate([s.weights for s in self.segments])
        slices, k = [], 0
        for s in self.segments:
            slices.append(slice(k, k + len(s.nodes)))
            k += len(s.nodes)
        self.seg_node_slices = slices
        n = len(self.mag_t)
        self.mag_ops = np.empty((self.n_dots, n, self.d, self.d), dtype=complex)
        for dot in range(self.n_dots):
            for s, sl in zip(self.segments, slices):
                self.mag_ops[dot, sl] = self._mag_op_at(s, dot, s.nodes)

    # -- kernels -------------------------------------------------------------
    def _mag_kernel(self, s, t):
        out = 0.0
        for comp in self.model.magnetic:
            out = out + noise_mod.bridge_cov(comp, 0.0, self.T, s, t)
        return out

    # -- exact-enough kernel integrals (stable pointwise kernel + quadrature) --
    def _volt_square(self, seg: _Segment) -> float:
        """intint over seg x seg of the voltage kernel: 2x the ordered triangle."""
        total = 0.0
        a, L = seg.start, seg.duration
        for comp in self.volt_comps:
            if comp.variance == 0.0:
                continue
            t_n, t_w, s_ns, s_ws = _triangle_nodes(a, L, gamma_inner=comp.gamma)
            acc = 0.0
            for tj, wj, xs, ws in zip(t_n, t_w, s_ns, s_ws):
                acc += wj * float(ws @ noise_mod.bridge_cov(comp, 0.0, self.T, xs, tj))
            total += 2.0 * acc
        return total

    def _volt_rect(self, seg_s: _Segment, seg_t: _Segment) -> float:
        """intint with s in seg_s, t in seg_t (disjoint, s earlier; smooth)."""
        total = 0.0
        for comp in self.volt_comps:
            if comp.variance == 0.0:
                continue
            xa, wa = _subdivided_gauss(seg_s.start, seg_s.start + seg_s.duration, comp.gamma)
            xb, wb = _subdivided_gauss(seg_t.start, seg_t.start + seg_t.duration, comp.gamma)
            k = noise_mod.bridge_cov(comp, 0.0, self.T, xa[:, None], xb[None, :])
            total += float(wa @ k @ wb)
        return total

    def _mag_intra_fgrid(self, seg: _Segment):
        """F(om_s, om_t) = intint_{s<t over seg^2} K(s,t) e^{i om_s u_s + i om_t u_t}
        on the (d^2, d^2) grid of eigenfrequency pairs (summed magnetic kernel),
        via nested triangle quadrature on the stable kernel."""
        d = self.d
        om = np.subtract.outer(seg.evals, seg.evals).reshape(-1)  # d^2
        a, L = seg.start, seg.duration
        t_n, t_w, s_ns, s_ws = _triangle_nodes(a, L)
        F = np.zeros((d * d, d * d), dtype=complex)
        for tj, wj, xs, ws in zip(t_n, t_w, s_ns, s_ws):
            kv = self._mag_kernel(xs, tj)
            inner = np.einsum("s,sw->w", ws * kv, np.exp(1j * np.outer(xs - a, om)))
            F += wj * np.outer(inner, np.exp(1j * om * (tj - a)))
        return F  # indexed [om_s-pair, om_t-pair]

    def _build_dissipator(self):
        d = self.d
        G = np.zeros((d, d), dtype=complex)
        Xi = np.zeros((d * d, d * d), dtype=complex)
        Om2b = np.zeros((d, d), dtype=complex)

        if self.include_magnetic and len(self.mag_t):
            t, w = self.mag_t, self.mag_w
            kern = self._mag_kernel(t[:, None], t[None, :])
            # cross-segment rectangles on the node grid (smooth integrands)
            trimask = np.zeros((len(t), len(t)))
            for bi in range(1, len(self.segments)):
                sb = self.seg_node_slices[bi]
                trimask[sb, 0:sb.start] = 1.0
            Wk_full = (w[:, None] * w[None, :]) * kern * trimask  # rows t, cols s (s earlier)
            if np.any(trimask):
                for dot in range(self.n_dots):
                    A = self.mag_ops[dot]
                    Bsum = np.einsum("ts,sab->tab", Wk_full, A)    # weighted A(s) per t-node
                    st_ = np.einsum("tab,tbc->ac", Bsum, A)        # A(s) ... A(t)
                    ts_ = np.einsum("tab,tbc->ac", A, Bsum)        # A(t) ... A(s)
                    G += st_ + ts_
                    Om2b += -0.5 * (ts_ - st_)
                    Xi += np.einsum("tac,tdb->abcd", Bsum, A).reshape(d * d, d * d) \
                        + np.einsum("tac,tdb->abcd", A, Bsum).reshape(d * d, d * d)
            # intra-segment squares: exact eigenframe integrals
            for seg in self.segments:
                F = self._mag_intra_fgrid(seg)      # [om_s-pair, om_t-pair]
                F4 = F.reshape(d, d, d, d)           # [i,k,l,j]: F(om_ik, om_lj)
                Frev4 = F.T.reshape(d, d, d, d)      # [i,k,l,j]: F(om_lj, om_ik)
                Fsym4 = F4 + Frev4
                Fanti4 = Frev4 - F4
                xi_eig = np.zeros((d, d, d, d), dtype=complex)
                g_eig = np.zeros((d, d), dtype=complex)
                om2_eig = np.zeros((d, d), dtype=complex)
                for dot in range(self.n_dots):
                    Ae = seg.aeig[dot]
                    xi_eig += np.einsum("ik,lj,iklj->ijkl", Ae, Ae, Fsym4)
                    g_eig += np.einsum("im,mj,immj->ij", Ae, Ae, Fsym4)
                    om2_eig += -0.5 * np.einsum("im,mj,immj->ij", Ae, Ae, Fanti4)
                cv = seg.cv
                S = np.kron(cv, cv.conj())
                Xi += S @ xi_eig.reshape(d * d, d * d) @ S.conj().T
                G += cv @ g_eig @ cv.conj().T
                Om2b += cv @ om2_eig @ cv.conj().T

        if self.include_voltage:
            by_pair: dict[tuple[int, int], list[_Segment]] = {}
            for s in self.segments:
                if s.pair is not None:
                    by_pair.setdefault(s.pair, []).append(s)
            for segs in by_pair.values():
                n = len(segs)
                c = np.zeros((n, n))
                for a in range(n):
                    c[a, a] = self._volt_square(segs[a])
                    for b in range(a + 1, n):
                        c[a, b] = c[b, a] = self._volt_rect(segs[a], segs[b])
                ops = [s.volt_op for s in segs]
                for a in range(n):
                    for b in range(n):
                        G += c[a, b] * (ops[a] @ ops[b])
                        Xi += c[a, b] * np.kron(ops[a], ops[b].T)
                for a in range(n):
                    for b in range(a + 1, n):  # a earlier; s in a, t in b
                        Om2b += -0.5 * c[a, b] * (ops[b] @ ops[a] - ops[a] @ ops[b])

        self.G = G
        self.Xi = Xi
        self.Om2_bridge = Om2b


_PRECOMP_CACHE: dict = {}


def get_precomp(orientations: tuple[str, ...], schedule: PulseSchedule, block_sz: float,
                model: noise_mod.NoiseModel, include_magnetic: bool = True,
                include_voltage: bool = True) -> SchedulePrecomp:
    key = (tuple(orientations), schedule, block_sz, id(model),
           include_magnetic, include_voltage)
    pc = _PRECOMP_CACHE.get(key)
    if pc is None:
        pc = SchedulePrecomp(tuple(orientations), schedule, block_sz, model,
                             include_magnetic, include_voltage)
        _PRECOMP_CACHE[key] = pc
    return pc


# ---------------------------------------------------------------------------
# Channel assembly (per noise realization)
# ---------------------------------------------------------------------------

def _mag_drift_values(pc: SchedulePrecomp, mag_bounds: np.ndarray,
                      times: np.ndarray) -> np.ndarray:
    """(n_dots, nt) conditioned-mean magnetic values (Hz) at `times`."""
    out = np.zeros((pc.n_dots, len(times)))
    for n, comp in enumerate(pc.model.magnetic):
        for dot in range(pc.n_dots):
            x0, x1 = mag_bounds[dot, n]
            if x0 == 0.0 and x1 == 0.0:
                continue
            out[dot] += noise_mod.bridge_mean(comp, x0, x1, 0.0, pc.T, times)
    return out


def _volt_drift_fn(pc: SchedulePrecomp, bounds: np.ndarray):
    """eta-bar(t): conditional mean of exp(dV/I)-1 for one axis, second order."""
    x0s = bounds[:, 0] / pc.model.insensitivity
    x1s = bounds[:, 1] / pc.model.insensitivity

    def fn(times: np.ndarray) -> np.ndarray:
        mean, _ = noise_mod.exp_ou_conditional_moments(
            pc.volt_comps, x0s, x1s, 0.0, pc.T, times)
        return mean

    return fn


def build_channel(pc: SchedulePrecomp, mag_bounds: np.ndarray | None,
                  volt_bounds: Mapping[tuple[int, int], np.ndarray] | None,
                  schedule_id: str = "", want_diagnostics: bool = False) -> GateChannel:
    """Coarse-grained channel for one boundary realization.

    mag_bounds: (n_dots, n_mag_comps, 2) process values (Hz) at the gate edges.
    volt_bounds: {chain pair: (n_volt_comps, 2)} values (mV) at the gate edges.
    """
    d = pc.d
    dim2 = d * d
    ident = np.eye(d, dtype=complex)

    heff = np.zeros((d, d), dtype=complex)
    om2 = np.array(pc.Om2_bridge, dtype=complex, copy=True)

    drift_nodes = np.zeros((len(pc.mag_t), d, d), dtype=complex)
    have_drift = False

    mag_bounds_arr = None
    if pc.include_magnetic and mag_bounds is not None and len(pc.mag_t):
        mag_bounds_arr = np.asarray(mag_bounds)
        if np.any(mag_bounds_arr):
            have_drift = True
            dvals = _mag_drift_values(pc, mag_bounds_arr, pc.mag_t)
            for dot in range(pc.n_dots):
                heff += np.einsum("i,iab->ab", pc.mag_w * dvals[dot], pc.mag_ops[dot])
                drift_nodes += dvals[dot][:, None, None] * pc.mag_ops[dot]
        else:
            mag_bounds_arr = None

    volt_fns = {}
    if pc.include_voltage and volt_bounds:
        for seg, sl in zip(pc.segments, pc.seg_node_slices):
            if seg.pair is None or seg.pair not in volt_bounds:
                continue
            fn = volt_fns.get(seg.pair)
            if fn is None:
                fn = _volt_drift_fn(pc, np.asarray(volt_bounds[seg.pair]))
                volt_fns[seg.pair] = fn
            gmax = max(c.gamma for c in pc.volt_comps) if pc.volt_comps else 1.0
            x, w = _subdivided_gauss(seg.start, seg.start + seg.duration, gmax)
            val = float(w @ fn(x))
            if val:
                heff += val * seg.volt_op
                have_drift = True
                drift_nodes[sl] += fn(seg.nodes)[:, None, None] * seg.volt_op

    if have_drift:
        def drift_at(seg: _Segment, times: np.ndarray) -> np.ndarray:
            out = np.zeros((len(times), d, d), dtype=complex)
            if mag_bounds_arr is not None:
                dv = _mag_drift_values(pc, mag_bounds_arr, times)
                for dot in range(pc.n_dots):
                    if np.any(dv[dot]):
                        out += dv[dot][:, None, None] * pc._mag_op_at(seg, dot, times)
            if seg.pair is not None and seg.pair in volt_fns:
                out += volt_fns[seg.pair](times)[:, None, None] * seg.volt_op
            return out

        om2 += _ordered_drift_commutator(pc, drift_nodes, drift_at)

    # assemble superoperator
    K = np.zeros((dim2, dim2), dtype=complex)
    if np.any(heff):
        K += -1j * (np.kron(heff, ident) - np.kron(ident, heff.T))
    if np.any(om2):
        K += np.kron(om2, ident) - np.kron(ident, om2.T)
    if np.any(pc.G):
        K += -0.5 * (np.kron(pc.G, ident) + np.kron(ident, pc.G.T)) + pc.Xi

    if np.any(K):
        # trace preservation check: vec(I)^dag K = 0
        tr_row = ident.reshape(-1) @ K
        if np.max(np.abs(tr_row)) > 1e-9 * max(1.0, float(np.abs(K).max())):
            raise QuadratureError(
                f"channel generator violates trace preservation for {schedule_id!r}")
        E = sla_expm(K)
    else:
        E = np.eye(dim2, dtype=complex)

    u = pc.u_total
    chan = np.kron(u, u.conj()) @ E
    meta = {}
    if want_diagnostics:
        meta["generator_norm"] = float(np.linalg.norm(K))
        meta["cp_min_eig"] = float(_choi_min_eig(chan, d))
    return GateChannel(pc.block_sz, chan, schedule_id, meta)


def _ordered_drift_commutator(pc: SchedulePrecomp, drift_nodes: np.ndarray,
                              drift_at) -> np.ndarray:
    """-1/2 intint_{s<t} [S(t), S(s)] over the magnetic node grid.

    Cross-segment pairs use the tensor grid; the in-segment triangle is nested.
    """
    d = pc.d
    out = np.zeros((d, d), dtype=complex)
    w = pc.mag_w
    S = drift_nodes
    prefix = np.zeros((d, d), dtype=complex)
    for bi, seg in enumerate(pc.segments):
        sl = pc.seg_node_slices[bi]
        # cross-segment: s in any earlier segment
        if bi:
            St_w = np.einsum("t,tab->ab", w[sl], S[sl])
            out += -0.5 * (St_w @ prefix - prefix @ St_w)
        # in-segment triangle (nested)
        for j_loc in range(sl.stop - sl.start):
            tj = seg.nodes[j_loc]
            x_in, w_in = _gauss(seg.start, tj, q=_NEST_Q)
            Si = drift_at(seg, x_in)
            Bs = np.einsum("s,sab->ab", w_in, Si)
            At = S[sl][j_loc]
            wj = seg.weights[j_loc]
            out += -0.5 * wj * (At @ Bs - Bs @ At)
        prefix += np.einsum("t,tab->ab", w[sl], S[sl])
    return out


def sla_expm(m: np.ndarray) -> np.ndarray:
    return _scipy_expm(m)


from scipy.linalg import expm as _scipy_expm  # noqa: E402


def _choi_min_eig(chan: np.ndarray, d: int) -> float:
    choi = chan.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    w = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))
    return float(w.min())


def idle_channel(orientations: tuple[str, ...], duration: float, block_sz: float,
                 model: noise_mod.NoiseModel, mag_bounds: np.ndarray | None,
                 include_magnetic: bool = True) -> GateChannel:
    """Coarse-grained idle: magnetic noise only (exchange off while idling)."""
    if duration == 0.0:
        d = block_dim(tuple(orientations), block_sz)
        return GateChannel(block_sz, np.eye(d * d, dtype=complex), "idle0")
    sched = PulseSchedule((Idle(duration),))
    pc = get_precomp(tuple(orientations), sched, block_sz, model,
                     include_magnetic=include_magnetic, include_voltage=False)
    return build_channel(pc, mag_bounds, None, schedule_id=f"idle{duration:g}")


# ---------------------------------------------------------------------------
# Brute-force trajectory oracle
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _spin_block_basis(orientations: tuple[str, ...], block_sz: float) -> np.ndarray:
    """Isometry from the spin-space total-Sz block onto the encoded block basis.

    Returns (d, d) unitary W with  O_encoded = W^dag O_spinblock W.
    """
    n_spins = 3 * len(orientations)
    spin_idx = None
    for b in spin.sz_blocks(n_spins):
        if b.total_sz == block_sz:
            spin_idx = list(b.basis_indices)
    if spin_idx is None:
        raise ValueError("no spin block")
    enc_idx = block_indices(orientations, block_sz)
    B = spin.encoded_product_basis(tuple(orientations))
    return B[np.ix_(spin_idx, list(enc_idx))]


def oracle_channel_by_trajectories(
        orientations: tuple[str, ...], schedule: PulseSchedule, block_sz: float,
        model: noise_mod.NoiseModel,
        mag_bounds: np.ndarray | None,
        volt_bounds: Mapping[tuple[int, int], np.ndarray] | None,
        n_paths: int, dt: float, rng: np.random.Generator,
        include_magnetic: bool = True, include_voltage: bool = True) -> GateChannel:
    """Average of brute-force trajectories over bridge-pinned noise paths.

    Strang-split stepping: exp(-i H0 dt/2) exp(-i Hmag dt) exp(-i Hvolt dt)
    exp(-i H0 dt/2) per step, exact per factor.  dt must resolve the fastest
    OU corner and the largest exchange rate (dt <= 1/(50 max rate)).
    """
    orientations = tuple(orientations)
    rates = [seg.j / TWO_PI for seg in schedule.segments if isinstance(seg, Pulse)]
    if include_magnetic and model.magnetic:
        rates += [c.f0 for c in model.magnetic]
    if include_voltage and model.voltage:
        rates += [c.f0 for c in model.voltage]
    max_rate = max(rates) if rates else 0.0
    if max_rate > 0 and dt > 1.0 / (50.0 * max_rate):
        raise ValueError(f"dt={dt:g} too coarse for max rate {max_rate:g} Hz")

    d = block_dim(orientations, block_sz)
    T = schedule.total_duration
    W = _spin_block_basis(orientations, block_sz)  # spin-block -> encoded-block
    n_spins = 3 * len(orientations)
    spin_idx = None
    for b in spin.sz_blocks(n_spins):
        if b.total_sz == block_sz:
            spin_idx = list(b.basis_indices)

    # diagonal Sz couplings per dot over the spin block (2*pi * (+-1/2), rad/s per Hz)
    lam = np.empty((n_spins, d))
    for dot in range(n_spins):
        for k, idx in enumerate(spin_idx):
            bit = (idx >> (n_spins - 1 - dot)) & 1
            lam[dot, k] = TWO_PI * (0.5 if bit == 0 else -0.5)

    # step plan: per segment, uniform steps of <= dt
    steps = []  # (h0_half, pair_proj or None, j, t_mid array)
    t = 0.0
    for seg in schedule.segments:
        if seg.duration <= 0:
            continue
        n_steps = max(1, int(np.ceil(seg.duration / dt)))
        h = seg.duration / n_steps
        mids = t + (np.arange(n_steps) + 0.5) * h
        if isinstance(seg, Pulse):
            g_spin = spin.exchange_op(n_spins, *seg.pair)[np.ix_(spin_idx, spin_idx)]
            half = _expm_herm(seg.j * g_spin, h / 2)
            proj = 0.25 * np.eye(d) - g_spin  # singlet projector of the pair
            steps.append((half, proj, seg.j, seg.pair, mids, h))
        else:
            steps.append((None, None, 0.0, None, mids, h))
        t += seg.duration

    all_mids = np.concatenate([s[4] for s in steps])

    # pinned noise paths at the step midpoints
    mag_paths = None
    if include_magnetic and model.magnetic and mag_bounds is not None:
        mag_paths = np.zeros((n_paths, n_spins, len(all_mids)))
        for dot in range(n_spins):
            for n, comp in enumerate(model.magnetic):
                x0, x1 = mag_bounds[dot, n]
                mag_paths[:, dot, :] += noise_mod.sample_bridge_path(
                    comp, x0, x1, 0.0, T, all_mids, rng, n_paths)
    volt_paths = {}
    if include_voltage and model.voltage and volt_bounds:
        for pair, bounds in volt_bounds.items():
            acc = np.zeros((n_paths, len(all_mids)))
            for n, comp in enumerate(model.voltage):
                x0, x1 = bounds[n]
                acc += noise_mod.sample_bridge_path(
                    comp, x0, x1, 0.0, T, all_mids, rng, n_paths)
            volt_paths[tuple(pair)] = acc

    U = np.broadcast_to(np.eye(d, dtype=complex), (n_paths, d, d)).copy()
    k0 = 0
    for half, proj, j, pair, mids, h in steps:
        for m in range(len(mids)):
            k = k0 + m
            if half is not None:
                U = half @ U
            if mag_paths is not None:
                phase = np.exp(-1j * h * np.einsum(
                    "pd,dk->pk", mag_paths[:, :, k], lam))
                U = phase[:, :, None] * U
            if pair is not None and tuple(pair) in volt_paths:
                dv = volt_paths[tuple(pair)][:, k]
                dj = j * np.expm1(dv / model.insensitivity)
                theta = dj * h
                # exp(-i theta G) = e^{-i theta/4} [(1 - P) + e^{i theta} P]
                pu = proj @ U
                U = np.exp(-1j * theta / 4)[:, None, None] * (
                    U + (np.exp(1j * theta)[:, None, None] - 1) * pu)
            if half is not None:
                U = half @ U
        k0 += len(mids)

    u_enc = W.conj().T @ U @ W
    superop = np.einsum("pab,pcd->acbd", u_enc, u_enc.conj()).reshape(d * d, d * d) / n_paths
    return GateChannel(block_sz, superop, "oracle", {"n_paths": n_paths, "dt": dt})
