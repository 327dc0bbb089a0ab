"""Numerical pulse-sequence synthesis for encoded gates.

Single-qubit targets are solved as 4-pulse generalized Euler decompositions
over the qubit's Z/N axes (scipy least squares).  Two-qubit targets use a
total-spin sector decomposition of the 6-spin chain: exchange sequences act as
U = sum_S U_S x 1 with multiplicity dimensions 5, 9, 5, 1 for S = 0..3, so the
search runs over small dense matrices.  Objectives combine phase-free encoded
fidelity, leakage-generation norms, and optional anchors (fixed leak-response
amplitudes, leakage-control penalties).  Optimization is batched Adam seeding
plus L-BFGS polish and basin hopping (requires torch).

All conventions (basis phases, orientations) come from `spin`; the two-qubit
chain is NZ-ZN: qubit 1 = spins (0,1,2) with Z pair (1,2), qubit 2 = spins
(3,4,5) with Z pair (3,4).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.optimize as sopt

from . import spin

CHAIN_PAIRS = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]
ORIENTS_2Q = ("nz", "zn")
SECTOR_DIMS = {0: 5, 1: 9, 2: 5, 3: 1}


# ---------------------------------------------------------------------------
# Sector decomposition (two qubits, NZ-ZN)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _sector_frames():
    """Highest-weight orthonormal frames with physical labels, per total S.

    Frame columns (all in the 64-dim encoded product basis):
      S=0: comp 00,01,10,11 ; LL
      S=1: comp 00,01,10,11 ; (L,0),(L,1) ; (0,L),(1,L) ; LL
      S=2: (L,0),(L,1),(0,L),(1,L),(LL)
      S=3: LL
    """
    n = 2
    B = spin.encoded_product_basis(ORIENTS_2Q)
    sz = spin.total_sz_op(6)
    s2 = spin.total_s2_op(6)
    sz_enc = B.conj().T @ sz @ B
    s2_enc = B.conj().T @ s2 @ B
    sp = sum(spin.op_on_spins(6, {i: np.array([[0, 1], [0, 0]], complex)}) for i in range(6))
    sm_enc = B.conj().T @ sp.conj().T @ B

    evals, evecs = np.linalg.eigh(s2_enc)

    def hw_space(S):
        lam = S * (S + 1)
        cols = [k for k in range(64) if abs(evals[k] - lam) < 1e-9]
        Vs = evecs[:, cols]
        ze, zv = np.linalg.eigh(Vs.conj().T @ sz_enc @ Vs)
        keep = [k for k in range(len(ze)) if abs(ze[k] - S) < 1e-9]
        return Vs @ zv[:, keep]

    def proj_gs(W, vecs):
        P = W @ W.conj().T
        cols = []
        for v in vecs:
            u = P @ v
            for c in cols:
                u = u - c * (c.conj() @ u)
            nrm = np.linalg.norm(u)
            assert nrm > 1e-8
            cols.append(u / nrm)
        return np.array(cols).T

    def enc(l1, s1, l2, s2_):
        v = np.zeros(64, complex)
        v[spin.encoded_index([l1, l2], [s1, s2_])] = 1.0
        return v

    frames = {}
    labels = {}
    v1, n1 = [], []
    for x in "01":
        for y in "01":
            v1.append(enc(x, 0.5, y, 0.5)); n1.append(("comp", x + y))
    for y in "01":
        v1.append(enc("L", 1.5, y, -0.5)); n1.append(("Lc", y))
    for x in "01":
        v1.append(enc(x, -0.5, "L", 1.5)); n1.append(("cL", x))
    v1.append(enc("L", 1.5, "L", -0.5)); n1.append(("LL", ""))
    frames[1] = proj_gs(hw_space(1), v1); labels[1] = n1

    v0, n0 = [], []
    for x in "01":
        for y in "01":
            v0.append(enc(x, 0.5, y, -0.5)); n0.append(("comp", x + y))
    v0.append(enc("L", 1.5, "L", -1.5)); n0.append(("LL", ""))
    frames[0] = proj_gs(hw_space(0), v0); labels[0] = n0

    v2, n2 = [], []
    for y in "01":
        v2.append(enc("L", 1.5, y, 0.5)); n2.append(("Lc", y))
    for x in "01":
        v2.append(enc(x, 0.5, "L", 1.5)); n2.append(("cL", x))
    v2.append(enc("L", 1.5, "L", 0.5)); n2.append(("LL", ""))
    frames[2] = proj_gs(hw_space(2), v2); labels[2] = n2

    frames[3] = proj_gs(hw_space(3), [enc("L", 1.5, "L", 1.5)]); labels[3] = [("LL", "")]

    lowered = {}
    for S in (1, 2):
        W = frames[S]
        cols = []
        for k in range(W.shape[1]):
            v = W[:, k]
            m = S
            while m > 1:
                v = sm_enc @ v
                v = v / np.sqrt(S * (S + 1) - m * (m - 1))
                m -= 1
            cols.append(v)
        lowered[S] = np.array(cols).T
    return frames, labels, lowered


@lru_cache(maxsize=None)
def sector_generators():
    """Per-pair singlet projectors in the labeled sector frames."""
    frames, _, _ = _sector_frames()
    gens = {}
    for p in CHAIN_PAIRS:
        g = spin.encoded_exchange(ORIENTS_2Q, p)
        proj = 0.25 * np.eye(64) - g
        gens[p] = {S: frames[S].conj().T @ proj @ frames[S] for S in SECTOR_DIMS}
    return gens


def logical_target_matrix(kind: str) -> np.ndarray:
    """4x4 logical action on labels 00,01,10,11 (qubit 1 index first)."""
    order = ["00", "01", "10", "11"]
    T = np.zeros((4, 4))
    for c, s in enumerate(order):
        l = list(s)
        if kind == "cnot_c2":      # control = qubit 2, target = qubit 1
            if l[1] == "1":
                l[0] = "0" if l[0] == "1" else "1"
        elif kind == "cnot_c1":    # control = qubit 1, target = qubit 2
            if l[0] == "1":
                l[1] = "0" if l[1] == "1" else "1"
        elif kind == "swap":
            l = l[::-1]
        elif kind == "identity":
            pass
        else:
            raise ValueError(kind)
        T[order.index("".join(l)), c] = 1
    return T


#: printed leak-response anchor for the non-leakage-controlled CNOT
#: (target qubit 1 leaked, control qubit 2 = |0>, NZ-ZN chain)
FWCX_LEAK_IN = (("L", 0.5), ("0", 0.5))
FWCX_LEAK_OUT = [((("L", 0.5), ("0", 0.5)), -0.69), ((("L", 0.5), ("1", 0.5)), 0.11),
                 ((("L", 1.5), ("1", -0.5)), 0.37), ((("L", -0.5), ("L", 1.5)), 0.53),
                 ((("L", 0.5), ("L", 0.5)), -0.15), ((("L", 1.5), ("L", -0.5)), -0.27)]


def leak_anchor_vectors():
    """Sector components (S=1,2) of the anchor input and output states."""
    _, _, lowered = _sector_frames()
    vin = np.zeros(64, complex)
    vin[spin.encoded_index([l for l, _ in FWCX_LEAK_IN],
                           [s for _, s in FWCX_LEAK_IN])] = 1.0
    vout = np.zeros(64, complex)
    for (st1, st2), amp in FWCX_LEAK_OUT:
        vout[spin.encoded_index([st1[0], st2[0]], [st1[1], st2[1]])] = amp
    vout = vout / np.linalg.norm(vout)
    return ({S: lowered[S].conj().T @ vin for S in (1, 2)},
            {S: lowered[S].conj().T @ vout for S in (1, 2)})


# ---------------------------------------------------------------------------
# Torch search problem
# ---------------------------------------------------------------------------

class TwoQubitSynth:
    """Batched objective for two-qubit sequence search.

    loss = (1 - joint comp fidelity over S=0,1) + leak generation
           + eq13_weight * (1 - |<anchor_out|U|anchor_in>|^2)
           + leakctl_weight * (cross-family leakage transfer norms)
    """

    def __init__(self, pattern: Sequence[tuple[int, int]], logical: str = "cnot_c2",
                 eq13_weight: float = 0.0, leakctl_weight: float = 0.0):
        import torch
        self.torch = torch
        self.pattern = [tuple(p) for p in pattern]
        gens = sector_generators()
        tt = lambda x: torch.tensor(np.asarray(x), dtype=torch.complex128)
        self.G = {S: {p: tt(gens[p][S]) for p in CHAIN_PAIRS} for S in (0, 1, 2)}
        self.T4 = tt(logical_target_matrix(logical))
        self.eq13_weight = eq13_weight
        self.leakctl_weight = leakctl_weight
        if eq13_weight:
            vin, vout = leak_anchor_vectors()
            self.anchor = {S: (tt(vin[S]), tt(vout[S])) for S in (1, 2)}
        self.eyes = {S: torch.eye(SECTOR_DIMS[S], dtype=torch.complex128)
                     for S in (0, 1, 2)}

    def unitaries(self, theta):
        torch = self.torch
        Us = {}
        for S in (0, 1, 2):
            U = self.eyes[S].expand(theta.shape[0], -1, -1).clone()
            for k, p in enumerate(self.pattern):
                ph = torch.exp(1j * theta[:, k]).reshape(-1, 1, 1)
                U = U + (ph - 1) * torch.matmul(self.G[S][p], U)
            Us[S] = U
        return Us

    def loss(self, theta, comp_weight=1.0):
        torch = self.torch
        Us = self.unitaries(theta)
        c0 = Us[0][:, :4, :4]
        c1 = Us[1][:, :4, :4]
        tr = (torch.einsum("ab,nab->n", self.T4.conj(), c0)
              + torch.einsum("ab,nab->n", self.T4.conj(), c1))
        fid = (tr.conj() * tr).real / 64.0
        lk0 = Us[0][:, 4:, :4]
        lk1 = Us[1][:, 4:, :4]
        leak = ((lk0.conj() * lk0).real.sum(dim=(1, 2))
                + (lk1.conj() * lk1).real.sum(dim=(1, 2))) / 4.0
        L = comp_weight * (1 - fid) + leak
        if self.eq13_weight:
            amp = 0
            for S in (1, 2):
                i, o = self.anchor[S]
                amp = amp + torch.einsum("i,nij,j->n", o.conj(), Us[S], i)
            L = L + self.eq13_weight * (1 - (amp.conj() * amp).real)
        if self.leakctl_weight:
            pen = 0
            # S=1 frame: comp 0-3, Lc 4-5, cL 6-7, LL 8 ; S=2: Lc 0-1, cL 2-3, LL 4
            b1 = Us[1][:, [0, 1, 2, 3, 6, 7, 8], :][:, :, [4, 5]]
            b2 = Us[1][:, [0, 1, 2, 3, 4, 5, 8], :][:, :, [6, 7]]
            b3 = Us[2][:, [2, 3, 4], :][:, :, [0, 1]]
            b4 = Us[2][:, [0, 1, 4], :][:, :, [2, 3]]
            for b in (b1, b2, b3, b4):
                pen = pen + (b.conj() * b).real.sum(dim=(1, 2))
            L = L + self.leakctl_weight * pen
        return L

    # -- optimizers ----------------------------------------------------------
    def adam(self, n_restart, iters, seed, lr=0.15, theta0=None):
        torch = self.torch
        g = torch.Generator().manual_seed(seed)
        K = len(self.pattern)
        th = torch.rand(n_restart, K, generator=g, dtype=torch.float64) * 2 * np.pi
        if theta0 is not None:
            th[0] = torch.tensor(theta0)
        th.requires_grad_(True)
        opt = torch.optim.Adam([th], lr=lr)
        for _ in range(iters):
            opt.zero_grad()
            self.loss(th).sum().backward()
            opt.step()
        with torch.no_grad():
            L = self.loss(th)
        order = torch.argsort(L)
        return th.detach()[order], L.detach()[order]

    def lbfgs(self, theta0, max_iter=900):
        torch = self.torch
        th = torch.as_tensor(theta0, dtype=torch.float64).clone().reshape(1, -1)
        th.requires_grad_(True)
        opt = torch.optim.LBFGS([th], max_iter=max_iter, tolerance_grad=1e-16,
                                tolerance_change=1e-18, history_size=60,
                                line_search_fn="strong_wolfe")
        def closure():
            opt.zero_grad()
            L = self.loss(th).sum()
            L.backward()
            return L
        opt.step(closure)
        with torch.no_grad():
            L = self.loss(th).sum().item()
        return th.detach().reshape(-1).numpy(), L

    def basin_hop(self, theta0, rounds=60, seed=0, sigmas=(0.05, 0.15, 0.4)):
        torch = self.torch
        rng = np.random.default_rng(seed)
        best_th, best_L = self.lbfgs(theta0)
        for r in range(rounds):
            sigma = sigmas[r % len(sigmas)]
            trial = best_th + rng.normal(0, sigma, len(best_th))
            th, L = self.lbfgs(trial)
            if L < best_L:
                best_th, best_L = th, L
            if best_L < 1e-11:
                break
        return best_th, best_L


# ---------------------------------------------------------------------------
# Single-qubit synthesis
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _logical_generators(orientation: str):
    """2x2 computational restrictions of the Z- and N-pair exchange generators."""
    gz = spin.encoded_exchange((orientation,), spin.orientation_pair(orientation))
    gn = spin.encoded_exchange((orientation,), spin.orientation_n_pair(orientation))
    c = spin.computational_indices(0.5)
    return gz[np.ix_(c, c)], gn[np.ix_(c, c)]


def synth_single_qubit(target: np.ndarray, orientation: str = "nz",
                       budget: int = 4, n_restarts: int = 60,
                       seed: int = 0, tol: float = 1e-10):
    """Pulse angles implementing a logical 2x2 unitary with alternating Z/N pulses.

    Tries both starting axes; returns (pairs, angles, residual) with residual =
    1 - |tr(T^dag U)|^2 / 4.  Raises RuntimeError if no decomposition reaches
    the tolerance (4 pulses suffice for any SU(2) element with these axes).
    """
    import scipy.linalg as sla
    gz, gn = _logical_generators(orientation)
    zpair = spin.orientation_pair(orientation)
    npair = spin.orientation_n_pair(orientation)
    rng = np.random.default_rng(seed)

    def seq_u(gens, thetas):
        u = np.eye(2, dtype=complex)
        for g, th in zip(gens, thetas):
            u = sla.expm(-1j * th * g) @ u
        return u

    best = None
    for start_axis in (0, 1):
        gens = [(gz if (k + start_axis) % 2 == 0 else gn) for k in range(budget)]
        pairs = [(zpair if (k + start_axis) % 2 == 0 else npair) for k in range(budget)]
        for trial in range(n_restarts):
            x0 = rng.uniform(0, 2 * np.pi, budget)
            res = sopt.minimize(
                lambda th: 1 - abs(np.trace(target.conj().T @ seq_u(gens, th)))**2 / 4,
                x0, method="Nelder-Mead",
                options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 6000})
            if best is None or res.fun < best[2]:
                best = (pairs, np.mod(res.x, 2 * np.pi), res.fun)
            if best[2] < tol:
                return best
    if best[2] >= tol:
        raise RuntimeError(f"single-qubit synthesis failed, best residual {best[2]:.2e}")
    return best
