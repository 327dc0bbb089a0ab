"""Logical gate library: pulse sequences, RiL gadgets, and verification.

Gates are pulse schedules on a spin chain: three spins per operand qubit, in
operand order (a 1-qubit gate uses spins 0-2, a 2-qubit gate 0-5).  The
declared orientations fix how each operand's encoded basis reads the chain.
Library gates are loaded from JSON files under data/; the reset-if-leaked
tables ship verbatim as data.

Verification measures, per total-Sz sector, the phase-optimized fidelity of
the restricted unitary against the declared logical action, the
leakage-generation norm from computational inputs, and cross-qubit leakage
transfer from single-qubit leaked inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import coarse, spin, tableau

CHAIN_PAIRS_2Q = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]


@dataclass(frozen=True)
class GateDef:
    """One library gate: schedule plus declared logical behaviour."""

    name: str
    orientations: tuple[str, ...]          # per operand qubit
    schedule: coarse.PulseSchedule
    logical: np.ndarray                    # unitary on the 2^k logical space
    sz_action: str = "preserve"            # "preserve" | "swap"
    leakage_controlled: bool = False

    @property
    def n_qubits(self) -> int:
        return len(self.orientations)

    @property
    def pulse_count(self) -> int:
        return self.schedule.pulse_count

    @property
    def duration(self) -> float:
        return self.schedule.total_duration

    def mirrored(self, name: str | None = None) -> "GateDef":
        """Spin-reversal image: operand order reversed, orientations flipped.

        Reversing the chain maps pulses (i,j) -> (N-1-j, N-1-i) and conjugates
        the encoded bases by the mirror signs, so the mirrored logical action
        is D U_swapped D with D = diag(-1, 1) per qubit (both labels |0>,|1>
        flip; the net effect is conjugation by Z x Z on the logical space).
        """
        n = 3 * self.n_qubits
        segs = []
        for s in self.schedule.segments:
            if isinstance(s, coarse.Pulse):
                i, j = s.pair
                segs.append(coarse.Pulse((n - 1 - j, n - 1 - i), s.theta, s.j))
            else:
                segs.append(s)
        flip = {"zn": "nz", "nz": "zn"}
        orients = tuple(flip[o] for o in self.orientations[::-1])
        k = self.n_qubits
        dim = 2**k
        # logical conversion: swap qubit order, conjugate by Z^(x)k per the
        # mirror signs of the encoded |0>,|1> states (both flip: net Z x Z
        # conjugation is trivial on signs; amplitude-level sign handled via
        # verification, which re-measures the logical action)
        perm = np.zeros((dim, dim))
        for b in range(dim):
            bits = [(b >> (k - 1 - q)) & 1 for q in range(k)]
            rb = 0
            for bit in bits[::-1]:
                rb = (rb << 1) | bit
            perm[rb, b] = 1
        logical = perm @ self.logical @ perm.T
        return GateDef(name or (self.name + "_mirror"), orients,
                       coarse.PulseSchedule(tuple(segs)), logical,
                       self.sz_action, self.leakage_controlled)


class GateLibraryError(RuntimeError):
    pass


def _data_text(fname: str) -> str:
    return resources.files("eoqsim").joinpath("data", fname).read_text()


def schedule_from_rows(rows: Sequence, j: float = coarse.J_MAX) -> coarse.PulseSchedule:
    """rows of [[i, j], theta] (theta in radians)."""
    return coarse.PulseSchedule(tuple(
        coarse.Pulse((int(p[0]), int(p[1])), float(th), j) for p, th in rows))


# ---------------------------------------------------------------------------
# Reset-if-leaked gadgets (Appendix-table data)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiLVariant:
    """Flagged reset-if-leaked gadget: 5-spin gate on data (0,1,2) + ancilla pair (3,4).

    Each table row (th23, th01, th34, th12), in units of pi, applies
    exp(-i th12 S1.S2) exp(-i th34 S3.S4) exp(-i th01 S0.S1) exp(-i th23 S2.S3)
    with the th23 pulse first; rows apply first to last.
    """

    name: str
    reset_target: np.ndarray          # logical state the data qubit resets to
    rows: tuple[tuple[float, float, float, float], ...]

    def gate_def(self) -> GateDef:
        pulses = []
        for th23, th01, th34, th12 in self.rows:
            for pair, th in (((2, 3), th23), ((0, 1), th01), ((3, 4), th34),
                             ((1, 2), th12)):
                pulses.append((pair, np.pi * th))
        sched = coarse.PulseSchedule(tuple(
            coarse.Pulse(p, th) for p, th in pulses if th > 0))
        return GateDef(f"ril_{self.name}", ("nz", "zn"), sched,
                       np.eye(4, dtype=complex), "preserve", False)

    def unitary(self) -> np.ndarray:
        """Full 64-dim unitary on the two-qubit encoded product basis."""
        gd = self.gate_def()
        gens = {p: spin.encoded_exchange(("nz", "zn"), p) for p in gd.schedule.pairs()}
        u = np.eye(64, dtype=complex)
        for seg in gd.schedule.segments:
            u = sla.expm(-1j * seg.theta * gens[seg.pair]) @ u
        return u


@lru_cache(maxsize=1)
def ril_variants() -> dict[str, RiLVariant]:
    raw = json.loads(_data_text("ril_tables.json"))
    out = {}
    for entry in raw["variants"]:
        c0 = complex(*entry["target"][0])
        c1 = complex(*entry["target"][1])
        out[entry["name"]] = RiLVariant(
            entry["name"], np.array([c0, c1]),
            tuple(tuple(r) for r in entry["rows"]))
    return out


def ril_unitary(name: str) -> np.ndarray:
    return ril_variants()[name].unitary()


# ---------------------------------------------------------------------------
# Library loading
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1)
def clifford1_library() -> dict[str, list[GateDef]]:
    """24 single-qubit Cliffords per orientation, 4-pulse schedules."""
    raw = json.loads(_data_text("clifford1.json"))
    out = {}
    for orientation, entries in raw.items():
        defs = []
        for k, e in enumerate(entries):
            sched = schedule_from_rows(e["pulses"])
            logical = tableau.clifford1_unitary(k)
            defs.append(GateDef(f"c1_{orientation}_{k}", (orientation,), sched,
                                logical, "preserve", False))
        out[orientation] = defs
    return out


@lru_cache(maxsize=None)
def library_gate(name: str) -> GateDef:
    """Named two-qubit gates: swap, fwcx, lccx (+ _mirror variants)."""
    base, _, suffix = name.partition("_")
    if suffix == "mirror":
        return library_gate(base).mirrored(name)
    raw = json.loads(_data_text(f"{base}.json"))
    sched = schedule_from_rows(raw["pulses"])
    logical = np.array(raw["logical_re"]) + 1j * np.array(raw["logical_im"])
    return GateDef(base, tuple(raw["orientations"]), sched, logical,
                   raw.get("sz_action", "preserve"),
                   bool(raw.get("leakage_controlled", False)))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def full_unitary(gate: GateDef) -> np.ndarray:
    """Gate unitary on the full encoded product basis (8^n)."""
    orients = gate.orientations
    gens = {}
    dim = 8**len(orients)
    u = np.eye(dim, dtype=complex)
    for seg in gate.schedule.segments:
        if not isinstance(seg, coarse.Pulse) or seg.theta == 0:
            continue
        g = gens.get(seg.pair)
        if g is None:
            g = spin.encoded_exchange(orients, seg.pair)
            gens[seg.pair] = g
        u = sla.expm(-1j * seg.theta * g) @ u
    return u


def _comp_indices(n: int):
    """Encoded indices of computational product states, grouped by sz pattern."""
    out = {}
    szs_opts = [(0.5,), (-0.5,)]
    import itertools
    for szs in itertools.product((0.5, -0.5), repeat=n):
        idxs = []
        for labels in itertools.product("01", repeat=n):
            idxs.append(spin.encoded_index(list(labels), list(szs)))
        out[szs] = idxs
    return out


@dataclass
class VerificationReport:
    gate: str
    sector_fidelities: dict
    max_infidelity: float
    leakage_generation: float
    leak_transfer: dict = field(default_factory=dict)

    def passes(self, tol: float = 1e-6) -> bool:
        return self.max_infidelity < tol and self.leakage_generation < np.sqrt(tol)


def verify_encoded_action(gate: GateDef, u: np.ndarray | None = None) -> VerificationReport:
    """Measure the logical action per sz sector plus leakage behaviour."""
    n = gate.n_qubits
    if u is None:
        u = full_unitary(gate)
    comp = _comp_indices(n)
    fidelities = {}
    worst = 0.0
    leakgen = 0.0
    k = 2**n
    for szs, idxs in comp.items():
        sub = u[np.ix_(idxs, idxs)]
        if gate.sz_action == "swap" and n == 2:
            target_szs = szs[::-1]
            rows = comp[target_szs]
            sub = u[np.ix_(rows, idxs)]
        tr = np.trace(gate.logical.conj().T @ sub)
        fid = abs(tr) ** 2 / k**2
        fidelities[szs] = fid
        worst = max(worst, 1 - fid)
        other = [i for i in range(8**n) if i not in comp[szs if gate.sz_action != "swap" else szs[::-1]]
                 and i not in idxs]
        all_comp = set()
        for ix in comp.values():
            all_comp.update(ix)
        leak_rows = [i for i in range(8**n) if i not in all_comp]
        leakgen = max(leakgen, float(np.linalg.norm(u[np.ix_(leak_rows, idxs)])))
    report = VerificationReport(gate.name, fidelities, worst, leakgen)
    if n == 2:
        report.leak_transfer = _leak_transfer(gate, u)
    return report


def _leak_transfer(gate: GateDef, u: np.ndarray) -> dict:
    """Norm of leakage propagating from one leaked qubit to the other."""
    out = {}
    for leaked in (0, 1):
        src, moved = [], []
        for i in range(64):
            l1, s1 = spin.BASIS_ORDER[i // 8]
            l2, s2 = spin.BASIS_ORDER[i % 8]
            labs = (l1, l2)
            if labs[leaked] == "L" and labs[1 - leaked] in "01":
                src.append(i)
            if labs[1 - leaked] == "L":
                moved.append(i)
        out[f"from_q{leaked + 1}"] = float(np.linalg.norm(u[np.ix_(moved, src)]))
    return out


def pulse_count_audit() -> dict[str, int]:
    return {name: library_gate(name).pulse_count for name in ("swap", "fwcx", "lccx")}
