"""Simulation backends and the Monte Carlo driver.

Subspace MC backend: each qubit is a qutrit (labels 0, 1, L) with a definite
spin projection label; after every 1- or 2-qubit operation the operand qubits
are projected onto definite projections again.  States are held as tensor
factors over disjoint qubit subsets so six-qubit circuits stay cheap: a
two-qubit gate merges factors, measurement collapses in place, and reset
splits a qubit back out.

Exact backend (one or two qubits): the full 8^n encoded density matrix with
total-Sz block structure; no projection.  Only the diagonal (population)
blocks can become nonzero for the circuits built here (states start with
definite projections and every operation conserves total Sz), which the
backend asserts, evolving coherence blocks with the noiseless unitaries.

The noise timeline covers the whole circuit: every process is sampled at the
boundaries of every timed operation, and spectator qubits receive idle
channels for each gate's duration.  All randomness derives from
numpy SeedSequence spawns keyed by (seed, realization, trial), so results are
bitwise reproducible for any worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import coarse, gates, noise as noise_mod, spin

LABELS = ("0", "1", "L")
_MEMORY_CAP_QUBITS = 8  # 3^(2n) complex; n=8 is ~0.7 GB


class ResourceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Compressed (Subspace MC) state
# ---------------------------------------------------------------------------

@dataclass
class Factor:
    qubits: tuple[int, ...]    # ascending
    rho: np.ndarray            # (3^k, 3^k), trace 1

    def axis(self, q: int) -> int:
        return self.qubits.index(q)


class McState:
    """Factored qutrit density matrix plus per-qubit spin-projection labels."""

    def __init__(self, n_qubits: int, szs: Sequence[float],
                 factors: list[Factor] | None = None):
        if 3 ** (2 * n_qubits) > 3 ** (2 * _MEMORY_CAP_QUBITS):
            raise ResourceError(f"{n_qubits} qubits exceeds the compressed-state cap")
        self.n = n_qubits
        self.szs = list(szs)
        if factors is None:
            v = np.zeros((3, 3), dtype=complex)
            v[0, 0] = 1.0
            factors = [Factor((q,), v.copy()) for q in range(n_qubits)]
        self.factors = factors

    # -- bookkeeping -------------------------------------------------------
    def factor_of(self, q: int) -> Factor:
        for f in self.factors:
            if q in f.qubits:
                return f
        raise KeyError(q)

    def merge(self, qubits: Sequence[int]) -> Factor:
        """Single factor containing all `qubits` (kron in ascending order)."""
        involved = []
        for f in self.factors:
            if any(q in f.qubits for q in qubits):
                involved.append(f)
        if len(involved) == 1:
            return involved[0]
        qs: list[int] = []
        for f in involved:
            qs.extend(f.qubits)
        order = tuple(sorted(qs))
        rho = np.array([[1.0 + 0j]])
        for f in sorted(involved, key=lambda f: f.qubits[0]):
            rho = np.kron(rho, f.rho)
        cur = tuple(q for f in sorted(involved, key=lambda f: f.qubits[0])
                    for q in f.qubits)
        if cur != order:
            k = len(cur)
            perm = [cur.index(q) for q in order]
            t = rho.reshape((3,) * (2 * k))
            t = t.transpose(perm + [k + p for p in perm])
            rho = t.reshape(3 ** k, 3 ** k)
        newf = Factor(order, rho)
        self.factors = [f for f in self.factors if f not in involved] + [newf]
        return newf

    def density_matrix(self) -> np.ndarray:
        """Materialized 3^n x 3^n density matrix (qubit 0 most significant)."""
        full = self.merge(tuple(range(self.n)))
        return full.rho

    def reduced(self, qubits: Sequence[int]) -> np.ndarray:
        """Reduced density matrix over `qubits` (ascending order)."""
        qubits = tuple(sorted(qubits))
        needed = []
        for f in self.factors:
            if any(q in f.qubits for q in qubits):
                needed.append(f)
        rho = np.array([[1.0 + 0j]])
        kept: list[int] = []
        for f in sorted(needed, key=lambda f: f.qubits[0]):
            keep_ax = [i for i, q in enumerate(f.qubits) if q in qubits]
            k = len(f.qubits)
            t = f.rho.reshape((3,) * (2 * k))
            tr_ax = [i for i in range(k) if i not in keep_ax]
            for ax in sorted(tr_ax, reverse=True):
                t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
            m = 3 ** len(keep_ax)
            rho = np.kron(rho, t.reshape(m, m))
            kept.extend(q for q in f.qubits if q in qubits)
        if tuple(kept) != qubits:
            k = len(kept)
            perm = [kept.index(q) for q in qubits]
            t = rho.reshape((3,) * (2 * k))
            t = t.transpose(perm + [k + p for p in perm])
            rho = t.reshape(3 ** k, 3 ** k)
        return rho

    def validate(self, atol: float = 1e-8):
        for f in self.factors:
            assert abs(np.trace(f.rho) - 1) < 1e-8
            assert np.linalg.norm(f.rho - f.rho.conj().T) < 1e-8
            assert np.linalg.eigvalsh(0.5 * (f.rho + f.rho.conj().T)).min() > -atol
        for q in range(self.n):
            f = self.factor_of(q)
            sz = self.szs[q]
            # diagonal support only on labels valid at the qubit's sz
            k = len(f.qubits)
            ax = f.axis(q)
            t = np.real(np.diagonal(f.rho)).reshape((3,) * k)
            for li, lab in enumerate(LABELS):
                if not spin.valid_label_sz(lab, sz):
                    sel = np.take(t, li, axis=ax)
                    assert np.all(np.abs(sel) < 1e-8)


def total_sz(state: McState) -> float:
    return float(sum(state.szs))


# ---------------------------------------------------------------------------
# Block embedding for gate application
# ---------------------------------------------------------------------------

def _block_positions(orients: tuple[str, ...], block_sz: float) -> list[tuple]:
    """(label, sz) tuples per block basis index, in block order."""
    idx = coarse.block_indices(orients, block_sz)
    out = []
    for i in idx:
        if len(orients) == 1:
            out.append((spin.BASIS_ORDER[i],))
        else:
            out.append((spin.BASIS_ORDER[i // 8], spin.BASIS_ORDER[i % 8]))
    return out


def _embed_map(orients: tuple[str, ...], block_sz: float,
               szs: tuple[float, ...]) -> tuple[list[int], list[int]]:
    """Map qutrit-label combos at fixed per-qubit szs onto block positions.

    Returns (qutrit_indices, block_positions) of equal length.
    """
    positions = _block_positions(orients, block_sz)
    qutrit_idx, block_pos = [], []
    for p, st in enumerate(positions):
        if tuple(s for (_, s) in st) != szs:
            continue
        qi = 0
        for (lab, _s) in st:
            qi = 3 * qi + LABELS.index(lab)
        qutrit_idx.append(qi)
        block_pos.append(p)
    return qutrit_idx, block_pos


@dataclass
class PendingBlockState:
    """Post-gate operand state in block space, awaiting projection."""

    qubits: tuple[int, ...]
    orients: tuple[str, ...]
    block_sz: float
    tensor: np.ndarray          # (d, rest, d, rest)
    rest_qubits: tuple[int, ...]


def apply_logical_op(state: McState, qubits: Sequence[int],
                     orients: tuple[str, ...], channel: coarse.GateChannel
                     ) -> PendingBlockState:
    """Apply a 1- or 2-qubit channel; returns the unprojected block state."""
    qubits = tuple(qubits)
    szs = tuple(state.szs[q] for q in qubits)
    block_sz = channel.block_sz
    assert abs(sum(szs) - block_sz) < 1e-12, "operand szs do not match the block"
    f = state.merge(qubits)
    k = len(f.qubits)
    ops_ax = [f.axis(q) for q in qubits]
    rest_ax = [i for i in range(k) if i not in ops_ax]
    rest_qubits = tuple(f.qubits[i] for i in rest_ax)
    t = f.rho.reshape((3,) * (2 * k))
    t = t.transpose(ops_ax + rest_ax + [k + a for a in ops_ax] +
                    [k + a for a in rest_ax])
    m = 3 ** len(qubits)
    r = 3 ** len(rest_ax)
    t = t.reshape(m, r, m, r)
    qi, bp = _embed_map(orients, block_sz, szs)
    d = channel.dim
    lift = np.zeros((d, r, d, r), dtype=complex)
    lift[np.ix_(bp, range(r), bp, range(r))] = t[np.ix_(qi, range(r), qi, range(r))]
    sup = channel.superop.reshape(d, d, d, d)  # [(a,b),(c,d)] -> a,b,c,d
    out = np.einsum("abcd,crds->arbs", sup, lift)
    return PendingBlockState(qubits, tuple(orients), block_sz, out, rest_qubits)


def subspace_projection(state: McState, pending: PendingBlockState,
                        rng: np.random.Generator) -> tuple[float, ...]:
    """Sample per-qubit spin projections, collapse, and restore compressed form."""
    positions = _block_positions(pending.orients, pending.block_sz)
    d = len(positions)
    r = pending.tensor.shape[1]
    # group block positions by the joint sz assignment
    groups: dict[tuple, list[int]] = {}
    for p, st in enumerate(positions):
        groups.setdefault(tuple(s for (_, s) in st), []).append(p)
    keys = sorted(groups)
    probs = []
    diag = np.einsum("arar->ar", pending.tensor.reshape(d, r, d, r)).real
    for key in keys:
        probs.append(max(float(diag[groups[key]].sum()), 0.0))
    probs = np.array(probs)
    tot = probs.sum()
    if tot < 1e-14:
        raise RuntimeError("subspace projection degenerate: all outcomes "
                           f"have probability < 1e-14 (block {pending.block_sz})")
    probs = probs / tot
    choice = rng.choice(len(keys), p=probs)
    szs_new = keys[choice]
    sel = groups[szs_new]
    sub = pending.tensor[np.ix_(sel, range(r), sel, range(r))]
    sub = sub / np.einsum("arar->", sub).real
    # map block positions back to qutrit labels
    qi, bp = _embed_map(pending.orients, pending.block_sz, szs_new)
    m = 3 ** len(pending.qubits)
    out = np.zeros((m, r, m, r), dtype=complex)
    lut = {p: q for q, p in zip(qi, bp)}
    rows = [lut[p] for p in sel]
    out[np.ix_(rows, range(r), rows, range(r))] = sub
    # rebuild the merged factor in ascending qubit order
    all_qs = pending.qubits + pending.rest_qubits
    order = tuple(sorted(all_qs))
    k = len(all_qs)
    t = out.reshape((3,) * (2 * k))
    perm = [all_qs.index(q) for q in order]
    t = t.transpose(perm + [k + p for p in perm])
    f = state.factor_of(pending.qubits[0])
    f.qubits = order
    f.rho = t.reshape(3 ** k, 3 ** k)
    for q, s in zip(pending.qubits, szs_new):
        state.szs[q] = s
    return szs_new


# ---------------------------------------------------------------------------
# Measurements and reset
# ---------------------------------------------------------------------------

def _label_project(state: McState, q: int, labels0: Sequence[str],
                   rng: np.random.Generator) -> int:
    """Project qubit q onto label set labels0 (outcome 0) vs the rest."""
    f = state.factor_of(q)
    k = len(f.qubits)
    ax = f.axis(q)
    t = f.rho.reshape((3,) * (2 * k))
    idx0 = [LABELS.index(l) for l in labels0]
    diag = np.einsum(t, list(range(k)) + list(range(k)))  # diagonal over all axes
    # probability of outcome 0
    sel = np.take(np.real(diag), idx0, axis=ax)
    p0 = float(np.clip(sel.sum(), 0.0, 1.0))
    outcome = 0 if rng.random() < p0 else 1
    keep = idx0 if outcome == 0 else [i for i in range(3) if i not in idx0]
    mask = np.zeros(3)
    mask[keep] = 1.0
    shape = [1] * (2 * k)
    shape[ax] = 3
    m1 = mask.reshape(shape)
    shape = [1] * (2 * k)
    shape[k + ax] = 3
    m2 = mask.reshape(shape)
    t = t * m1 * m2
    rho = t.reshape(3 ** k, 3 ** k)
    tr = float(np.real(np.trace(rho)))
    if tr < 1e-14:
        raise RuntimeError("measurement collapse onto zero-probability branch")
    f.rho = rho / tr
    return outcome


def measure_computational(state: McState, q: int, rng: np.random.Generator) -> int:
    """POVM E0 = |0><0| (any sz); E1 = |1><1| + leakage."""
    return _label_project(state, q, ["0"], rng)


def measure_ancilla_flag(state: McState, q: int, rng: np.random.Generator) -> int:
    """Singlet (label 0 -> outcome 0) vs triplet (labels 1, L -> outcome 1)."""
    return _label_project(state, q, ["0"], rng)


def reset_qubit(state: McState, q: int, rng: np.random.Generator,
                p_up: float = 0.5, label_state: np.ndarray | None = None):
    """Replace qubit q with a fresh pure state (default |0>), new random sz."""
    f = state.factor_of(q)
    k = len(f.qubits)
    if k > 1:
        ax = f.axis(q)
        t = f.rho.reshape((3,) * (2 * k))
        t = np.trace(t, axis1=ax, axis2=k + ax)
        rest = tuple(qq for qq in f.qubits if qq != q)
        f.qubits = rest
        f.rho = t.reshape(3 ** (k - 1), 3 ** (k - 1))
    else:
        self_idx = state.factors.index(f)
        state.factors.pop(self_idx)
    if label_state is None:
        rho = np.zeros((3, 3), dtype=complex)
        rho[0, 0] = 1.0
    else:
        v = np.zeros(3, dtype=complex)
        v[:len(label_state)] = label_state
        rho = np.outer(v, v.conj())
    state.factors.append(Factor((q,), rho))
    state.szs[q] = 0.5 if rng.random() < p_up else -0.5


def init_bell_pair(state: McState, qa: int, qb: int, which: int = 0):
    """Overwrite qubits (qa, qb) with the Bell state Phi_which (labels only)."""
    state.merge((qa, qb))
    f = state.factor_of(qa)
    assert f.qubits == tuple(sorted((qa, qb))) and len(f.qubits) == 2
    v = np.zeros(9, dtype=complex)
    amp = 1 / np.sqrt(2)
    if which == 0:
        v[0 * 3 + 0], v[1 * 3 + 1] = amp, amp
    elif which == 1:
        v[0 * 3 + 0], v[1 * 3 + 1] = amp, -amp
    elif which == 2:
        v[0 * 3 + 1], v[1 * 3 + 0] = amp, amp
    else:
        v[0 * 3 + 1], v[1 * 3 + 0] = amp, -amp
    f.rho = np.outer(v, v.conj())


# ---------------------------------------------------------------------------
# Exact backend (no projection; one or two qubits)
# ---------------------------------------------------------------------------

class ExactState:
    """Full 8^n encoded density matrix, organized over total-Sz blocks.

    Circuits built here never populate coherences between different total-Sz
    blocks (initial states have definite projections and every operation
    conserves total Sz); the class tracks the one occupied block and asserts
    that structure, holding the full matrix so inter-block coherences are
    representable.
    """

    def __init__(self, n_qubits: int, szs: Sequence[float]):
        if n_qubits > 2:
            raise ResourceError(
                f"exact backend: 8^(2*{n_qubits}) = {8**(2*n_qubits):.2e} matrix "
                "entries exceed the configured cap")
        self.n = n_qubits
        self.rho = np.zeros((8**n_qubits, 8**n_qubits), dtype=complex)
        idx = spin.encoded_index(["0"] * n_qubits, list(szs))
        self.rho[idx, idx] = 1.0
        self.block_sz = float(sum(szs))

    def block(self) -> np.ndarray:
        idx = self._block_indices()
        return self.rho[np.ix_(idx, idx)]

    def _block_indices(self):
        for b in spin.encoded_sz_blocks(self.n):
            if b.total_sz == self.block_sz:
                return list(b.basis_indices)
        raise KeyError(self.block_sz)

    def set_block(self, m: np.ndarray):
        idx = self._block_indices()
        self.rho[...] = 0.0
        self.rho[np.ix_(idx, idx)] = m

    def set_bell(self, szs: tuple[float, float], which: int = 0):
        assert self.n == 2
        amp = 1 / np.sqrt(2)
        coefs = {0: [("0", "0", amp), ("1", "1", amp)],
                 1: [("0", "0", amp), ("1", "1", -amp)],
                 2: [("0", "1", amp), ("1", "0", amp)],
                 3: [("0", "1", amp), ("1", "0", -amp)]}[which]
        v = np.zeros(64, dtype=complex)
        for l1, l2, a in coefs:
            v[spin.encoded_index([l1, l2], list(szs))] = a
        self.rho = np.outer(v, v.conj())
        self.block_sz = float(sum(szs))

    def apply_channel(self, channel: coarse.GateChannel):
        assert abs(channel.block_sz - self.block_sz) < 1e-12
        self.set_block(channel.apply(self.block()))

    def measure_label(self, q: int, labels0: Sequence[str],
                      rng: np.random.Generator) -> int:
        mask0 = np.zeros(8**self.n)
        for i in range(8**self.n):
            digits = []
            rem = i
            for _ in range(self.n):
                digits.append(rem % 8)
                rem //= 8
            lab = spin.BASIS_ORDER[digits[::-1][q]][0]
            if lab in labels0:
                mask0[i] = 1.0
        p0 = float(np.real(np.sum(np.diag(self.rho) * mask0)))
        outcome = 0 if rng.random() < np.clip(p0, 0, 1) else 1
        mask = mask0 if outcome == 0 else 1.0 - mask0
        self.rho = self.rho * np.outer(mask, mask)
        tr = float(np.real(np.trace(self.rho)))
        if tr < 1e-14:
            raise RuntimeError("exact measurement collapsed to zero branch")
        self.rho /= tr
        return outcome


# ---------------------------------------------------------------------------
# Circuits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircuitOp:
    """One sequential operation.

    kinds: "gate" (1- or 2-qubit GateDef), "idle", "measure" (computational
    POVM), "flag" (singlet/triplet ancilla readout), "reset", "bellprep",
    "snapshot" (record the reduced state of `operands`).
    """

    kind: str
    operands: tuple[int, ...]
    gate: gates.GateDef | None = None
    duration: float = 0.0
    ablate: bool = False
    record: str | None = None
    param: int = 0

    def timed(self) -> bool:
        return self.kind in ("gate", "idle") and self.duration > 0


@dataclass
class CircuitSpec:
    n_qubits: int
    orientations: tuple[str, ...]
    ops: tuple[CircuitOp, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for op in self.ops:
            for q in op.operands:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"operand {q} outside circuit")
            if op.kind == "gate":
                want = tuple(self.orientations[q] for q in op.operands)
                if want != op.gate.orientations:
                    raise ValueError(
                        f"gate {op.gate.name} orientations {op.gate.orientations} "
                        f"do not match layout {want} on {op.operands}")


def gate_op(gate: gates.GateDef, operands: Sequence[int], ablate: bool = False) -> CircuitOp:
    return CircuitOp("gate", tuple(operands), gate, gate.duration, ablate)


@dataclass
class RunConfig:
    backend: str = "subspace_mc"          # or "exact"
    noise: str | noise_mod.NoiseModel = "NM1"
    n_realizations: int = 10
    n_trials: int = 5
    seed: int = 0
    p_up: float = 0.5
    ablate_idle_noise: bool = False
    zeeman: float = 0.0
    workers: int = 1
    keep_snapshots: bool = True

    def noise_model(self) -> noise_mod.NoiseModel:
        if isinstance(self.noise, noise_mod.NoiseModel):
            return self.noise
        return noise_mod.make_noise_model(self.noise)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if isinstance(self.noise, noise_mod.NoiseModel):
            d["noise"] = self.noise.name
        return d


@dataclass
class RunResult:
    config: dict
    records: list          # [realization][trial] -> {key: [outcomes]}
    snapshots: list        # [realization][trial] -> {key: [matrix, ...]}
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def enc_snap(s):
            return {k: [[np.real(m).tolist(), np.imag(m).tolist()] for m in v]
                    for k, v in s.items()}
        payload = {
            "schema": "eoqsim-run-v1",
            "config": self.config,
            "meta": self.meta,
            "records": self.records,
            "snapshots": [[enc_snap(t) for t in r] for r in self.snapshots],
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunResult":
        payload = json.loads(text)
        if payload.get("schema") != "eoqsim-run-v1":
            raise ValueError(f"unsupported result schema {payload.get('schema')!r}")
        snaps = [[{k: [np.array(re) + 1j * np.array(im) for re, im in v]
                   for k, v in t.items()} for t in r]
                 for r in payload["snapshots"]]
        return RunResult(payload["config"], payload["records"], snaps,
                         payload["meta"])


# ---------------------------------------------------------------------------
# Channel provisioning per realization
# ---------------------------------------------------------------------------

def _chain_schedule_for_backend(op: CircuitOp, circuit: CircuitSpec,
                                backend: str):
    """(orients, schedule, operand qubits) for channel construction.

    The exact backend embeds 1-qubit gates into the full chain so projections
    are never needed; the MC backend uses per-operand chains.
    """
    if op.kind == "idle":
        if backend == "exact":
            qs = tuple(range(circuit.n_qubits))
            return (tuple(circuit.orientations), coarse.PulseSchedule(
                (coarse.Idle(op.duration),)), qs)
        return None
    gate = op.gate
    if backend == "exact" and circuit.n_qubits == 2 and gate.n_qubits == 1:
        q = op.operands[0]
        shift = 3 * q
        segs = []
        for s in gate.schedule.segments:
            if isinstance(s, coarse.Pulse):
                segs.append(coarse.Pulse((s.pair[0] + shift, s.pair[1] + shift),
                                         s.theta, s.j))
            else:
                segs.append(s)
        return (tuple(circuit.orientations), coarse.PulseSchedule(tuple(segs)),
                (0, 1))
    return (gate.orientations, gate.schedule, op.operands)


class RealizationContext:
    """Boundary samples plus channel caching for one noise realization."""

    def __init__(self, circuit: CircuitSpec, config: RunConfig,
                 rng_noise: np.random.Generator):
        self.circuit = circuit
        self.config = config
        self.model = config.noise_model()
        self.backend = config.backend
        timed = [op for op in circuit.ops if op.timed()]
        times = np.concatenate([[0.0], np.cumsum([op.duration for op in timed])])
        self.op_time_index = {}
        ti = 0
        for op in circuit.ops:
            if op.timed():
                self.op_time_index[id(op)] = ti
                ti += 1
        n_dots = 3 * circuit.n_qubits
        axes = set()
        for op in circuit.ops:
            if op.kind != "gate":
                continue
            for pair in op.gate.schedule.pairs():
                axes.add(self._global_axis(op, pair))
        self.sample = noise_mod.sample_boundaries(
            self.model, times, n_dots, sorted(axes), rng_noise) \
            if len(times) > 1 else None
        self._channels: dict = {}

    def _global_axis(self, op: CircuitOp, chain_pair: tuple[int, int]) -> tuple[int, int]:
        qs = op.operands
        def glob(p):
            return qs[p // 3] * 3 + (p % 3)
        a, b = glob(chain_pair[0]), glob(chain_pair[1])
        return (min(a, b), max(a, b))

    def gate_channel(self, op_idx: int, op: CircuitOp, block_sz: float
                     ) -> coarse.GateChannel:
        key = (op_idx, block_sz)
        ch = self._channels.get(key)
        if ch is not None:
            return ch
        orients, schedule, qs = _chain_schedule_for_backend(
            op, self.circuit, self.backend)
        noiseless = op.ablate
        pc = coarse.get_precomp(orients, schedule, block_sz, self.model,
                                include_magnetic=not noiseless,
                                include_voltage=not noiseless)
        if noiseless or self.sample is None:
            ch = coarse.build_channel(pc, None, None, schedule_id=f"op{op_idx}")
        else:
            ti = self.op_time_index[id(op)]
            mag = np.empty((3 * len(qs), len(self.model.magnetic), 2))
            for p in range(3 * len(qs)):
                gd = qs[p // 3] * 3 + p % 3
                mag[p] = self.sample.magnetic[gd, :, ti:ti + 2]
            volt = {}
            if op.kind == "gate":
                for pair in schedule.pairs():
                    ax = self._global_axis_for(qs, pair)
                    volt[pair] = self.sample.voltage[ax][:, ti:ti + 2]
            ch = coarse.build_channel(pc, mag, volt, schedule_id=f"op{op_idx}")
        self._channels[key] = ch
        return ch

    def _global_axis_for(self, qs: tuple[int, ...], chain_pair) -> tuple[int, int]:
        def glob(p):
            return qs[p // 3] * 3 + (p % 3)
        a, b = glob(chain_pair[0]), glob(chain_pair[1])
        return (min(a, b), max(a, b))

    def idle_channel(self, op_idx: int, op: CircuitOp, q: int, sz: float
                     ) -> coarse.GateChannel | None:
        if self.config.ablate_idle_noise or self.sample is None:
            return None
        key = (op_idx, "idle", q, sz)
        ch = self._channels.get(key)
        if ch is not None:
            return ch
        ti = self.op_time_index[id(op)]
        orient = self.circuit.orientations[q]
        mag = self.sample.magnetic[3 * q:3 * q + 3, :, ti:ti + 2]
        ch = coarse.idle_channel((orient,), op.duration, sz, self.model, mag)
        self._channels[key] = ch
        return ch


# ---------------------------------------------------------------------------
# Trial execution
# ---------------------------------------------------------------------------

def _run_trial_mc(circuit: CircuitSpec, ctx: RealizationContext,
                  config: RunConfig, rng: np.random.Generator):
    n = circuit.n_qubits
    szs = [0.5 if rng.random() < config.p_up else -0.5 for _ in range(n)]
    state = McState(n, szs)
    records: dict[str, list] = {}
    snaps: dict[str, list] = {}
    for op_idx, op in enumerate(circuit.ops):
        if op.kind == "bellprep":
            qa, qb = op.operands
            init_bell_pair(state, qa, qb, op.param)
        elif op.kind == "gate":
            group = set(op.operands)
            block = float(sum(state.szs[q] for q in op.operands))
            ch = ctx.gate_channel(op_idx, op, block)
            orients = op.gate.orientations
            pending = apply_logical_op(state, op.operands, orients, ch)
            subspace_projection(state, pending, rng)
            for q in range(n):
                if q not in group:
                    ich = ctx.idle_channel(op_idx, op, q, state.szs[q])
                    if ich is not None:
                        p = apply_logical_op(state, (q,),
                                             (circuit.orientations[q],), ich)
                        subspace_projection(state, p, rng)
        elif op.kind == "idle":
            for q in range(n):
                ich = ctx.idle_channel(op_idx, op, q, state.szs[q])
                if ich is not None:
                    p = apply_logical_op(state, (q,),
                                         (circuit.orientations[q],), ich)
                    subspace_projection(state, p, rng)
        elif op.kind == "measure":
            out = measure_computational(state, op.operands[0], rng)
            records.setdefault(op.record, []).append(out)
        elif op.kind == "flag":
            out = measure_ancilla_flag(state, op.operands[0], rng)
            records.setdefault(op.record, []).append(out)
        elif op.kind == "reset":
            reset_qubit(state, op.operands[0], rng, config.p_up)
        elif op.kind == "snapshot":
            if config.keep_snapshots:
                snaps.setdefault(op.record, []).append(state.reduced(op.operands))
        else:
            raise ValueError(op.kind)
    return records, snaps


def _run_trial_exact(circuit: CircuitSpec, ctx: RealizationContext,
                     config: RunConfig, rng: np.random.Generator):
    n = circuit.n_qubits
    szs = [0.5 if rng.random() < config.p_up else -0.5 for _ in range(n)]
    state = ExactState(n, szs)
    records: dict[str, list] = {}
    snaps: dict[str, list] = {}
    for op_idx, op in enumerate(circuit.ops):
        if op.kind == "bellprep":
            assert n == 2
            state.set_bell((szs[0], szs[1]), op.param)
        elif op.kind in ("gate", "idle"):
            if not op.timed():
                continue
            ch = ctx.gate_channel(op_idx, op, state.block_sz)
            state.apply_channel(ch)
        elif op.kind == "measure":
            out = state.measure_label(op.operands[0], ["0"], rng)
            records.setdefault(op.record, []).append(out)
        elif op.kind == "flag":
            out = state.measure_label(op.operands[0], ["0"], rng)
            records.setdefault(op.record, []).append(out)
        elif op.kind == "reset":
            raise NotImplementedError("exact backend does not support reset")
        elif op.kind == "snapshot":
            pass
        else:
            raise ValueError(op.kind)
    return records, snaps


def _run_realization(args):
    (factory, config, r) = args
    rng_circ = np.random.default_rng(np.random.SeedSequence((config.seed, 13, r)))
    circuit = factory(rng_circ)
    rng_noise = np.random.default_rng(np.random.SeedSequence((config.seed, 71, r)))
    ctx = RealizationContext(circuit, config, rng_noise)
    rec_out, snap_out = [], []
    for t in range(config.n_trials):
        rng_mc = np.random.default_rng(np.random.SeedSequence((config.seed, 29, r, t)))
        if config.backend == "exact":
            rec, snaps = _run_trial_exact(circuit, ctx, config, rng_mc)
        else:
            rec, snaps = _run_trial_mc(circuit, ctx, config, rng_mc)
        rec_out.append(rec)
        snap_out.append(snaps)
    return r, rec_out, snap_out


def run_circuit(factory: Callable, config: RunConfig) -> RunResult:
    """Outer loop over noise realizations, inner loop over MC trials.

    `factory(rng) -> CircuitSpec` draws the per-realization circuit
    randomization (twirling gates, Clifford draws) from its rng.
    """
    jobs = [(factory, config, r) for r in range(config.n_realizations)]
    results = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for out in pool.map(_run_realization_star, jobs):
                results.append(out)
    else:
        for job in jobs:
            results.append(_run_realization(job))
    results.sort(key=lambda x: x[0])
    records = [rec for _, rec, _ in results]
    snapshots = [snap for _, _, snap in results]
    return RunResult(config.to_dict(), records, snapshots,
                     meta={"n_qubits": None})


def _run_realization_star(args):
    return _run_realization(args)
