"""Three-spin encoded-qubit algebra.

An exchange-only (EO) qubit lives in three spin-1/2 particles.  The encoded
basis diagonalizes the commuting set (total S^2, pair S^2, total Sz); which
physical pair carries the pair quantum number is the qubit's *orientation*:

    "zn"  -- pair is the first two spins (z-rotation axis on pair (0,1))
    "nz"  -- pair is the last two spins  (z-rotation axis on pair (1,2))

Conventions (fixed throughout the package):
    * spin up = index 0, Sz|up> = +1/2|up>, hbar = 1
    * tensor factors ordered with spin 0 most significant
    * encoded basis order per qubit: BASIS_ORDER below
    * multi-qubit encoded bases are tensor products, qubit 0 most significant

The exact decomposition of the "zn" basis in the spin basis matches the
pair-singlet/triplet construction; "nz" uses pair-first angular-momentum
coupling with the spectator spin in front.  Mirror symmetry (reversing the
three spins) maps one orientation onto the other up to a sign on the encoded
|0> states; see `mirror_signs`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

SPIN_X = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SPIN_Y = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SPIN_Z = np.array([[1, 0], [0, -1]], dtype=complex) / 2
ID2 = np.eye(2, dtype=complex)

LABELS = ("0", "1", "L")
#: encoded single-qubit basis order: (label, sz)
BASIS_ORDER = (
    ("0", 0.5), ("0", -0.5),
    ("1", 0.5), ("1", -0.5),
    ("L", 1.5), ("L", 0.5), ("L", -0.5), ("L", -1.5),
)
BASIS_INDEX = {st: k for k, st in enumerate(BASIS_ORDER)}
ORIENTATIONS = ("zn", "nz")

#: named two-qubit orientation presets (z-axis pair assignment per qubit)
ORIENTATION_PRESETS = {
    "ZNNZ": ("zn", "nz"),
    "NZZN": ("nz", "zn"),
    "ZNZN": ("zn", "zn"),
}


class ConnectivityError(ValueError):
    """Raised when an exchange pulse references a non-adjacent spin pair."""


@dataclass(frozen=True)
class BasisState:
    """One |S, S_pair, Sz> basis element of a single EO qubit."""

    s: float
    s12: int
    sz: float

    def __post_init__(self):
        if self.s not in (0.5, 1.5):
            raise ValueError(f"total spin must be 1/2 or 3/2, got {self.s}")
        if self.s12 not in (0, 1):
            raise ValueError(f"pair quantum number must be 0 or 1, got {self.s12}")
        if self.s == 0.5 and self.sz not in (-0.5, 0.5):
            raise ValueError(f"S=1/2 requires sz=+-1/2, got {self.sz}")
        if self.s == 1.5:
            if self.s12 != 1:
                raise ValueError("S=3/2 requires pair quantum number 1")
            if self.sz not in (-1.5, -0.5, 0.5, 1.5):
                raise ValueError(f"invalid sz {self.sz} for S=3/2")

    @property
    def label(self) -> str:
        if self.s == 1.5:
            return "L"
        return "0" if self.s12 == 0 else "1"


def all_basis_states() -> list[BasisState]:
    """The eight valid single-qubit basis states, in BASIS_ORDER."""
    out = []
    for label, sz in BASIS_ORDER:
        if label == "L":
            out.append(BasisState(1.5, 1, sz))
        else:
            out.append(BasisState(0.5, 0 if label == "0" else 1, sz))
    return out


def valid_label_sz(label: str, sz: float) -> bool:
    return (label, sz) in BASIS_INDEX


def op_on_spins(n: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    """Tensor single-spin operators into the n-spin space (spin 0 most significant)."""
    out = np.array([[1.0 + 0j]])
    for k in range(n):
        out = np.kron(out, ops.get(k, ID2))
    return out


def exchange_op(n: int, i: int, j: int) -> np.ndarray:
    """S^(i) . S^(j) on n spins."""
    return sum(op_on_spins(n, {i: s, j: s}) for s in (SPIN_X, SPIN_Y, SPIN_Z))


def total_sz_op(n: int) -> np.ndarray:
    return sum(op_on_spins(n, {i: SPIN_Z}) for i in range(n))


def total_s2_op(n: int) -> np.ndarray:
    out = 0.75 * n * np.eye(2**n, dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            out = out + 2 * exchange_op(n, i, j)
    return out


def _spin_ket(*spins: int) -> np.ndarray:
    v = np.zeros(2 ** len(spins), dtype=complex)
    idx = 0
    for s in spins:
        idx = 2 * idx + s
    v[idx] = 1
    return v


@lru_cache(maxsize=None)
def build_three_spin_basis(orientation: str) -> np.ndarray:
    """8x8 unitary whose columns are the encoded basis states in the spin basis.

    Columns follow BASIS_ORDER.  For "zn" the pair quantum number is carried
    by spins (0,1); for "nz" by spins (1,2).
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"unknown orientation {orientation!r}")
    up, dn = 0, 1
    k = _spin_ket
    r2, r3, r6 = np.sqrt(2), np.sqrt(3), np.sqrt(6)
    if orientation == "zn":
        vecs = {
            ("0", 0.5): (k(up, dn, up) - k(dn, up, up)) / r2,
            ("0", -0.5): (k(up, dn, dn) - k(dn, up, dn)) / r2,
            ("1", 0.5): np.sqrt(2 / 3) * k(up, up, dn) - (k(up, dn, up) + k(dn, up, up)) / r6,
            ("1", -0.5): (k(up, dn, dn) + k(dn, up, dn)) / r6 - np.sqrt(2 / 3) * k(dn, dn, up),
            ("L", 1.5): k(up, up, up),
            ("L", 0.5): (k(up, up, dn) + k(up, dn, up) + k(dn, up, up)) / r3,
            ("L", -0.5): (k(up, dn, dn) + k(dn, up, dn) + k(dn, dn, up)) / r3,
            ("L", -1.5): k(dn, dn, dn),
        }
    else:
        s0 = lambda o: (k(o, up, dn) - k(o, dn, up)) / r2
        tp = lambda o: k(o, up, up)
        t0 = lambda o: (k(o, up, dn) + k(o, dn, up)) / r2
        tm = lambda o: k(o, dn, dn)
        vecs = {
            ("0", 0.5): s0(up),
            ("0", -0.5): s0(dn),
            # signs chosen so both orientations share the Eq.-5 logical axes
            ("1", 0.5): np.sqrt(1 / 3) * t0(up) - np.sqrt(2 / 3) * tp(dn),
            ("1", -0.5): np.sqrt(2 / 3) * tm(up) - np.sqrt(1 / 3) * t0(dn),
            ("L", 1.5): tp(up),
            ("L", 0.5): np.sqrt(1 / 3) * tp(dn) + np.sqrt(2 / 3) * t0(up),
            ("L", -0.5): np.sqrt(2 / 3) * t0(dn) + np.sqrt(1 / 3) * tm(up),
            ("L", -1.5): tm(dn),
        }
    return np.array([vecs[st] for st in BASIS_ORDER]).T


def orientation_pair(orientation: str) -> tuple[int, int]:
    """The local spin pair carrying the pair quantum number (the Z axis)."""
    return (0, 1) if orientation == "zn" else (1, 2)


def orientation_n_pair(orientation: str) -> tuple[int, int]:
    """The local spin pair of the N rotation axis."""
    return (1, 2) if orientation == "zn" else (0, 1)


@lru_cache(maxsize=None)
def encoded_product_basis(orientations: tuple[str, ...]) -> np.ndarray:
    """(8^n x 8^n) unitary: columns are the encoded product basis in the spin basis."""
    out = np.array([[1.0 + 0j]])
    for o in orientations:
        out = np.kron(out, build_three_spin_basis(o))
    return out


def encoded_exchange(orientations: tuple[str, ...], pair: tuple[int, int]) -> np.ndarray:
    """Exchange generator between global spin indices, in the encoded product basis."""
    n = 3 * len(orientations)
    i, j = pair
    if not (0 <= i < n and 0 <= j < n and i != j):
        raise ConnectivityError(f"invalid spin pair {pair} for {len(orientations)} qubits")
    B = encoded_product_basis(tuple(orientations))
    return B.conj().T @ exchange_op(n, i, j) @ B


def encoded_spin_z(orientations: tuple[str, ...], spin: int) -> np.ndarray:
    """Single-dot Sz operator in the encoded product basis."""
    n = 3 * len(orientations)
    B = encoded_product_basis(tuple(orientations))
    return B.conj().T @ op_on_spins(n, {spin: SPIN_Z}) @ B


# ---------------------------------------------------------------------------
# Sz block structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SzBlock:
    total_sz: float
    basis_indices: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.basis_indices)


def sz_blocks(n_spins: int) -> list[SzBlock]:
    """Partition of the n-spin product basis by total Sz, sorted by total_sz."""
    if n_spins < 1:
        raise ValueError("n_spins must be >= 1")
    groups: dict[float, list[int]] = {}
    for idx in range(2**n_spins):
        n_down = bin(idx).count("1")  # bit 1 encodes |dn>
        m = n_spins * 0.5 - n_down
        groups.setdefault(m, []).append(idx)
    return [SzBlock(m, tuple(v)) for m, v in sorted(groups.items())]


def encoded_sz_blocks(n_qubits: int) -> list[SzBlock]:
    """Partition of the encoded product basis (8^n) by total Sz label sum."""
    szs = [sz for _, sz in BASIS_ORDER]
    groups: dict[float, list[int]] = {}
    for idx in range(8**n_qubits):
        rem, total = idx, 0.0
        for _ in range(n_qubits):
            total += szs[rem % 8]
            rem //= 8
        groups.setdefault(round(total * 2) / 2, []).append(idx)
    return [SzBlock(m, tuple(v)) for m, v in sorted(groups.items())]


def encoded_index(labels: Sequence[str], szs: Sequence[float]) -> int:
    """Index of a compressed (labels, szs) state in the encoded product basis."""
    idx = 0
    for lab, sz in zip(labels, szs, strict=True):
        if not valid_label_sz(lab, sz):
            raise ValueError(f"invalid (label, sz) combination ({lab}, {sz})")
        idx = 8 * idx + BASIS_INDEX[(lab, sz)]
    return idx


def compressed_index(labels: Sequence[str], szs: Sequence[float]) -> list[int]:
    """Encoded-basis indices spanned by qutrit labels at fixed per-qubit sz.

    `labels` entries may be "*" to range over all labels valid at that sz.
    Returns indices ordered with the qutrit label of the last qubit fastest,
    label order ("0", "1", "L").
    """
    choices: list[list[str]] = []
    for lab, sz in zip(labels, szs, strict=True):
        if lab == "*":
            opts = [l for l in LABELS if valid_label_sz(l, sz)]
        else:
            if not valid_label_sz(lab, sz):
                raise ValueError(f"invalid (label, sz) combination ({lab}, {sz})")
            opts = [lab]
        choices.append(opts)
    out = []
    def rec(k: int, acc: list[str]):
        if k == len(choices):
            out.append(encoded_index(acc, szs))
            return
        for l in choices[k]:
            rec(k + 1, acc + [l])
    rec(0, [])
    return out


def mirror_signs() -> np.ndarray:
    """Diagonal of the spin-reversal map from the "zn" to the "nz" encoded basis.

    Reversing the three spins sends each "zn" basis state to the matching "nz"
    state times this sign (the encoded |0> and |1> states flip).
    """
    return np.array([-1, -1, -1, -1, 1, 1, 1, 1], dtype=float)


# ---------------------------------------------------------------------------
# Computational-subspace restrictions (Eq.-5-style rotations)
# ---------------------------------------------------------------------------

def computational_indices(sz: float) -> list[int]:
    """Encoded indices of (|0_sz>, |1_sz>)."""
    return [BASIS_INDEX[("0", sz)], BASIS_INDEX[("1", sz)]]


def logical_hamiltonian(j12: float, j23: float) -> np.ndarray:
    """Exchange Hamiltonian restricted to one computational subspace.

    H = -(j12+j23)/4 - (j12/2) sz + (j23/2)(sin(phi) sx - cos(phi) sz),
    phi = 2 pi / 3, in the (|0>, |1>) logical basis of the qubit's own axes.
    """
    phi = 2 * np.pi / 3
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz_ = np.array([[1, 0], [0, -1]], dtype=complex)
    return (-0.25 * (j12 + j23) * np.eye(2, dtype=complex)
            - 0.5 * j12 * sz_
            + 0.5 * j23 * (np.sin(phi) * sx - np.cos(phi) * sz_))
