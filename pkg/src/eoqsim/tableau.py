"""Clifford tableau algebra for one and two qubits.

A Clifford is stored by the images of the generators X_i, Z_i under
conjugation, each a signed Pauli string.  Pauli strings are (x, z) bit
vectors plus a sign bit; composition, inversion, canonical keys, and
extraction from explicit unitaries are provided.  Used as the independent
oracle for gate compositions, randomized-benchmarking inverses, and the
canonical enumeration of the 11520 two-qubit Cliffords.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(x: tuple[int, ...], z: tuple[int, ...], ph: int) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for xi, zi in zip(x, z):
        name = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}[(xi, zi)]
        out = np.kron(out, _PAULI[name])
    return (1j) ** (ph % 4) * out


@dataclass(frozen=True)
class Pauli:
    """Pauli string i^ph * tensor of Hermitian site Paulis (ph mod 4)."""

    x: tuple[int, ...]
    z: tuple[int, ...]
    ph: int = 0

    @property
    def sign(self) -> int:
        """0 for +, 1 for -; requires a Hermitian (+-1 phase) string."""
        assert self.ph % 2 == 0, "Pauli carries an i phase"
        return (self.ph % 4) // 2

    def __mul__(self, other: "Pauli") -> "Pauli":
        phase = self.ph + other.ph
        xs, zs = [], []
        for x1, z1, x2, z2 in zip(self.x, self.z, other.x, other.z):
            # site product: Pherm(a) Pherm(b) = i^(y1+y2-y12+2 z1 x2) Pherm(a+b)
            phase += 2 * (z1 & x2)
            phase += (x1 & z1) + (x2 & z2) - ((x1 ^ x2) & (z1 ^ z2))
            xs.append(x1 ^ x2)
            zs.append(z1 ^ z2)
        return Pauli(tuple(xs), tuple(zs), phase % 4)

    def commutes(self, other: "Pauli") -> bool:
        acc = 0
        for x1, z1, x2, z2 in zip(self.x, self.z, other.x, other.z):
            acc ^= (x1 & z2) ^ (z1 & x2)
        return acc == 0

    def negated(self) -> "Pauli":
        return Pauli(self.x, self.z, (self.ph + 2) % 4)

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self.x, self.z, self.ph)


@dataclass(frozen=True)
class Tableau:
    """Images of X_0..X_{n-1}, Z_0..Z_{n-1} under conjugation."""

    images: tuple[Pauli, ...]

    @property
    def n(self) -> int:
        return len(self.images) // 2

    @staticmethod
    def identity(n: int) -> "Tableau":
        ims = []
        for k in range(n):
            x = tuple(1 if i == k else 0 for i in range(n))
            ims.append(Pauli(x, (0,) * n, 0))
        for k in range(n):
            z = tuple(1 if i == k else 0 for i in range(n))
            ims.append(Pauli((0,) * n, z, 0))
        return Tableau(tuple(ims))

    def apply(self, p: Pauli) -> Pauli:
        """Image of an arbitrary Pauli under this Clifford.

        p = i^(ph + sum_k x_k z_k) * prod_k X_k^{x_k} Z_k^{z_k}; conjugating
        each generator factor and multiplying reproduces the image.
        """
        n = self.n
        extra = p.ph + sum(p.x[k] & p.z[k] for k in range(n))
        out = Pauli((0,) * n, (0,) * n, 0)
        for k in range(n):
            if p.x[k]:
                out = out * self.images[k]
            if p.z[k]:
                out = out * self.images[n + k]
        return Pauli(out.x, out.z, (out.ph + extra) % 4)

    def then(self, second: "Tableau") -> "Tableau":
        """Composite: first self, then second (second . self as operators)."""
        return Tableau(tuple(second.apply(p) for p in self.images))

    def inverse(self) -> "Tableau":
        n = self.n
        ident = Tableau.identity(n)
        # invert the symplectic part by brute linear algebra over F2
        m = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        for c, im in enumerate(self.images):
            m[: n, c] = im.x
            m[n:, c] = im.z
        minv = _gf2_inv(m)
        ims = []
        for c in range(2 * n):
            p = Pauli((0,) * n, (0,) * n, 0)
            first = True
            for r in range(2 * n):
                if minv[r, c]:
                    gen = ident.images[r]
                    p = gen if first else p * gen
                    first = False
            p = Pauli(p.x, p.z, 0)  # drop i phases from the raw generator product
            # fix the sign so that self.apply(p) == generator c
            img = self.apply(p)
            want = ident.images[c]
            assert img.x == want.x and img.z == want.z
            if img.ph != want.ph:
                p = p.negated()
            ims.append(p)
        return Tableau(tuple(ims))

    def key(self) -> tuple:
        return tuple((p.x, p.z, p.ph) for p in self.images)

    def is_identity(self) -> bool:
        return self.key() == Tableau.identity(self.n).key()

    @staticmethod
    def from_unitary(u: np.ndarray) -> "Tableau":
        """Extract the tableau of an explicit Clifford unitary (up to phase)."""
        n = int(round(np.log2(u.shape[0])))
        ident = Tableau.identity(n)
        ims = []
        for gen in ident.images:
            conj = u @ gen.matrix() @ u.conj().T
            found = None
            for x in product((0, 1), repeat=n):
                for z in product((0, 1), repeat=n):
                    cand = Pauli(x, z, 0)
                    m = cand.matrix()
                    tr = np.trace(m.conj().T @ conj) / u.shape[0]
                    if abs(abs(tr) - 1) < 1e-8:
                        if abs(tr - 1) < 1e-8:
                            found = cand
                        elif abs(tr + 1) < 1e-8:
                            found = Pauli(x, z, 2)
                        break
                if found:
                    break
            if found is None:
                raise ValueError("matrix is not Clifford")
            ims.append(found)
        return Tableau(tuple(ims))


def _gf2_inv(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    a = m.astype(np.uint8).copy()
    inv = np.eye(n, dtype=np.uint8)
    for col in range(n):
        piv = None
        for r in range(col, n):
            if a[r, col]:
                piv = r
                break
        assert piv is not None, "singular symplectic matrix"
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            inv[[col, piv]] = inv[[piv, col]]
        for r in range(n):
            if r != col and a[r, col]:
                a[r] ^= a[col]
                inv[r] ^= inv[col]
    return inv


# ---------------------------------------------------------------------------
# Single-qubit Clifford group (24 elements, canonical order)
# ---------------------------------------------------------------------------

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> tuple[tuple[np.ndarray, ...], dict]:
    """24 canonical 1q Clifford unitaries and a key->index lookup."""
    mats: list[np.ndarray] = [np.eye(2, dtype=complex)]
    keys = {Tableau.from_unitary(mats[0]).key(): 0}
    frontier = [mats[0]]
    while frontier:
        nxt = []
        for m in frontier:
            for g in (_H, _S):
                cand = g @ m
                k = Tableau.from_unitary(cand).key()
                if k not in keys:
                    keys[k] = len(mats)
                    mats.append(cand)
                    nxt.append(cand)
        frontier = nxt
    assert len(mats) == 24
    return tuple(mats), keys


def clifford1_unitary(index: int) -> np.ndarray:
    mats, _ = single_qubit_cliffords()
    return mats[index]


def clifford1_tableau(index: int) -> Tableau:
    return Tableau.from_unitary(clifford1_unitary(index))


def clifford1_index(u: np.ndarray) -> int:
    _, keys = single_qubit_cliffords()
    return keys[Tableau.from_unitary(u).key()]


PAULI_INDICES: tuple[int, ...] = ()


def pauli1_indices() -> tuple[int, ...]:
    """Indices of I, X, Y, Z within the canonical 24."""
    out = []
    for name in "IXYZ":
        out.append(clifford1_index(_PAULI[name]))
    return tuple(out)


# ---------------------------------------------------------------------------
# Two-qubit Clifford group (11520 elements, canonical enumeration)
# ---------------------------------------------------------------------------

#: axis gates appended after the entangling core: I and the order-3 rotations
#: cycling X -> Y -> Z -> X about the (1,1,1) axis
_V_CYCLE = 0.5 * (np.eye(2) - 1j * (_PAULI["X"] + _PAULI["Y"] + _PAULI["Z"]))
_S_GATES = [np.eye(2, dtype=complex), _V_CYCLE, _V_CYCLE @ _V_CYCLE]

_CNOT_21 = np.array([[1, 0, 0, 0],
                     [0, 0, 0, 1],
                     [0, 0, 1, 0],
                     [0, 1, 0, 0]], dtype=complex)  # control = qubit 2 (LSB)
_CNOT_12 = np.array([[1, 0, 0, 0],
                     [0, 1, 0, 0],
                     [0, 0, 0, 1],
                     [0, 0, 1, 0]], dtype=complex)  # control = qubit 1 (MSB)
_SWAP = np.array([[1, 0, 0, 0],
                  [0, 0, 1, 0],
                  [0, 1, 0, 0],
                  [0, 0, 0, 1]], dtype=complex)
_ISWAP = np.array([[1, 0, 0, 0],
                   [0, 0, 1j, 0],
                   [0, 1j, 0, 0],
                   [0, 0, 0, 1]], dtype=complex)


def _kron2(a, b):
    return np.kron(a, b)


@dataclass(frozen=True)
class Clifford2Element:
    """Canonical decomposition of one 2-qubit Clifford."""

    index: int
    pre: tuple[int, int]          # 1q Clifford indices applied first
    cls: int                      # 0 identity, 1 CNOT, 2 double CNOT, 3 SWAP
    post_axis: tuple[int, int]    # axis-gate indices for classes 1 and 2

    def unitary(self) -> np.ndarray:
        u = _kron2(clifford1_unitary(self.pre[0]), clifford1_unitary(self.pre[1]))
        if self.cls == 1:
            u = _CNOT_21 @ u
            u = _kron2(_S_GATES[self.post_axis[0]], _S_GATES[self.post_axis[1]]) @ u
        elif self.cls == 2:
            u = _ISWAP @ u
            u = _kron2(_S_GATES[self.post_axis[0]], _S_GATES[self.post_axis[1]]) @ u
        elif self.cls == 3:
            u = _SWAP @ u
        return u


def clifford2_element(index: int) -> Clifford2Element:
    if not 0 <= index < 11520:
        raise IndexError("two-qubit Clifford index out of range")
    pre, rest = divmod(index, 20)
    c1, c2 = divmod(pre, 24)
    if rest == 0:
        return Clifford2Element(index, (c1, c2), 0, (0, 0))
    if rest < 10:
        a, b = divmod(rest - 1, 3)
        return Clifford2Element(index, (c1, c2), 1, (a, b))
    if rest < 19:
        a, b = divmod(rest - 10, 3)
        return Clifford2Element(index, (c1, c2), 2, (a, b))
    return Clifford2Element(index, (c1, c2), 3, (0, 0))


@lru_cache(maxsize=1)
def clifford2_lookup() -> dict:
    """tableau key -> index for the full 2q Clifford group (built once)."""
    out = {}
    for idx in range(11520):
        t = Tableau.from_unitary(clifford2_element(idx).unitary())
        k = t.key()
        assert k not in out, "duplicate canonical element"
        out[k] = idx
    return out


def clifford2_index(t: Tableau) -> int:
    return clifford2_lookup()[t.key()]


@lru_cache(maxsize=1)
def clifford2_tableaux() -> tuple[Tableau, ...]:
    return tuple(Tableau.from_unitary(clifford2_element(i).unitary())
                 for i in range(11520))
