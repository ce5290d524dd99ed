"""Truncated atom (x) cavity Hilbert space and its elementary operators.

Basis ordering: the atomic index varies slowest, so the basis state
(atom level ``i`` in {1, 2, 3}, photon number ``n``) sits at index
``(i - 1) * (n_max + 1) + n``.  Every operator is a ``scipy.sparse`` CSR
matrix of dtype complex128 built as ``kron(atom_part, photon_part)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError

ATOM_DIM = 3


@dataclass(frozen=True)
class Space:
    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvalidArgumentError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def atom_dim(self) -> int:
        return ATOM_DIM

    @property
    def fock_dim(self) -> int:
        return self.n_max + 1

    @property
    def total_dim(self) -> int:
        return ATOM_DIM * (self.n_max + 1)

    def index(self, level: int, photons: int) -> int:
        """Basis index of atom level ``level`` (1-based) with ``photons`` photons."""
        _check_level(level)
        if not 0 <= photons <= self.n_max:
            raise InvalidArgumentError(f"photon number {photons} outside [0, {self.n_max}]")
        return (level - 1) * self.fock_dim + photons

    def basis_state(self, level: int, photons: int) -> np.ndarray:
        psi = np.zeros(self.total_dim, dtype=complex)
        psi[self.index(level, photons)] = 1.0
        return psi


def build_space(n_max: int) -> Space:
    return Space(n_max)


def _check_level(level):
    if level not in (1, 2, 3):
        raise InvalidArgumentError(f"atomic level index must be 1, 2 or 3, got {level!r}")


@lru_cache(maxsize=None)
def _annihilation(n_max: int) -> sp.csr_matrix:
    a = sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1, dtype=complex)
    return sp.kron(sp.identity(ATOM_DIM, dtype=complex), a, format="csr")


def annihilation(space: Space) -> sp.csr_matrix:
    """Cavity lowering operator, identity on the atom."""
    return _annihilation(space.n_max).copy()


def creation(space: Space) -> sp.csr_matrix:
    return annihilation(space).conj().T.tocsr()


def number(space: Space) -> sp.csr_matrix:
    a = annihilation(space)
    return (a.conj().T @ a).tocsr()


def atomic_transition(space: Space, i: int, j: int) -> sp.csr_matrix:
    """``|i><j|`` on the atom, identity on the cavity."""
    _check_level(i)
    _check_level(j)
    m = sp.coo_matrix(([1.0 + 0j], ([i - 1], [j - 1])), shape=(ATOM_DIM, ATOM_DIM))
    return sp.kron(m, sp.identity(space.fock_dim, dtype=complex), format="csr")


def identity(space: Space) -> sp.csr_matrix:
    return sp.identity(space.total_dim, dtype=complex, format="csr")


def is_hermitian(op, rtol: float = 1e-12) -> bool:
    """True if ``max|O - O^dag| <= rtol * max|O|``."""
    dense = op.toarray() if sp.issparse(op) else np.asarray(op)
    scale = np.abs(dense).max() if dense.size else 0.0
    return bool(np.abs(dense - dense.conj().T).max(initial=0.0) <= rtol * scale)


def dump_triplets(op, path) -> None:
    """Write nonzero entries as ``row col re im`` lines (0-based), for debugging only."""
    coo = sp.coo_matrix(op)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
