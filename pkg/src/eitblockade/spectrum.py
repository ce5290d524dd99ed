"""Eigenstructure of the undriven n-excitation manifold.

With ``eta = 0`` the excitation number is conserved and the n-th manifold is
spanned by ``|n>|1>, |n-1>|2>, |n-1>|3>`` (in that order).  An eigenvalue
``E`` of the manifold matrix at ``delta_c = 0`` turns into the n-photon
resonance detuning ``delta = -E / n``.

Branch labels (+, 0, -) are assigned at ``u0 = 0``, where
``delta_{n,+-} = +-sqrt(g^2 n + Omega^2) / n`` and ``delta_{n,0} = 0``, and
then followed to the requested ``u0`` by eigenvector overlap instead of by
sorting, so labels survive exact level crossings.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InvalidArgumentError
from .model import ModelParams, Variant

LABELS = ("minus", "zero", "plus")
MAX_STEP_IN_G = 0.05


@dataclass(frozen=True)
class DressedSplittings:
    n: int
    delta_minus: float
    delta_zero: float
    delta_plus: float
    # raw manifold eigenvalues at delta_c = 0, ordered (minus, zero, plus)
    eigenvalues: tuple[float, float, float]

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.delta_minus, self.delta_zero, self.delta_plus)


@dataclass(frozen=True)
class DarkStateAmplitudes:
    n: int
    beta_plus: float  # on |n>|1>
    beta_zero: float  # on |n-1>|3>
    beta_minus: float  # on |n-1>|2>


@dataclass(frozen=True)
class BranchPath:
    """Result of following the three branches from u0 = 0 to a target u0."""

    u0: np.ndarray  # (k,)
    energies: np.ndarray  # (k, 3), columns ordered (minus, zero, plus)
    vectors: np.ndarray  # (3, 3) final eigenvectors, column j is branch j
    min_overlap: float


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"manifold index n must be an integer >= 1, got {n!r}")
    return int(n)


def manifold_matrix(n: int, params: ModelParams) -> np.ndarray:
    n = _check_n(n)
    rn = math.sqrt(n)
    m = np.diag([n * params.delta_c] * 3).astype(float)
    if params.variant is Variant.STARK_ON_G1:
        m[0, 0] += n * params.u0
    else:
        m[1, 1] += (n - 1) * params.u0
    m[0, 2] = m[2, 0] = params.g * rn
    m[1, 2] = m[2, 1] = params.omega
    return m


_PERMS = np.array(list(itertools.permutations(range(3))))


def _best_permutation(prev: np.ndarray, new: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    overlap = np.abs(prev.T @ new)
    scores = overlap[np.arange(3), _PERMS].sum(axis=1)
    best = _PERMS[int(np.argmax(scores))]
    return best, overlap[np.arange(3), best]


def track_branches(n: int, params: ModelParams, max_step: float = MAX_STEP_IN_G) -> BranchPath:
    """Follow the labelled branches along ``u0' in [0, params.u0]`` at ``delta_c = 0``."""
    n = _check_n(n)
    base = params.replace(delta_c=0.0, u0=0.0)
    scale = params.g if params.g > 0 else max(params.omega, abs(params.u0), 1.0)
    steps = max(1, math.ceil(abs(params.u0) / (max_step * scale) - 1e-12))
    grid = np.linspace(0.0, params.u0, steps + 1)

    # the manifold matrix is affine in u0: m(u) = m0 + u * dm
    m0 = manifold_matrix(n, base)
    dm = manifold_matrix(n, base.replace(u0=1.0)) - m0
    w_all, v_all = np.linalg.eigh(m0[None] + grid[:, None, None] * dm[None])

    # ascending E means descending delta = -E/n: (plus, zero, minus)
    vecs = v_all[0][:, ::-1]
    energies = np.empty((grid.size, 3))
    energies[0] = w_all[0][::-1]
    min_overlap = 1.0
    for k in range(1, grid.size):
        perm, ov = _best_permutation(vecs, v_all[k])
        vecs = v_all[k][:, perm]
        energies[k] = w_all[k][perm]
        min_overlap = min(min_overlap, float(ov.min()))
    return BranchPath(u0=grid, energies=energies, vectors=vecs, min_overlap=min_overlap)


def dressed_splittings(n: int, params: ModelParams) -> DressedSplittings:
    path = track_branches(n, params)
    e = path.energies[-1]
    d = -e / n
    return DressedSplittings(
        n=n,
        delta_minus=float(d[0]),
        delta_zero=float(d[1]),
        delta_plus=float(d[2]),
        eigenvalues=(float(e[0]), float(e[1]), float(e[2])),
    )


def dark_state_amplitudes(n: int, params: ModelParams) -> DarkStateAmplitudes:
    """Normalized eigenvector of the middle (quasi-dark) branch, sign fixed by beta_minus >= 0."""
    path = track_branches(n, params)
    e = path.energies[-1]
    scale = params.g if params.g > 0 else 1.0
    for j in (0, 2):
        if abs(e[1] - e[j]) < 1e-10 * scale:
            raise DegeneracyError(
                f"middle branch degenerate with branch '{LABELS[j]}' "
                f"(n={n}, E={e[1]!r} vs {e[j]!r})"
            )
    vec = path.vectors[:, 1].copy()
    vec /= np.linalg.norm(vec)
    if vec[1] < 0 or (abs(vec[1]) < 1e-15 and vec[0] > 0):
        vec = -vec
    return DarkStateAmplitudes(
        n=n, beta_plus=float(vec[0]), beta_zero=float(vec[2]), beta_minus=float(vec[1])
    )
