"""Model parameters, Hamiltonian and Lindblad generator of the driven cavity-EIT system.

All rates are pure numbers in units of the cavity decay rate (``kappa = 1``
unless a caller deliberately rescales).  Density matrices are vectorized by
column stacking, ``vec(rho) = rho.reshape(-1, order="F")``, so that
``vec(A rho B) = kron(B.T, A) @ vec(rho)``.

Hamiltonian (hbar = 1)::

    H = g (a^dag s13 + a s31) + Omega (s23 + s32) + U0 a^dag a S
        + dc (a^dag a + s33 + s22) + eta (a^dag + a)

with ``S = s11`` (STARK_ON_G1) or ``S = s22`` (STARK_ON_G2).  The generator
is ``L rho = -i[H, rho] + kappa/2 D[a] + gamma/2 D[s13] + gamma/2 D[s23]``
with ``D[o] rho = 2 o rho o^dag - o^dag o rho - rho o^dag o``.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .errors import InvalidArgumentError
from .hilbert import Space

DEFAULT_G = 4.0
DEFAULT_GAMMA = 7.5 / 160.0
DEFAULT_ETA = 0.1
DEFAULT_N_MAX = 7


class Variant(str, enum.Enum):
    STARK_ON_G1 = "STARK_ON_G1"  # U0 a^dag a s11
    STARK_ON_G2 = "STARK_ON_G2"  # U0 a^dag a s22

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidArgumentError(
                f"unknown variant {value!r}; expected one of {[v.value for v in cls]}"
            ) from None


RATE_FIELDS = ("g", "omega", "u0", "delta_c", "kappa", "gamma", "eta")
NONNEGATIVE_FIELDS = ("g", "omega", "kappa", "gamma", "eta")


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one operating point, rates in units of kappa."""

    g: float = DEFAULT_G
    omega: float = 0.0
    u0: float = 0.0
    delta_c: float = 0.0
    kappa: float = 1.0
    gamma: float = DEFAULT_GAMMA
    eta: float = DEFAULT_ETA
    variant: Variant = Variant.STARK_ON_G1
    n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        for name in RATE_FIELDS:
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name in NONNEGATIVE_FIELDS:
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvalidArgumentError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        object.__setattr__(self, "n_max", int(self.n_max))

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def in_g(self, **ratios) -> "ModelParams":
        """Copy with the named rates set to ``ratio * g``.

        >>> ModelParams().in_g(omega=2, u0=1.6).omega
        8.0
        """
        bad = set(ratios) - (set(RATE_FIELDS) - {"g"})
        if bad:
            raise InvalidArgumentError(f"cannot scale {sorted(bad)} by g")
        return self.replace(**{k: v * self.g for k, v in ratios.items()})

    def space(self) -> Space:
        return hilbert.build_space(self.n_max)


def _check_space(params: ModelParams, space: Space | None) -> Space:
    if space is None:
        return params.space()
    if space.n_max != params.n_max:
        raise InvalidArgumentError(
            f"space has n_max={space.n_max} but params.n_max={params.n_max}"
        )
    return space


@lru_cache(maxsize=None)
def _hamiltonian_terms(n_max: int, variant: Variant) -> dict[str, sp.csr_matrix]:
    space = hilbert.build_space(n_max)
    a = hilbert.annihilation(space)
    ad = hilbert.creation(space)
    n = hilbert.number(space)

    def s(i, j):
        return hilbert.atomic_transition(space, i, j)

    stark_level = 1 if variant is Variant.STARK_ON_G1 else 2
    terms = {
        "g": ad @ s(1, 3) + a @ s(3, 1),
        "omega": s(2, 3) + s(3, 2),
        "u0": n @ s(stark_level, stark_level),
        "delta_c": n + s(3, 3) + s(2, 2),
        "eta": ad + a,
    }
    return {k: v.tocsr() for k, v in terms.items()}


def build_hamiltonian(params: ModelParams, space: Space | None = None) -> sp.csr_matrix:
    """Hamiltonian in the rotating frame of the probe, as a sparse Hermitian matrix."""
    space = _check_space(params, space)
    terms = _hamiltonian_terms(space.n_max, params.variant)
    h = sp.csr_matrix((space.total_dim, space.total_dim), dtype=complex)
    for name, op in terms.items():
        coeff = getattr(params, name)
        if coeff != 0.0:
            h = h + coeff * op
    return h.tocsr()


def commutator_superop(h) -> sp.csr_matrix:
    """Superoperator of ``rho -> -i [h, rho]``."""
    h = sp.csr_matrix(h)
    eye = sp.identity(h.shape[0], dtype=complex, format="csr")
    return (-1j * (sp.kron(eye, h) - sp.kron(h.T, eye))).tocsr()


def dissipator_superop(o) -> sp.csr_matrix:
    """Superoperator of ``D[o] rho = 2 o rho o^dag - o^dag o rho - rho o^dag o``."""
    o = sp.csr_matrix(o)
    eye = sp.identity(o.shape[0], dtype=complex, format="csr")
    odo = (o.conj().T @ o).tocsr()
    return (2 * sp.kron(o.conj(), o) - sp.kron(eye, odo) - sp.kron(odo.T, eye)).tocsr()


@lru_cache(maxsize=None)
def _liouvillian_terms(n_max: int, variant: Variant) -> dict[str, sp.csr_matrix]:
    space = hilbert.build_space(n_max)
    terms = {k: commutator_superop(v) for k, v in _hamiltonian_terms(n_max, variant).items()}
    terms["kappa"] = 0.5 * dissipator_superop(hilbert.annihilation(space))
    terms["gamma"] = 0.5 * (
        dissipator_superop(hilbert.atomic_transition(space, 1, 3))
        + dissipator_superop(hilbert.atomic_transition(space, 2, 3))
    )
    return terms


def build_liouvillian(params: ModelParams, space: Space | None = None) -> sp.csr_matrix:
    """Lindblad generator acting on column-stacked density matrices."""
    space = _check_space(params, space)
    terms = _liouvillian_terms(space.n_max, params.variant)
    dim = space.total_dim**2
    lv = sp.csr_matrix((dim, dim), dtype=complex)
    for name, op in terms.items():
        coeff = getattr(params, name)
        if coeff != 0.0:
            lv = lv + coeff * op
    return lv.tocsr()


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise InvalidArgumentError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((d, d), order="F")


def apply_lindblad(params: ModelParams, rho: np.ndarray) -> np.ndarray:
    """Evaluate ``L rho`` directly in operator form (no vectorization).

    Slow; meant as an independent check on :func:`build_liouvillian`.
    """
    space = params.space()
    h = build_hamiltonian(params, space).toarray()
    rho = np.asarray(rho, dtype=complex)
    out = -1j * (h @ rho - rho @ h)
    jumps = [
        (params.kappa / 2, hilbert.annihilation(space)),
        (params.gamma / 2, hilbert.atomic_transition(space, 1, 3)),
        (params.gamma / 2, hilbert.atomic_transition(space, 2, 3)),
    ]
    for rate, o in jumps:
        o = o.toarray()
        od = o.conj().T
        out += rate * (2 * o @ rho @ od - od @ o @ rho - rho @ od @ o)
    return out
