"""Steady state of the Lindblad generator and the photon observables derived from it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import hilbert
from .errors import (
    ConvergenceError,
    DegeneracyError,
    InvalidArgumentError,
    TruncationWarning,
    UndefinedTransmissionError,
)
from .model import ModelParams, build_liouvillian, unvec

RESIDUAL_TOL = 1e-10
PSD_TOL = 1e-8
N_S_FLOOR = 1e-14
GUARD_RTOL = 1e-3
GUARD_EXTRA_PHOTONS = 2
REFINEMENT_STEPS = 2
# reciprocal 1-norm condition number below which the steady state is taken as non-unique;
# unique points at default sizes sit above 1e-10, degenerate ones below 1e-19
RCOND_MIN = 1e-14


@dataclass(frozen=True)
class SteadyObservables:
    n_s: float
    t_a: float
    g2_0: float  # nan when n_s is below the division guard
    p1: float
    p2: float
    p3: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("n_s", "t_a", "g2_0", "p1", "p2", "p3")}


def _bordered_system(lv):
    """Replace one population equation of ``L x = 0`` by ``Tr rho = 1``.

    Only the population rows are linearly dependent (their sum is the trace
    of ``L rho``, which vanishes identically), so the replaced row is picked
    among them: the one with the largest diagonal magnitude.
    """
    dim2 = lv.shape[0]
    d = int(round(math.sqrt(dim2)))
    pop = np.arange(d) * (d + 1)
    diag = np.abs(lv.diagonal()[pop])
    row = int(pop[np.argmax(diag)])
    rhs = np.zeros(dim2, dtype=complex)
    rhs[row] = 1.0
    return d, pop, row, rhs


def steady_state(lv, method: str = "sparse") -> np.ndarray:
    """Unique trace-one solution of ``L rho = 0``.

    ``method="dense"`` runs LAPACK LU on the dense bordered matrix and is the
    reference; ``"sparse"`` uses SuperLU on the same system.
    """
    d, pop, row, rhs = _bordered_system(lv)
    if method == "dense":
        a = lv.toarray() if sp.issparse(lv) else np.array(lv, dtype=complex)
        a[row, :] = 0.0
        a[row, pop] = 1.0
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                factors = scipy.linalg.lu_factor(a, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise DegeneracyError(f"bordered steady-state system is singular: {exc}") from exc
        (gecon,) = scipy.linalg.get_lapack_funcs(("gecon",), (factors[0],))
        rcond = gecon(factors[0], np.abs(a).sum(axis=0).max(), norm="1")[0]

        def solve_with(b):
            return scipy.linalg.lu_solve(factors, b, check_finite=False)

    elif method == "sparse":
        a = sp.lil_matrix(lv, dtype=complex)
        a.rows[row] = list(pop)
        a.data[row] = [1.0 + 0j] * d
        a = a.tocsc()
        try:
            lu = spla.splu(a)
        except RuntimeError as exc:
            raise DegeneracyError(f"bordered steady-state system is singular: {exc}") from exc
        solve_with = lu.solve
        inv = spla.LinearOperator(
            a.shape, matvec=lu.solve, rmatvec=lambda b: lu.solve(b, trans="H"), dtype=complex
        )
        rcond = 1.0 / (spla.norm(a, 1) * spla.onenormest(inv))
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    if not rcond > RCOND_MIN:
        raise DegeneracyError(
            f"steady state is not unique (reciprocal condition number {rcond:.1e})"
        )

    # far from resonance g2 rests on entries ~1e-9; refinement keeps them accurate
    x = solve_with(rhs)
    for _ in range(REFINEMENT_STEPS):
        x = x + solve_with(rhs - a @ x)
    if not np.all(np.isfinite(x)):
        raise DegeneracyError("bordered steady-state system is singular (non-finite solution)")

    residual = np.abs(lv @ x).max()
    if residual > RESIDUAL_TOL:
        raise ConvergenceError(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")

    rho = unvec(x)
    rho = 0.5 * (rho + rho.conj().T)
    return _psd_guard(rho)


def _psd_guard(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w.min() < -PSD_TOL:
        raise ConvergenceError(f"steady state has eigenvalue {w.min():.3e} < -{PSD_TOL:g}")
    if w.min() < 0:
        w = np.clip(w, 0.0, None)
        rho = (v * w) @ v.conj().T
        rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> None:
    """Raise InvalidArgumentError unless rho is Hermitian, unit-trace and numerically PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidArgumentError(f"density matrix must be square, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > atol:
        raise InvalidArgumentError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise InvalidArgumentError(f"density matrix trace is {np.trace(rho)!r}")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -PSD_TOL:
        raise InvalidArgumentError("density matrix is not positive semidefinite")


def empty_cavity_photons(params: ModelParams, delta_c: float | None = None) -> float:
    """Photon number of the driven empty cavity, ``eta^2 / ((kappa/2)^2 + delta_c^2)``."""
    dc = params.delta_c if delta_c is None else delta_c
    return params.eta**2 / ((params.kappa / 2) ** 2 + dc**2)


def _expect(op, rho) -> complex:
    return (op @ rho).trace()


def transmission(rho: np.ndarray, params: ModelParams) -> float:
    """Photon number normalized by the resonant empty-cavity value ``(2 eta / kappa)^2``."""
    if params.eta == 0:
        raise UndefinedTransmissionError("transmission needs eta > 0")
    space = hilbert.build_space(params.n_max)
    n_s = _expect(hilbert.number(space), rho).real
    return float(n_s / empty_cavity_photons(params, delta_c=0.0))


def observables(rho: np.ndarray, params: ModelParams) -> SteadyObservables:
    space = hilbert.build_space(params.n_max)
    if rho.shape != (space.total_dim, space.total_dim):
        raise InvalidArgumentError(
            f"rho has shape {rho.shape}, expected {(space.total_dim,) * 2} for n_max={params.n_max}"
        )
    a = hilbert.annihilation(space)
    ad = hilbert.creation(space)
    n_s = float(_expect(ad @ a, rho).real)
    if n_s < N_S_FLOOR:
        g2 = math.nan
    else:
        g2 = float(_expect(ad @ ad @ a @ a, rho).real / n_s**2)
    try:
        t_a = transmission(rho, params)
    except UndefinedTransmissionError:
        t_a = math.nan
    p = [float(_expect(hilbert.atomic_transition(space, i, i), rho).real) for i in (1, 2, 3)]
    return SteadyObservables(n_s=n_s, t_a=t_a, g2_0=g2, p1=p[0], p2=p[1], p3=p[2])


def solve(params: ModelParams, method: str = "sparse") -> np.ndarray:
    """Build the generator for ``params`` and return its steady state."""
    return steady_state(build_liouvillian(params), method=method)


def steady_observables(params: ModelParams, method: str = "sparse") -> SteadyObservables:
    return observables(solve(params, method), params)


@dataclass(frozen=True)
class GuardReport:
    n_max: int
    n_max_check: int
    rel_diff: dict = field(default_factory=dict)
    ok: bool = True

    def as_dict(self) -> dict:
        return {
            "n_max": self.n_max,
            "n_max_check": self.n_max_check,
            "rel_diff": dict(self.rel_diff),
            "ok": self.ok,
        }


def _rel(a: float, b: float) -> float:
    if math.isnan(a) and math.isnan(b):
        return 0.0
    return abs(a - b) / max(abs(b), 1e-300)


def guarded_observables(
    params: ModelParams, rtol: float = GUARD_RTOL, n_max_check: int | None = None
) -> tuple[SteadyObservables, GuardReport]:
    """Observables at ``params.n_max``, cross-checked against a larger Fock cutoff.

    The check cutoff defaults to ``n_max + 2``.  A disagreement above ``rtol``
    in ``n_s``, ``t_a`` or ``g2_0`` emits a TruncationWarning and is recorded
    in the report; the observables at ``params.n_max`` are returned either way.
    """
    if n_max_check is None:
        n_max_check = params.n_max + GUARD_EXTRA_PHOTONS
    obs = steady_observables(params)
    ref = steady_observables(params.replace(n_max=n_max_check))
    diffs = {k: _rel(getattr(obs, k), getattr(ref, k)) for k in ("n_s", "t_a", "g2_0")}
    ok = all(v <= rtol for v in diffs.values())
    if not ok:
        warnings.warn(
            f"truncation guard failed at n_max={params.n_max} vs {n_max_check}: {diffs}",
            TruncationWarning,
            stacklevel=2,
        )
    return obs, GuardReport(params.n_max, n_max_check, diffs, ok)
