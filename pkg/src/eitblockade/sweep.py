"""Parameter scans, the g2 optimum over detuning, and figure presets.

Every grid point is an independent task (it builds its own generator), so
sweeps run under a process pool and are merged by row index; results do not
depend on the worker count.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import spectrum, steady
from .errors import (
    BoundaryWarning,
    ConvergenceError,
    DegeneracyError,
    InvalidArgumentError,
    SweepError,
    TruncationWarning,
)
from .model import ModelParams, Variant
from .spectrum import DressedSplittings
from .steady import GuardReport, SteadyObservables

log = logging.getLogger(__name__)

AXIS_NAMES = ("delta_c", "u0", "omega")
SCALAR_OUTPUTS = ("n_s", "t_a", "g2_0", "p1", "p2", "p3")
OUTPUT_NAMES = SCALAR_OUTPUTS + ("splittings",)
DEFAULT_OUTPUTS = SCALAR_OUTPUTS
MAX_FLAGGED_FRACTION = 0.10

POINTS_1D = 481
POINTS_2D = 121
COARSE_POINTS = 201
WINDOW_HALF_WIDTH_G = 0.5
RESOLUTION_G = 1e-4


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    steps: int

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise InvalidArgumentError(f"axis name must be one of {AXIS_NAMES}, got {self.name!r}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InvalidArgumentError(f"axis {self.name}: steps must be an integer >= 2")
        if not self.min < self.max:
            raise InvalidArgumentError(f"axis {self.name}: min must be < max")
        object.__setattr__(self, "min", float(self.min))
        object.__setattr__(self, "max", float(self.max))
        object.__setattr__(self, "steps", int(self.steps))

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.steps)

    @property
    def spacing(self) -> float:
        return (self.max - self.min) / (self.steps - 1)


@dataclass(frozen=True)
class SweepSpec:
    base: ModelParams
    axis1: Axis
    axis2: Axis | None = None
    outputs: tuple[str, ...] = DEFAULT_OUTPUTS

    def __post_init__(self):
        outputs = tuple(self.outputs)
        bad = [o for o in outputs if o not in OUTPUT_NAMES]
        if bad:
            raise InvalidArgumentError(f"unknown outputs {bad}; allowed {OUTPUT_NAMES}")
        object.__setattr__(self, "outputs", outputs)
        if self.axis2 is not None and self.axis2.name == self.axis1.name:
            raise InvalidArgumentError("axis names must be distinct")

    @property
    def axes(self) -> tuple[Axis, ...]:
        return (self.axis1,) if self.axis2 is None else (self.axis1, self.axis2)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.steps for ax in self.axes)

    def points(self) -> list[ModelParams]:
        """Parameter points in row order (axis1 outer, axis2 inner)."""
        grids = [ax.values() for ax in self.axes]
        names = [ax.name for ax in self.axes]
        return [
            self.base.replace(**dict(zip(names, map(float, combo))))
            for combo in itertools.product(*grids)
        ]


@dataclass(frozen=True)
class SweepRow:
    delta_c: float
    u0: float
    omega: float
    observables: SteadyObservables | None
    splittings: DressedSplittings | None = None
    guard: GuardReport | None = None
    flag: str | None = None

    def value(self, name: str) -> float:
        if name in AXIS_NAMES:
            return getattr(self, name)
        if name in ("delta_minus", "delta_zero", "delta_plus"):
            return getattr(self.splittings, name) if self.splittings else math.nan
        if self.observables is None:
            return math.nan
        return getattr(self.observables, name)


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]

    @property
    def flagged(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if r.flag]

    def column(self, name: str) -> np.ndarray:
        return np.array([r.value(name) for r in self.rows], dtype=float)

    def grid(self, name: str) -> np.ndarray:
        return self.column(name).reshape(self.spec.shape)

    def guard_summary(self) -> dict:
        worst = {}
        for r in self.rows:
            if r.guard is None:
                continue
            for k, v in r.guard.rel_diff.items():
                worst[k] = max(worst.get(k, 0.0), v)
        return {
            "rows": len(self.rows),
            "flagged_rows": self.flagged,
            "flags": {i: self.rows[i].flag for i in self.flagged},
            "max_rel_diff": worst,
        }


def _evaluate_point(params: ModelParams, splittings: bool, guard: bool) -> SweepRow:
    flag = None
    obs = report = None
    try:
        if guard:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                obs, report = steady.guarded_observables(params)
            if not report.ok:
                flag = "truncation"
        else:
            obs = steady.steady_observables(params)
    except (ConvergenceError, DegeneracyError) as exc:
        flag = f"{type(exc).__name__}: {exc}"
    split = spectrum.dressed_splittings(1, params) if splittings else None
    return SweepRow(
        delta_c=params.delta_c,
        u0=params.u0,
        omega=params.omega,
        observables=obs,
        splittings=split,
        guard=report,
        flag=flag,
    )


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers == 0:
        return os.cpu_count() or 1
    if workers < 0:
        raise InvalidArgumentError("worker count must be >= 0")
    return workers


def parallel_map(fn, args: list, workers: int | None = 1) -> list:
    """Order-preserving map, in-process for one worker, else over a process pool."""
    workers = resolve_workers(workers)
    if workers == 1 or len(args) < 2:
        return [fn(*a) for a in args]
    chunk = max(1, len(args) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args), chunksize=chunk))


def run_sweep(spec: SweepSpec, workers: int | None = 1, guard: bool = True) -> SweepResult:
    points = spec.points()
    want_split = "splittings" in spec.outputs
    rows = parallel_map(_evaluate_point, [(p, want_split, guard) for p in points], workers)
    result = SweepResult(spec, rows)
    n_flag = len(result.flagged)
    if n_flag:
        log.warning("%d of %d sweep points flagged", n_flag, len(rows))
    if n_flag > MAX_FLAGGED_FRACTION * len(rows):
        raise SweepError(f"{n_flag} of {len(rows)} sweep points failed")
    return result


@dataclass(frozen=True)
class OptimumReport:
    g2_opt: float
    delta_c_star: float
    t_opt: float
    window: tuple[float, float]
    observables: SteadyObservables
    at_boundary: bool = False
    guard: GuardReport | None = None


def default_window(params: ModelParams) -> tuple[float, float]:
    """``delta_{1,0} +- 0.5 g``, centred on the analytic middle-branch resonance."""
    d0 = spectrum.dressed_splittings(1, params).delta_zero
    half = WINDOW_HALF_WIDTH_G * params.g
    return (d0 - half, d0 + half)


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5) - 1) / 2
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def optimal_over_detuning(
    params: ModelParams,
    window: tuple[float, float] | None = None,
    coarse_points: int = COARSE_POINTS,
    resolution: float = RESOLUTION_G,
    guard: bool = False,
) -> OptimumReport:
    """Minimize g2(0) over delta_c inside ``window``.

    A coarse grid locates the best cell, then golden-section search narrows
    it to ``resolution * g``.  The window must contain the middle-branch
    resonance.  With ``guard=True`` the optimum is re-evaluated at a larger
    Fock cutoff and the comparison is attached to the report.
    """
    if window is None:
        window = default_window(params)
    lo, hi = map(float, window)
    if not lo < hi:
        raise InvalidArgumentError(f"empty detuning window {window!r}")
    d0 = spectrum.dressed_splittings(1, params).delta_zero
    if not lo <= d0 <= hi:
        raise InvalidArgumentError(
            f"window [{lo:g}, {hi:g}] does not bracket the middle-branch resonance {d0:g}"
        )

    def g2_at(dc):
        value = steady.steady_observables(params.replace(delta_c=dc)).g2_0
        return math.inf if math.isnan(value) else value

    grid = np.linspace(lo, hi, max(3, coarse_points))
    values = np.array([g2_at(x) for x in grid])
    i = int(np.argmin(values))
    at_boundary = i in (0, grid.size - 1)
    if at_boundary:
        warnings.warn(
            f"g2 minimum at window edge delta_c={grid[i]:g}; window may be mis-specified",
            BoundaryWarning,
            stacklevel=2,
        )
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    x = _golden_section(g2_at, a, b, resolution * (params.g if params.g > 0 else 1.0))
    if g2_at(x) > values[i]:
        x = float(grid[i])
    report = None
    if guard:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            obs, report = steady.guarded_observables(params.replace(delta_c=x))
    else:
        obs = steady.steady_observables(params.replace(delta_c=x))
    return OptimumReport(
        g2_opt=obs.g2_0,
        delta_c_star=float(x),
        t_opt=obs.t_a,
        window=(lo, hi),
        observables=obs,
        at_boundary=at_boundary,
        guard=report,
    )


def _optimum_quiet(params: ModelParams, guard: bool = True) -> OptimumReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        return optimal_over_detuning(params, guard=guard)


@dataclass(frozen=True)
class OptimumScanRow:
    delta_c: float
    u0: float
    omega: float
    report: OptimumReport

    def value(self, name: str) -> float:
        if name in AXIS_NAMES:
            return getattr(self, name)
        return getattr(self.report.observables, name)


def optimum_scan(base: ModelParams, axis: Axis, workers: int | None = 1) -> list[OptimumScanRow]:
    """``optimal_over_detuning`` along one of the u0 / omega axes."""
    if axis.name == "delta_c":
        raise InvalidArgumentError("optimum scans run over u0 or omega, not delta_c")
    points = [base.replace(**{axis.name: float(v)}) for v in axis.values()]
    reports = parallel_map(_optimum_quiet, [(p,) for p in points], workers)
    return [
        OptimumScanRow(delta_c=r.delta_c_star, u0=p.u0, omega=p.omega, report=r)
        for p, r in zip(points, reports)
    ]


def default_variant_params() -> tuple[ModelParams, ModelParams]:
    g1 = ModelParams(variant=Variant.STARK_ON_G1).in_g(omega=2.1)
    g2 = ModelParams(variant=Variant.STARK_ON_G2).in_g(omega=0.44)
    return g1, g2


@dataclass(frozen=True)
class CompareRow:
    u0: float
    g2_g1: float
    g2_g2: float
    ratio: float
    guard_ok: bool = True


def _compare_point(u0: float, p1: ModelParams, p2: ModelParams) -> CompareRow:
    opt = _optimum_quiet(p1.replace(u0=u0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        obs, report = steady.guarded_observables(p2.replace(u0=u0, delta_c=0.0))
    a, b = opt.g2_opt, obs.g2_0
    return CompareRow(
        u0=float(u0),
        g2_g1=a,
        g2_g2=b,
        ratio=b / a if a > 0 else math.nan,
        guard_ok=bool(report.ok and (opt.guard is None or opt.guard.ok)),
    )


def compare_variants(
    u0_list,
    params_g1: ModelParams | None = None,
    params_g2: ModelParams | None = None,
    workers: int | None = 1,
) -> list[CompareRow]:
    """Stark shift on |1> (optimized over detuning) against Stark shift on |2> at delta_c = 0."""
    d1, d2 = default_variant_params()
    p1 = d1 if params_g1 is None else params_g1.replace(variant=Variant.STARK_ON_G1)
    p2 = d2 if params_g2 is None else params_g2.replace(variant=Variant.STARK_ON_G2)
    return parallel_map(_compare_point, [(float(u), p1, p2) for u in u0_list], workers)


@dataclass(frozen=True)
class FigureJob:
    name: str
    kind: str  # "sweep", "optimum_scan" or "compare"
    sweeps: tuple[tuple[str, SweepSpec], ...] = ()
    base: ModelParams | None = None
    scan: Axis | None = None
    u0_values: tuple[float, ...] = ()


FIGURES = (
    "fig2a", "fig2b", "fig2c", "fig2d",
    "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f",
    "fig4a", "fig4b", "fig4c", "fig4d",
    "fig5a", "fig5b",
)  # fmt: skip


def _fmt(x: float) -> str:
    return f"{x:g}"


def figure_preset(name: str, base: ModelParams | None = None) -> FigureJob:
    """Axes and fixed parameters of one figure panel, rates in kappa units.

    ``base`` supplies the shared physical defaults (g, gamma, eta, n_max).
    """
    if name not in FIGURES:
        raise InvalidArgumentError(f"unknown figure {name!r}; known: {', '.join(FIGURES)}")
    base = ModelParams() if base is None else base
    g = base.g
    g2_out = ("n_s", "g2_0", "p1", "p2", "p3")
    t_out = ("n_s", "t_a", "p1", "p2", "p3")
    panel_out = g2_out if name[-1] in "ace" else t_out
    dc_1d = Axis("delta_c", -6 * g, 6 * g, POINTS_1D)
    dc_2d = Axis("delta_c", -6 * g, 6 * g, POINTS_2D)
    fig = name[:4]

    if fig in ("fig2", "fig3") and name[-1] in "ab":
        omega, u0s = (0.01, (0.0, 1.0)) if fig == "fig2" else (2.0, (0.0, 1.6))
        p = base.replace(variant=Variant.STARK_ON_G1).in_g(omega=omega)
        sweeps = tuple(
            (f"{name}_u0={_fmt(r)}g", SweepSpec(p.in_g(u0=r), dc_1d, outputs=panel_out)) for r in u0s
        )
        return FigureJob(name, "sweep", sweeps=sweeps)

    if (fig in ("fig2", "fig3") and name[-1] in "cd") or (fig == "fig4" and name[-1] in "ab"):
        p = base.replace(variant=Variant.STARK_ON_G1)
        if fig == "fig2":
            p, ax2 = p.in_g(omega=0.01), Axis("u0", -4 * g, 4 * g, POINTS_2D)
        elif fig == "fig3":
            p, ax2 = p.in_g(u0=1.6), Axis("omega", 0.5 * g, 4 * g, POINTS_2D)
        else:
            p, ax2 = p.in_g(omega=2.1), Axis("u0", 0.0, 4 * g, POINTS_2D)
        spec = SweepSpec(p, dc_2d, ax2, outputs=panel_out + ("splittings",))
        return FigureJob(name, "sweep", sweeps=((name, spec),))

    if fig == "fig3":  # e, f
        p = base.replace(variant=Variant.STARK_ON_G1).in_g(u0=1.6)
        return FigureJob(name, "optimum_scan", base=p, scan=Axis("omega", 0.5 * g, 4 * g, 71))

    if fig == "fig4":  # c, d
        p = base.replace(variant=Variant.STARK_ON_G1).in_g(omega=2.1)
        return FigureJob(name, "optimum_scan", base=p, scan=Axis("u0", 0.0, 4 * g, 41))

    if name == "fig5a":
        p = base.replace(variant=Variant.STARK_ON_G2, delta_c=0.0)
        spec = SweepSpec(
            p, Axis("u0", 0.0, 4 * g, POINTS_2D), Axis("omega", 0.02 * g, 2 * g, POINTS_2D),
            outputs=g2_out,
        )
        return FigureJob(name, "sweep", sweeps=((name, spec),))

    # fig5b
    return FigureJob(name, "compare", base=base, u0_values=tuple(np.linspace(0.0, 4 * g, 21)))


def local_minima(values: np.ndarray) -> np.ndarray:
    """Indices of strict interior local minima."""
    v = np.asarray(values, dtype=float)
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])
    return np.nonzero(inner)[0] + 1


def overlay_violations(result: SweepResult, max_steps: float = 2.0) -> list[tuple[float, float]]:
    """g2 minima along delta_c farther than ``max_steps`` grid steps from every
    first-manifold resonance ``delta_{1,nu}``.

    Returns ``(other_axis_value, delta_c)`` per offending minimum (the first
    entry is nan for 1D sweeps); an empty list means the analytic overlay
    tracks the numerics everywhere.
    """
    spec = result.spec
    names = [ax.name for ax in spec.axes]
    if "delta_c" not in names:
        raise InvalidArgumentError("overlay check needs a delta_c axis")
    k = names.index("delta_c")
    step = spec.axes[k].spacing
    index = np.arange(len(result.rows)).reshape(spec.shape)
    if len(names) == 1:
        lines = [(math.nan, index)]
    else:
        other = spec.axes[1 - k]
        lines = [
            (v, index[:, j] if k == 0 else index[j, :]) for j, v in enumerate(other.values())
        ]
    g2 = result.column("g2_0")
    bad = []
    for label, idx in lines:
        first = result.rows[idx[0]]
        p = spec.base.replace(u0=first.u0, omega=first.omega)
        res = np.array(spectrum.dressed_splittings(1, p).as_tuple())
        for i in local_minima(g2[idx]):
            dc = result.rows[idx[i]].delta_c
            if np.abs(res - dc).min() > max_steps * step:
                bad.append((float(label), float(dc)))
    return bad
