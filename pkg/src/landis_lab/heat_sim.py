"""Semidiscrete heat equation u' = Delta u + V u on a truncated box.

Integrators, closed-form Bessel solutions, and audits of the energy
estimate, the Caccioppoli inequality and the continuum Gaussian limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .besselkit import log_bessel_i, log_bessel_i_orders
from .lattice import (LatticeBox, LatticeField, LogLatticeField, annulus_mask, diff_ops,
                      field_to_csv, laplacian_array, trapezoid_weights)
from .logscalar import LogScalar


class IntegrationError(RuntimeError):
    """Raised when a trajectory violates the a-priori norm bound."""


def default_t_grid(n: int = 129) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


@dataclass
class HeatProblem:
    """Initial value problem on ``box`` over [0, 1].

    ``potential`` is None (V = 0), an array over the box (static V), or a
    callable t -> array.  ``v_sup`` is the declared bound on |V|.
    """

    box: LatticeBox
    initial: LatticeField
    potential: None | np.ndarray | Callable[[float], np.ndarray] = None
    v_sup: float = 0.0
    t_grid: np.ndarray = field(default_factory=default_t_grid)

    def __post_init__(self):
        if self.initial.box != self.box:
            raise ValueError("initial data lives on a different box")
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must increase strictly from 0 to 1")
        self.t_grid = t
        if self.v_sup < 0:
            raise ValueError("v_sup must be nonnegative")
        if isinstance(self.potential, np.ndarray):
            self.potential = np.broadcast_to(np.asarray(self.potential, float), self.box.shape).copy()
        actual = max(float(np.abs(self.potential_at(ti)).max()) for ti in t)
        if actual > self.v_sup * (1 + 1e-12):
            raise ValueError(f"declared v_sup={self.v_sup} below actual sup {actual}")

    @property
    def static(self) -> bool:
        return not callable(self.potential)

    def potential_at(self, t: float) -> np.ndarray:
        if self.potential is None:
            return np.zeros(self.box.shape)
        if callable(self.potential):
            return np.broadcast_to(np.asarray(self.potential(t), float), self.box.shape)
        return self.potential

    def with_initial(self, initial: LatticeField) -> "HeatProblem":
        return HeatProblem(self.box, initial, self.potential, self.v_sup, self.t_grid)


@dataclass
class Trajectory:
    problem: HeatProblem
    snapshots: list
    stats: dict
    dirichlet_integral: np.ndarray | None = None
    """Cumulative int_0^t h^d sum |D_- u|^2 integrated alongside u (rk4 only)."""

    def __post_init__(self):
        if len(self.snapshots) != len(self.problem.t_grid):
            raise ValueError("one snapshot per t_grid entry required")
        if self.dirichlet_integral is not None and len(self.dirichlet_integral) != len(self.snapshots):
            raise ValueError("dirichlet_integral must match the snapshot count")

    @property
    def times(self) -> np.ndarray:
        return self.problem.t_grid

    def export(self, directory) -> None:
        """CSV per snapshot plus a JSON manifest."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        names = []
        for i, snap in enumerate(self.snapshots):
            name = f"snapshot_{i:04d}.csv"
            field_to_csv(snap, out / name)
            names.append(name)
        box = self.problem.box
        manifest = {"schema_version": 1, "d": box.d, "h": box.h, "extent": box.extent,
                    "t_grid": [float(t) for t in self.times], "snapshots": names,
                    "stats": self.stats}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def rk4_step_cap(box: LatticeBox, v_sup: float) -> float:
    """Largest admissible rk4 step: 0.1 h^2 / (2d + ||V|| h^2)."""
    h2 = box.h ** 2
    return 0.1 * h2 / (2 * box.d + v_sup * h2)


def _generator(box: LatticeBox, v: np.ndarray) -> sp.csr_matrix:
    n = 2 * box.extent + 1
    one = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / box.h ** 2
    eye = sp.identity(n)
    lap = None
    for k in range(box.d):
        mats = [eye] * box.d
        mats[k] = one
        term = mats[0]
        for m in mats[1:]:
            term = sp.kron(term, m)
        lap = term if lap is None else lap + term
    return (lap + sp.diags(v.ravel())).tocsr()


def solve(problem: HeatProblem, method: str = "rk4", dt_max: float = 1e-3) -> Trajectory:
    """Integrate the box ODE system and sample it on ``problem.t_grid``."""
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    box, t = problem.box, problem.t_grid
    u = problem.initial.values.astype(float).copy()
    norm0 = float(np.sum(u * u))
    snaps = [LatticeField(box, u)]
    steps = 0

    def guard(ti, vec):
        bound = math.exp(2.0 * ti * problem.v_sup) * norm0
        val = float(np.sum(vec * vec))
        if not math.isfinite(val) or val > 1.01 * bound + 1e-300:
            raise IntegrationError(
                f"norm^2 {val:.6e} exceeds e^(2t||V||)||u0||^2 = {bound:.6e} at t={ti:.6g}")

    if method == "rk4":
        cap = min(dt_max, rk4_step_cap(box, problem.v_sup))
        h = box.h
        static = problem.static
        v_static = problem.potential_at(0.0) if static else None

        def rhs(vec, tt):
            vv = v_static if static else problem.potential_at(tt)
            return laplacian_array(vec, h) + vv * vec

        def dform(vec):
            return _dirichlet_array(vec, h)

        dt_used = cap
        acc = 0.0
        integral = [0.0]
        for i in range(len(t) - 1):
            span = t[i + 1] - t[i]
            n = max(1, math.ceil(span / cap - 1e-12))
            dt = span / n
            dt_used = min(dt_used, dt)
            tt = t[i]
            for _ in range(n):
                k1 = rhs(u, tt)
                k2 = rhs(u + 0.5 * dt * k1, tt + 0.5 * dt)
                k3 = rhs(u + 0.5 * dt * k2, tt + 0.5 * dt)
                u4 = u + dt * k3
                k4 = rhs(u4, tt + dt)
                # the Dirichlet form rides along as an extra ODE component y' = D(u)
                acc += (dt / 6.0) * (dform(u) + 2.0 * dform(u + 0.5 * dt * k1)
                                     + 2.0 * dform(u + 0.5 * dt * k2) + dform(u4))
                u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                tt += dt
            steps += n
            guard(t[i + 1], u)
            snaps.append(LatticeField(box, u))
            integral.append(acc)
        stats = {"method": "rk4", "steps": steps, "dt": dt_used, "dt_cap": rk4_step_cap(box, problem.v_sup)}
        return Trajectory(problem, snaps, stats, np.array(integral) * box.h ** box.d)
    elif method == "exponential":
        if not problem.static:
            raise ValueError("the exponential method needs a time-independent potential")
        A = _generator(box, problem.potential_at(0.0))
        vec = u.ravel()
        for i in range(len(t) - 1):
            vec = expm_multiply((t[i + 1] - t[i]) * A, vec)
            steps += 1
            guard(t[i + 1], vec)
            snaps.append(LatticeField(box, vec.reshape(box.shape)))
        stats = {"method": "exponential", "steps": steps, "dt": float(np.max(np.diff(t)))}
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(problem, snaps, stats)


def self_convergence(problem: HeatProblem, method: str = "rk4", dt_max: float = 1e-3) -> float:
    """Relative sup-norm change of the final snapshot when dt_max is halved."""
    a = solve(problem, method, dt_max).snapshots[-1].values
    cap = min(dt_max, rk4_step_cap(problem.box, problem.v_sup))
    b = solve(problem, method, cap / 2.0).snapshots[-1].values
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def _product_log(box: LatticeBox, per_axis: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of per-axis log arrays (indexed by j_k + N) broadcast over the box."""
    out = np.zeros(box.shape)
    for k, arr in enumerate(per_axis):
        shape = [1] * box.d
        shape[k] = arr.size
        out = out + arr.reshape(shape)
    return out


def random_bounded_problem(box: LatticeBox, rng: np.random.Generator, v_max: float = 3.0,
                           half_width: int | None = None, time_dependent: bool = False,
                           t_grid: Sequence[float] | None = None) -> HeatProblem:
    """Random initial data and a random bounded potential.

    The initial datum is Uniform(-1, 1) on the centred sub-box of half-width
    ``half_width`` sites (default extent // 2).  The potential bound v_sup is
    drawn from Uniform(0, v_max) and V from Uniform(-v_sup, v_sup); with
    ``time_dependent`` the potential is multiplied by cos(3t).
    """
    if not v_max >= 0:
        raise ValueError("v_max must be nonnegative")
    hw = box.extent // 2 if half_width is None else int(half_width)
    if not 0 <= hw < box.extent:
        raise ValueError("half_width must leave the boundary layer clear")
    inside = np.ones(box.shape, dtype=bool)
    for j in box.indices():
        inside &= np.abs(j) <= hw
    psi = np.where(inside, rng.uniform(-1.0, 1.0, box.shape), 0.0)
    v_sup = float(rng.uniform(0.0, v_max)) if v_max > 0 else 0.0
    V = rng.uniform(-v_sup, v_sup, box.shape) if v_sup > 0 else np.zeros(box.shape)
    potential = (lambda t: V * math.cos(3.0 * t)) if time_dependent else V
    grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    return HeatProblem(box, LatticeField(box, psi), potential, v_sup, grid)


def free_kernel_log(box: LatticeBox, t: float, source: Sequence[int] | None = None) -> LogLatticeField:
    """log of prod_k e^{-2t/h^2} I_{j_k - s_k}(2t/h^2)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    source = tuple(source) if source is not None else (0,) * box.d
    if len(source) != box.d:
        raise ValueError("source has wrong dimension")
    x = 2.0 * t / box.h ** 2
    j = np.arange(-box.extent, box.extent + 1)
    axes = []
    for s in source:
        n = np.abs(j - int(s))
        logi = log_bessel_i_orders(int(n.max()), x)
        axes.append(logi[n] - x)
    logs = _product_log(box, axes)
    return LogLatticeField(box, np.where(np.isfinite(logs), 1.0, 0.0), logs)


def free_kernel_solution(box: LatticeBox, t: float, source: Sequence[int] | None = None) -> LatticeField:
    """Fundamental solution started from delta at ``source``, linear scale."""
    logs = free_kernel_log(box, t, source).logmags
    with np.errstate(under="ignore"):
        return LatticeField(box, np.exp(logs))


def example_solution_axis(n: np.ndarray, h: float, t: float) -> np.ndarray:
    """log of e^{-2t/h^2} I_n((1+2t)/h^2) / I_0(1/h^2) for integer n."""
    n = np.abs(np.asarray(n, dtype=int))
    x = (1.0 + 2.0 * t) / h ** 2
    logi = log_bessel_i_orders(int(n.max()), x)
    return -2.0 * t / h ** 2 + logi[n] - log_bessel_i(0, 1.0 / h ** 2).logmag


def example_solution(box: LatticeBox, t: float) -> LogLatticeField:
    """Explicit positive solution e^{-2t/h^2} I_j(2t/h^2 + 1/h^2)/I_0(1/h^2), product over axes."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    j = np.arange(-box.extent, box.extent + 1)
    ax = example_solution_axis(j, box.h, t)
    logs = _product_log(box, [ax] * box.d)
    return LogLatticeField(box, np.ones(box.shape), logs)


@dataclass
class FieldSeries:
    """Closed-form snapshots on a time grid (no integrator involved)."""

    times: np.ndarray
    snapshots: list
    v_sup: float = 0.0


def example_series(box: LatticeBox, t_grid: Sequence[float] | None = None) -> FieldSeries:
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    return FieldSeries(t, [example_solution(box, float(ti)) for ti in t])


def free_kernel_series(box: LatticeBox, t_grid: Sequence[float] | None = None) -> FieldSeries:
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    return FieldSeries(t, [free_kernel_log(box, float(ti)) for ti in t])


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

@dataclass
class MarginReport:
    name: str
    min_slack: float
    argmin: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "min_slack": self.min_slack, "argmin": self.argmin,
                "passed": self.passed, **self.details}


def _dirichlet_array(v: np.ndarray, h: float) -> float:
    """sum_j sum_k |D_{-,k} v_j|^2 with zero extension (no h^d factor)."""
    total = 0.0
    for k in range(v.ndim):
        pad = [(0, 0)] * v.ndim
        pad[k] = (1, 1)
        total += float(np.sum(np.diff(np.pad(v, pad), axis=k) ** 2))
    return total / h ** 2


def _dirichlet_sum(u: LatticeField) -> float:
    """h^d sum_j sum_k |D_{-,k} u_j|^2."""
    hd = u.box.h ** u.box.d
    return hd * sum(float(np.sum(diff_ops(u, k, "backward").values ** 2)) for k in range(u.box.d))


def trapezoid_dirichlet(traj: Trajectory) -> np.ndarray:
    """Cumulative Dirichlet integral from the snapshots alone (trapezoid on t_grid)."""
    t = traj.times
    dir_ = np.array([_dirichlet_sum(s) for s in traj.snapshots])
    return np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (dir_[1:] + dir_[:-1]))))


def audit_energy(traj: Trajectory, tolerance: float = 1e-6, quadrature: str = "auto") -> MarginReport:
    """||u(t)||^2 + 2 int_0^t sum |D_- u|^2 <= e^{2t||V||} ||u(0)||^2 at every sample.

    ``quadrature='integrator'`` uses the integral carried by the rk4 stages,
    ``'trapezoid'`` integrates the snapshots on t_grid; ``'auto'`` prefers the
    former when present.  The discrepancy between the two is reported.
    """
    box = traj.problem.box
    hd = box.h ** box.d
    t = traj.times
    norms = np.array([hd * float(np.sum(s.values ** 2)) for s in traj.snapshots])
    trap = trapezoid_dirichlet(traj)
    if quadrature == "auto":
        quadrature = "integrator" if traj.dirichlet_integral is not None else "trapezoid"
    if quadrature == "integrator":
        if traj.dirichlet_integral is None:
            raise ValueError("trajectory carries no integrator-side Dirichlet integral")
        cumulative = traj.dirichlet_integral
    elif quadrature == "trapezoid":
        cumulative = trap
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    gap = float(np.max(np.abs(trap - cumulative)) / max(norms[0], 1e-300))
    lhs = norms + 2.0 * cumulative
    rhs = np.exp(2.0 * t * traj.problem.v_sup) * norms[0]
    if norms[0] == 0.0:
        slack = np.where(lhs == 0.0, 0.0, -np.inf)
    else:
        slack = (rhs - lhs) / rhs
    i = int(np.argmin(slack))
    return MarginReport("energy", float(slack[i]), float(t[i]), bool(slack[i] >= -tolerance),
                        {"samples": int(t.size), "quadrature": quadrature,
                         "trapezoid_gap": gap})


@dataclass
class CaccioppoliReport:
    R: float
    gradient_term: float
    bulk_term: float
    initial_term: float
    C2: float
    finite: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def audit_caccioppoli(traj: Trajectory, R: float) -> CaccioppoliReport:
    """Smallest C2 (with C1 = 1) making the ring Caccioppoli inequality hold.

    gradient term: sum_k int_0^1 ||D_{+,k} u||^2 over R-1 < |hj| < R;
    bulk term: int_0^1 ||u||^2 over R-2 < |hj| < R+1; initial term: ||u(0)||^2 there.
    """
    box = traj.problem.box
    if not R + 1 < box.extent * box.h:
        raise ValueError("annulus R+1 must fit inside the box")
    hd = box.h ** box.d
    inner_ring = annulus_mask(box, R - 1.0, R)
    outer_ring = annulus_mask(box, R - 2.0, R + 1.0)
    w = trapezoid_weights(traj.times)
    grad = np.array([hd * sum(float(np.sum(diff_ops(s, k, "forward").values[inner_ring] ** 2))
                              for k in range(box.d)) for s in traj.snapshots])
    bulk = np.array([hd * float(np.sum(s.values[outer_ring] ** 2)) for s in traj.snapshots])
    G, B = float(w @ grad), float(w @ bulk)
    I0 = float(bulk[0])
    if B > 0:
        C2 = max(0.0, (G - I0) / B)
    else:
        C2 = 0.0 if G <= I0 else math.inf
    return CaccioppoliReport(R, G, B, I0, C2, math.isfinite(C2))


@dataclass
class GaussianRow:
    h: float
    discrete: float
    limit: float
    error: float


def gaussian_limit(x: float, t: float, h_list: Sequence[float]) -> list[GaussianRow]:
    """|(1/h) e^{-X} I_{1/h}(X) - x e^{-x^2/4t}/sqrt(4 pi t)| with X = 2t/(xh)^2."""
    if not x > 0 or not t > 0:
        raise ValueError("x and t must be positive")
    limit = x / math.sqrt(4.0 * math.pi * t) * math.exp(-x * x / (4.0 * t))
    rows = []
    for h in h_list:
        n = round(1.0 / h)
        if n < 1 or abs(n * h - 1.0) > 1e-12:
            raise ValueError(f"1/h must be an integer, got h={h}")
        X = 2.0 * t / (x * h) ** 2
        val = math.exp(-math.log(h) - X + log_bessel_i(n, X).logmag)
        rows.append(GaussianRow(float(h), val, limit, abs(val - limit)))
    return rows


def gaussian_limit_passes(rows: Sequence[GaussianRow], final_tol: float = 1e-3) -> bool:
    errs = [r.error for r in rows]
    return all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] < final_tol


def total_mass(f: LatticeField) -> float:
    """Plain site sum (no h^d), the conserved quantity for V = 0."""
    return float(math.fsum(f.values.ravel()))


def log_total_mass(f: LogLatticeField) -> LogScalar:
    from .logscalar import signed_logsumexp
    return signed_logsumexp(f.signs.ravel(), f.logmags.ravel())
