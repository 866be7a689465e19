"""Bessel weights, weighted energies and the S/A commutator machinery.

A weight ``W_j = prod_k w(j_k)^p`` enters energies as ``H = h^d sum W_j u_j^2``.
The operator weight ``omega = W^{1/2}`` conjugates the heat flow
(``f = omega u``), which splits the generator into a symmetric part S and an
antisymmetric part A.  Only ratios of neighbouring weights are ever formed,
so nothing overflows even when K_j(gamma/h^2) itself is far out of range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .besselkit import k_ratio_orders, log_bessel_k, log_bessel_k_orders
from .lattice import LatticeBox, LatticeField, LogLatticeField, _shift
from .logscalar import LogScalar, signed_logsumexp

KINDS = ("close_to_continuum", "purely_discrete", "delta_interp")
NORMALIZATIONS = ("same", "initial", "none")


@dataclass(frozen=True)
class WeightSpec:
    """Which Bessel weight to use.

    ``close_to_continuum``: w(m) = K_m(x), x = gamma/h^2 (+ 2t/h^2 when
    ``time_dependent``), squared in energies.
    ``purely_discrete``: w(m) = K_{m mu}(2/(e h^2)), first power in energies.
    ``delta_interp``: w(m) = K_m(gamma/h^2)^delta, squared in energies.

    ``normalize`` divides by the m = 0 value: at the same argument
    (``same``), at t = 0 (``initial``) or not at all (``none``).
    """

    kind: str
    h: float
    gamma: float | None = None
    mu: float | None = None
    delta: float = 1.0
    time_dependent: bool = False
    normalize: str = "same"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.normalize not in NORMALIZATIONS:
            raise ValueError(f"normalize must be one of {NORMALIZATIONS}")
        if self.kind == "purely_discrete":
            if self.mu is None or not self.mu > 0:
                raise ValueError("purely_discrete weights need mu > 0")
            if self.time_dependent:
                raise ValueError("purely_discrete weights are static")
        else:
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("gamma must be positive")
        if self.kind == "delta_interp":
            if not 0.0 < self.delta <= 1.0:
                raise ValueError("delta must lie in (0, 1]")
            if self.time_dependent:
                raise ValueError("delta_interp weights are static")
        elif self.delta != 1.0:
            raise ValueError("delta only applies to delta_interp weights")

    @property
    def power(self) -> int:
        return 1 if self.kind == "purely_discrete" else 2

    def argument(self, t: float = 0.0) -> float:
        if self.kind == "purely_discrete":
            return 2.0 / (math.e * self.h ** 2)
        if self.time_dependent:
            return (self.gamma + 2.0 * t) / self.h ** 2
        return self.gamma / self.h ** 2

    def replace(self, **kw) -> "WeightSpec":
        d = dict(self.__dict__)
        d.update(kw)
        return WeightSpec(**d)


@lru_cache(maxsize=256)
def _raw_log_axis(kind: str, x: float, mu: float | None, nmax: int) -> np.ndarray:
    """log K_{m}(x) (or log K_{m mu}(x)) for m = 0..nmax.

    Integer orders are assembled as log K_0 plus cumulative log-ratios, so
    differences between entries keep full relative precision even when
    log K_0 is of size 10^6.
    """
    if kind == "purely_discrete":
        out = np.array([log_bessel_k(m * mu, x).logmag for m in range(nmax + 1)])
    else:
        out = log_bessel_k_orders(0, x)[0] + _log_k_increments(nmax, x)
    out.setflags(write=False)
    return out


def _log_k_increments(nmax: int, x: float) -> np.ndarray:
    """log K_m(x) - log K_0(x) for m = 0..nmax, summed from ratios."""
    inc = np.zeros(nmax + 1)
    if nmax > 0:
        inc[1:] = np.cumsum(np.log(k_ratio_orders(nmax - 1, x)))
    return inc


def _log_k_steps(x: float, mmin: int, mmax: int) -> dict:
    """D_m = log K_{m+1}(x) - log K_m(x) for integer m in [mmin, mmax]."""
    top = max(abs(mmin), abs(mmax)) + 1
    lr = np.log(k_ratio_orders(top, x))
    return {m: (lr[m] if m >= 0 else -lr[-m - 1]) for m in range(mmin, mmax + 1)}


def log_weight_axis(spec: WeightSpec, nmax: int, t: float = 0.0) -> np.ndarray:
    """log w(m) for m = 0..nmax (a single coordinate), including normalization."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = spec.argument(t)
    raw = _raw_log_axis(spec.kind, x, spec.mu, int(nmax))
    scale = spec.delta if spec.kind == "delta_interp" else 1.0
    out = scale * raw
    if spec.normalize == "same":
        out = out - out[0]
    elif spec.normalize == "initial":
        x0 = spec.argument(0.0)
        out = out - scale * _raw_log_axis(spec.kind, x0, spec.mu, 0)[0]
    return out


def weight_at(spec: WeightSpec, j: Sequence[int] | int, t: float = 0.0) -> LogScalar:
    """prod_k w(j_k) as a LogScalar."""
    js = [int(j)] if np.isscalar(j) else [int(v) for v in j]
    nmax = max(abs(v) for v in js)
    ax = log_weight_axis(spec, nmax, t)
    return LogScalar(1, float(sum(ax[abs(v)] for v in js)))


def log_weight_field(spec: WeightSpec, box: LatticeBox, t: float = 0.0) -> np.ndarray:
    """log W_j over the box, W = prod_k w(j_k)^p."""
    _check_box(spec, box)
    ax = log_weight_axis(spec, box.extent, t)
    m = np.abs(np.arange(-box.extent, box.extent + 1))
    per = spec.power * ax[m]
    out = np.zeros(box.shape)
    for k in range(box.d):
        shape = [1] * box.d
        shape[k] = per.size
        out = out + per.reshape(shape)
    return out


def _check_box(spec: WeightSpec, box: LatticeBox) -> None:
    if not math.isclose(spec.h, box.h, rel_tol=1e-12):
        raise ValueError("weight and field use different meshes")


def _log_omega_axis(spec: WeightSpec, extent: int, t: float) -> np.ndarray:
    """log of the one-coordinate operator weight over m = -extent..extent."""
    ax = log_weight_axis(spec, extent, t)
    m = np.abs(np.arange(-extent, extent + 1))
    return 0.5 * spec.power * ax[m]


def _dt_log_omega_axis(spec: WeightSpec, extent: int, t: float) -> np.ndarray:
    """d/dt log omega along one coordinate (zero for static weights)."""
    if not spec.time_dependent:
        return np.zeros(2 * extent + 1)
    x = spec.argument(t)
    raw = _raw_log_axis(spec.kind, x, spec.mu, extent + 1)
    m = np.abs(np.arange(-extent, extent + 1))
    # K_m'/K_m = -(K_{m+1} + K_{m-1}) / (2 K_m), with K_{-1} = K_1
    up = np.exp(raw[m + 1] - raw[m])
    down = np.exp(raw[np.abs(m - 1)] - raw[m])
    dlog = -(up + down) / 2.0 * (2.0 / spec.h ** 2)
    if spec.normalize == "same":
        dlog = dlog + np.exp(raw[1] - raw[0]) * (2.0 / spec.h ** 2)
    return dlog


def _axis_view(arr1d: np.ndarray, d: int, k: int) -> np.ndarray:
    shape = [1] * d
    shape[k] = arr1d.size
    return arr1d.reshape(shape)


def axis_ops(f: LatticeField, spec: WeightSpec, k: int, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """(M_k f, N_k f) with M_k f = omega Delta_k(f/omega), N_k f = omega^{-1} Delta_k(omega f).

    Zero extension outside the box.  M_k is the transpose of N_k.
    """
    box = f.box
    _check_box(spec, box)
    lw = _axis_view(_log_omega_axis(spec, box.extent, t), box.d, k)
    lw_b = np.broadcast_to(lw, box.shape)
    v = f.values
    h2 = box.h ** 2
    fp, fm = _shift(v, k, +1), _shift(v, k, -1)
    lp, lm = _shift(lw_b, k, +1), _shift(lw_b, k, -1)
    # ratios only where the neighbour lies in the box; elsewhere f is zero anyway
    with np.errstate(over="ignore", invalid="ignore"):
        rp = np.where(fp != 0, np.exp(lw_b - lp), 0.0)
        rm = np.where(fm != 0, np.exp(lw_b - lm), 0.0)
        M = (rp * fp - 2.0 * v + rm * fm) / h2
        rp2 = np.where(fp != 0, np.exp(lp - lw_b), 0.0)
        rm2 = np.where(fm != 0, np.exp(lm - lw_b), 0.0)
        N = (rp2 * fp - 2.0 * v + rm2 * fm) / h2
    return M, N


def sa_apply(f: LatticeField, spec: WeightSpec, t: float = 0.0) -> tuple[LatticeField, LatticeField]:
    """(Sf, Af) for the conjugated heat generator.

    Sf = (d_t omega/omega) f + (Mf + Nf)/2,  Af = (Mf - Nf)/2.
    """
    box = f.box
    S = np.zeros(box.shape)
    A = np.zeros(box.shape)
    dlog = np.zeros(box.shape)
    for k in range(box.d):
        M, N = axis_ops(f, spec, k, t)
        S += 0.5 * (M + N)
        A += 0.5 * (M - N)
        if spec.time_dependent:
            dlog = dlog + _axis_view(_dt_log_omega_axis(spec, box.extent, t), box.d, k)
    S = S + dlog * f.values
    return LatticeField(box, S), LatticeField(box, A)


def _ip(a: np.ndarray, b: np.ndarray, box: LatticeBox) -> float:
    return box.h ** box.d * float(np.sum(a * b))


def commutator_direct(f: LatticeField, spec: WeightSpec) -> float:
    """<S(Af) - A(Sf), f> by literally applying the operators."""
    if spec.time_dependent:
        raise ValueError("commutator_form needs a static weight")
    Sf, Af = sa_apply(f, spec)
    SAf, _ = sa_apply(Af, spec)
    _, ASf = sa_apply(Sf, spec)
    return _ip(SAf.values - ASf.values, f.values, f.box)


def lambda_delta(j: int, x: float, delta: float) -> float:
    """The eight-term Lambda_delta expression, grouped into sinh pairs.

    Each pair a - 1/a is written as 2 sinh(log a), which keeps the tiny
    positive value of Lambda_1 at large x free of cancellation.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    j = int(j)
    D = _log_k_steps(float(x), j - 2, j + 1)
    a = 2.0 * D[j]
    b = -2.0 * D[j - 1]
    c = D[j] - D[j + 1]
    e = D[j - 2] - D[j - 1]
    return 2.0 * (math.sinh(delta * a) + math.sinh(delta * b) + math.sinh(delta * c) + math.sinh(delta * e))


def lambda_lower_bound(x: float) -> float:
    return -2.0 * (1.0 + 1.0 / x + 1.0 / (4.0 * x ** 3))


def commutator_closed_form(f: LatticeField, spec: WeightSpec) -> float:
    """(1/2) sum_k Lambda_k: a Turan-positive difference-square sum plus Lambda_delta f^2.

    Exact for f vanishing on the two outermost layers of the box.
    """
    if spec.kind != "delta_interp":
        raise ValueError("the closed form is written for delta_interp weights")
    box = f.box
    _check_box(spec, box)
    x = spec.argument()
    N = box.extent
    m = np.arange(-N, N + 1)
    D = _log_k_steps(x, -N - 1, N)
    dl = spec.delta
    # omega_{m-1} omega_{m+1} / omega_m^2 - inverse, = 2 sinh(delta (L_{m-1} + L_{m+1} - 2 L_m))
    c1 = 2.0 * np.sinh(dl * np.array([D[mm] - D[mm - 1] for mm in m]))
    lam = np.array([lambda_delta(int(mm), x, dl) for mm in range(0, N + 1)])[np.abs(m)]
    v = f.values
    total = 0.0
    for k in range(box.d):
        diff = _shift(v, k, +1) - _shift(v, k, -1)
        total += float(np.sum(_axis_view(c1, box.d, k) * diff ** 2 + _axis_view(lam, box.d, k) * v ** 2))
    return 0.5 * box.h ** box.d * total / box.h ** 4


def commutator_form(f: LatticeField, spec: WeightSpec) -> dict:
    """Direct and closed-form values of <[S,A]f, f> and their relative gap."""
    direct = commutator_direct(f, spec)
    closed = commutator_closed_form(f, spec) if spec.kind == "delta_interp" else None
    out = {"direct": direct, "closed_form": closed}
    if closed is not None:
        scale = max(abs(direct), abs(closed), commutator_scale(f))
        out["relative_gap"] = abs(direct - closed) / scale
    return out


def commutator_scale(f: LatticeField) -> float:
    """Natural size (4d/h^4)||f||^2 of each term in the commutator form."""
    box = f.box
    return 4.0 * box.d / box.h ** 4 * _ip(f.values, f.values, box)


def commutator_lower_bound(spec: WeightSpec, f: LatticeField) -> float:
    """-(4d/h^4)(1 + h^2/gamma + h^6/(4 gamma^3)) ||f||^2."""
    h, g = spec.h, spec.gamma
    return -commutator_scale(f) * (1.0 + h ** 2 / g + h ** 6 / (4.0 * g ** 3))


def cross_commutator(f: LatticeField, spec: WeightSpec, k: int, m: int) -> float:
    """<[S_k, A_m] f, f> = 2 <S_k f, A_m f> for a static tensor weight."""
    if spec.time_dependent:
        raise ValueError("static weight required")
    Mk, Nk = axis_ops(f, spec, k)
    Mm, Nm = axis_ops(f, spec, m)
    return 2.0 * _ip(0.5 * (Mk + Nk), 0.5 * (Mm - Nm), f.box)


def random_interior_field(box: LatticeBox, rng: np.random.Generator, margin: int = 2,
                          half_width: int | None = None) -> LatticeField:
    """Uniform(-1, 1) values on a centred sub-box that keeps ``margin`` layers clear."""
    hw = box.extent - margin if half_width is None else min(half_width, box.extent - margin)
    if hw < 0:
        raise ValueError("box too small for the requested margin")
    v = np.zeros(box.shape)
    sl = tuple(slice(box.extent - hw, box.extent + hw + 1) for _ in range(box.d))
    v[sl] = rng.uniform(-1.0, 1.0, size=v[sl].shape)
    return LatticeField(box, v)


# ---------------------------------------------------------------------------
# weighted energies
# ---------------------------------------------------------------------------

@dataclass
class WeightedEnergy:
    times: np.ndarray
    values: list
    spec: WeightSpec

    def __post_init__(self):
        if any(v.sign < 0 for v in self.values):
            raise ValueError("weighted energies are nonnegative")

    def logs(self) -> np.ndarray:
        return np.array([v.logmag for v in self.values])

    def to_dict(self) -> dict:
        return {"times": [float(t) for t in self.times],
                "log_values": [None if v.sign == 0 else v.logmag for v in self.values]}


def _field_logs(f) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(f, LogLatticeField):
        return f.signs, f.logmags
    v = f.values
    with np.errstate(divide="ignore"):
        return np.sign(v), np.log(np.abs(v))


def energy_at(f, spec: WeightSpec, t: float) -> LogScalar:
    """h^d sum_j W_j(t) u_j^2 in log domain."""
    box = f.box
    lw = log_weight_field(spec, box, t)
    s, l = _field_logs(f)
    live = s != 0
    return signed_logsumexp(live.astype(float), np.where(live, lw + 2.0 * l, -np.inf)) * (box.h ** box.d)


def weighted_energy(traj, spec: WeightSpec) -> WeightedEnergy:
    """H(t) on every sample of a trajectory (anything with ``times`` and ``snapshots``)."""
    times = np.asarray(traj.times, dtype=float)
    vals = [energy_at(f, spec, float(t)) for t, f in zip(times, traj.snapshots)]
    return WeightedEnergy(times, vals, spec)


@dataclass
class MonotoneReport:
    worst_violation: float
    argmax: float
    passed: bool
    v_sup: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def audit_monotone_energy(traj, spec: WeightSpec, v_sup: float | None = None,
                          tolerance: float = 1e-8) -> MonotoneReport:
    """e^{-2t||V||} H(t) must not increase along the trajectory.

    The normalization is switched to the time-independent one so that the
    audited quantity differs from the raw sum only by a constant factor.
    """
    if spec.kind != "close_to_continuum" or not spec.time_dependent:
        raise ValueError("monotonicity is audited for time-dependent close-to-continuum weights")
    if v_sup is None:
        v_sup = float(getattr(getattr(traj, "problem", None), "v_sup", 0.0))
    spec = spec.replace(normalize="initial")
    en = weighted_energy(traj, spec)
    g = en.logs() - 2.0 * en.times * v_sup
    worst, where = 0.0, float(en.times[0])
    for i in range(len(g) - 1):
        if not np.isfinite(g[i]):
            if np.isfinite(g[i + 1]):
                return MonotoneReport(math.inf, float(en.times[i + 1]), False, v_sup)
            continue
        inc = math.expm1(g[i + 1] - g[i]) if np.isfinite(g[i + 1]) else -1.0
        if inc > worst:
            worst, where = inc, float(en.times[i + 1])
    return MonotoneReport(worst, where, worst <= tolerance, v_sup)


@dataclass
class LogConvexityReport:
    N_hat: float
    argmax: float
    degenerate: bool
    v_sup_effective: float
    excess: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"N_hat": self.N_hat, "argmax": self.argmax, "degenerate": self.degenerate,
                "v_sup_effective": self.v_sup_effective}


def audit_logconvexity(energy: WeightedEnergy, v_sup: float) -> LogConvexityReport:
    """Smallest N >= 0 with H(t) <= e^{N max(V,1)} H(0)^{1-t} H(1)^t on the grid."""
    t = np.asarray(energy.times, dtype=float)
    if t.size < 3 or t[0] != 0.0 or t[-1] != 1.0:
        raise ValueError("need at least three samples including t = 0 and t = 1")
    vp = max(float(v_sup), 1.0)
    logs = energy.logs()
    pos = np.array([v.sign > 0 for v in energy.values])
    if not pos.any():
        return LogConvexityReport(0.0, float(t[0]), False, vp)
    if not pos[0] or not pos[-1]:
        return LogConvexityReport(math.inf, float(t[np.argmax(pos)]), True, vp)
    excess = logs - ((1.0 - t) * logs[0] + t * logs[-1])
    excess = np.where(pos, excess, -np.inf)
    i = int(np.argmax(excess))
    return LogConvexityReport(max(0.0, float(excess[i]) / vp), float(t[i]), False, vp,
                              [float(e) for e in excess])


def truncated_weight_errors(gamma: float, h: float, t: float, R_index: int,
                            m_max: int | None = None) -> np.ndarray:
    """h^2 E^R_m for the weight K_m frozen at K_R beyond |m| = R, m = 0..m_max.

    E^R_m = 4 psi'/psi + psi_{m-1}/psi_m + psi_m/psi_{m+1} + psi_m/psi_{m-1} + psi_{m+1}/psi_m
    (times 1/h^2), with psi' the derivative in the Bessel argument.
    """
    if R_index < 1:
        raise ValueError("R_index must be at least 1")
    m_max = R_index + 3 if m_max is None else m_max
    x = (gamma + 2.0 * t) / h ** 2
    L = log_bessel_k_orders(max(m_max, R_index) + 2, x)

    def lpsi(m):
        return L[min(abs(m), R_index)]

    def dlog(m):
        a = min(abs(m), R_index)
        return -0.5 * (math.exp(L[a + 1] - L[a]) + math.exp(L[abs(a - 1)] - L[a]))

    out = []
    for m in range(0, m_max + 1):
        e = (4.0 * dlog(m) + math.exp(lpsi(m - 1) - lpsi(m)) + math.exp(lpsi(m) - lpsi(m + 1))
             + math.exp(lpsi(m) - lpsi(m - 1)) + math.exp(lpsi(m + 1) - lpsi(m)))
        out.append(e)
    return np.array(out)
