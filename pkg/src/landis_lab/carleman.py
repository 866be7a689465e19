"""Parabolic Carleman machinery, regime upper bounds and lower-bound fits.

The Carleman weight is ``phi_j(t) = alpha |hj/R + varphi(t) e_1|^2``.
Conjugating the backward heat operator by it,

    e^{phi} (d_t - Delta)(e^{-phi} f) = d_t f + S~ f + A f,   S~ = S - d_t phi,

where S (symmetric) and A (antisymmetric) have cosh/sinh coefficients along
each axis.  With a_k^{+/-} = (2 alpha h / R)(x_k +/- h/(2R)) and
x = hj/R + varphi e_1,

    S f = h^-2 sum_k [2 f - cosh(a_k^+) f_{+k} - cosh(a_k^-) f_{-k}]
    A f = h^-2 sum_k [sinh(a_k^+) f_{+k} - sinh(a_k^-) f_{-k}].

Time-dependent fields are sampled on a uniform grid of [0, 1] and every time
derivative is a fourth-order centred difference on that grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .besselkit import log_bessel_k, log_bessel_k_orders
from .heat_sim import example_solution_axis
from .lattice import LatticeBox, LatticeField, _shift, trapezoid_weights
from .logscalar import LogScalar, signed_logsumexp

NEG_INF = float("-inf")


class SupportError(ValueError):
    """A field is nonzero outside the region the Carleman estimate allows."""


class ConditionViolation(ValueError):
    """Carleman parameters fail the conditions required by an operation."""


class HypothesisViolation(ValueError):
    """Inputs fall outside the hypotheses of an upper-bound statement."""


# ---------------------------------------------------------------------------
# smooth building blocks
# ---------------------------------------------------------------------------

def smooth_step(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity step s (0 for x <= 0, 1 for x >= 1) with s' and s''.

    s = psi(x) / (psi(x) + psi(1 - x)) with psi(x) = exp(-1/x).  Written as
    s = expit(-q), q = 1/x - 1/(1-x), which is stable near both ends.
    """
    x = np.asarray(x, dtype=float)
    s = np.where(x >= 1.0, 1.0, 0.0)
    s1 = np.zeros_like(x)
    s2 = np.zeros_like(x)
    m = (x > 0.0) & (x < 1.0)
    if np.any(m):
        xm = x[m]
        q = 1.0 / xm - 1.0 / (1.0 - xm)
        sv = expit(-q)
        p = 1.0 / xm ** 2 + 1.0 / (1.0 - xm) ** 2
        dp = -2.0 / xm ** 3 + 2.0 / (1.0 - xm) ** 3
        g = sv * (1.0 - sv)
        d1 = g * p
        s[m] = sv
        s1[m] = d1
        s2[m] = (1.0 - 2.0 * sv) * d1 * p + g * dp
    return s, s1, s2


@dataclass(frozen=True)
class PhiProfile:
    """Time profile: 0 on [0, rise_start] and [fall_end, 1], ``height`` on the plateau.

    The defaults give the profile used throughout: 0 <= varphi <= 3, zero on
    [0, 1/4] and [3/4, 1], equal to 3 on [3/8, 5/8].
    """

    height: float = 3.0
    rise_start: float = 0.25
    rise_end: float = 0.375
    fall_start: float = 0.625
    fall_end: float = 0.75

    def __post_init__(self):
        if not (0.0 <= self.rise_start < self.rise_end <= self.fall_start
                < self.fall_end <= 1.0):
            raise ValueError("profile breakpoints must be ordered inside [0, 1]")
        if not self.height > 0:
            raise ValueError("profile height must be positive")

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        wr = self.rise_end - self.rise_start
        wf = self.fall_end - self.fall_start
        a, a1, a2 = smooth_step((t - self.rise_start) / wr)
        b, b1, b2 = smooth_step((self.fall_end - t) / wf)
        return a, a1 / wr, a2 / wr ** 2, b, -b1 / wf, b2 / wf ** 2

    def value(self, t):
        a, _, _, b, _, _ = self._parts(t)
        return self.height * a * b

    def d1(self, t):
        a, a1, _, b, b1, _ = self._parts(t)
        return self.height * (a1 * b + a * b1)

    def d2(self, t):
        a, a1, a2, b, b1, b2 = self._parts(t)
        return self.height * (a2 * b + 2.0 * a1 * b1 + a * b2)

    def sup_norms(self) -> tuple[float, float]:
        """(||varphi'||_inf, ||varphi''||_inf), computed once per profile."""
        return _profile_norms(self)

    def check(self, times: Sequence[float]) -> None:
        t = np.asarray(times, dtype=float)
        v = self.value(t)
        if np.any(v < -1e-15) or np.any(v > self.height + 1e-12):
            raise ValueError("profile leaves [0, height]")
        off = (t <= self.rise_start) | (t >= self.fall_end)
        on = (t >= self.rise_end) & (t <= self.fall_start)
        if np.any(v[off] != 0.0) or np.any(np.abs(v[on] - self.height) > 1e-12):
            raise ValueError("profile violates its support/plateau constraints")


@lru_cache(maxsize=16)
def _profile_norms(profile: PhiProfile) -> tuple[float, float]:
    out = []
    for fn in (profile.d1, profile.d2):
        grid = np.linspace(0.0, 1.0, 200001)
        vals = np.abs(fn(grid))
        i = int(np.argmax(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(lambda s: -abs(float(fn(s))), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        out.append(max(float(vals[i]), -float(res.fun)))
    return out[0], out[1]


def theta_cutoff(r, R: float) -> np.ndarray:
    """theta_R: 1 for |x| <= R - 1, 0 for |x| >= R, smooth in between."""
    return smooth_step(R - np.asarray(r, dtype=float))[0]


def eta_cutoff(r) -> np.ndarray:
    """eta: 0 for |x| <= 1, 1 for |x| >= 2, smooth in between."""
    return smooth_step(np.asarray(r, dtype=float) - 1.0)[0]


# ---------------------------------------------------------------------------
# configuration and regimes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CarlemanConfig:
    """Parameters of the parabolic Carleman estimate.

    ``epsilon`` is the slack in the large-parameter clause.  When omitted it
    is set to 2 sqrt(d) h / R, twice the smallest admissible value, so the
    requirement h/R < epsilon/sqrt(d) holds by construction.
    """

    alpha: float
    R: float
    h: float
    d: int = 1
    epsilon: float | None = None
    M: float = 100.0
    profile: PhiProfile = field(default_factory=PhiProfile)

    def __post_init__(self):
        if not self.R >= 1.0:
            raise ValueError("R must be at least 1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 2.0 * math.sqrt(self.d) * self.h / self.R)
        if not 0.0 < self.epsilon < 2.0:
            raise ValueError("epsilon must lie in (0, 2)")
        self.profile.check(np.linspace(0.0, 1.0, 1025))

    def replace(self, **kw) -> "CarlemanConfig":
        data = dict(alpha=self.alpha, R=self.R, h=self.h, d=self.d,
                    epsilon=self.epsilon, M=self.M, profile=self.profile)
        if "R" in kw or "h" in kw or "d" in kw:
            data["epsilon"] = None
        data.update(kw)
        return CarlemanConfig(**data)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "R": self.R, "h": self.h, "d": self.d,
                "epsilon": self.epsilon, "M": self.M}


@dataclass(frozen=True)
class RegimeParams:
    R: float
    h: float
    Rh: float
    regime: str
    beta: float | None = None

    @classmethod
    def from_pair(cls, R: float, h: float) -> "RegimeParams":
        if not (R > 0 and h > 0):
            raise ValueError("R and h must be positive")
        beta = None
        if h < 1.0 and R > 1.0:
            beta = -math.log(R) / math.log(h)
        regime = "close_to_continuum" if R * h <= 1.0 else "purely_discrete"
        return cls(R, h, R * h, regime, beta)


def carleman_box(config: CarlemanConfig, pad: int = 3) -> LatticeBox:
    """Smallest symmetric box containing {|hj/R + varphi e_1| <= 4} for every t."""
    reach = (4.0 + config.profile.height) * config.R / config.h
    return LatticeBox(config.d, config.h, int(math.ceil(reach)) + pad)


def _coords(config: CarlemanConfig, box: LatticeBox, t: float) -> list[np.ndarray]:
    """x_k = h j_k / R (+ varphi(t) on the first axis), broadcastable per axis."""
    if box.h != config.h or box.d != config.d:
        raise ValueError("box does not match the Carleman configuration")
    xs = [config.h * j / config.R for j in box.indices()]
    xs[0] = xs[0] + float(config.profile.value(t))
    return xs


def carleman_weight(config: CarlemanConfig, j: Sequence[int] | int, t: float) -> float:
    """phi_j(t) = alpha |hj/R + varphi(t) e_1|^2."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    j = np.atleast_1d(np.asarray(j, dtype=float))
    if j.size != config.d:
        raise ValueError("lattice point has the wrong dimension")
    x = config.h * j / config.R
    x[0] += float(config.profile.value(t))
    return float(config.alpha * np.dot(x, x))


def support_mask(config: CarlemanConfig, box: LatticeBox, t: float) -> np.ndarray:
    xs = _coords(config, box, t)
    r = np.sqrt(np.broadcast_to(sum(x ** 2 for x in xs), box.shape))
    return (r >= 1.0) & (r <= 4.0)


def _check_support(config, box, values, t) -> None:
    bad = (values != 0.0) & ~support_mask(config, box, t)
    if np.any(bad):
        raise SupportError(f"field is nonzero at {int(bad.sum())} sites outside "
                           f"1 <= |hj/R + varphi e_1| <= 4 (t={t})")


# ---------------------------------------------------------------------------
# conjugated operators
# ---------------------------------------------------------------------------

def _axis_view(a: np.ndarray, d: int, k: int) -> np.ndarray:
    shape = [1] * d
    shape[k] = a.size
    return a.reshape(shape)


def _coefficients(config: CarlemanConfig, box: LatticeBox, t: float):
    """Per axis: (a_k^+, a_k^-) as broadcastable arrays."""
    c = 2.0 * config.alpha * config.h / config.R
    half = config.h / (2.0 * config.R)
    out = []
    for x in _coords(config, box, t):
        ap, am = c * (x + half), c * (x - half)
        if max(np.abs(ap).max(), np.abs(am).max()) > 700.0:
            raise OverflowError("cosh/sinh coefficients overflow; alpha too large for this box")
        out.append((ap, am))
    return out


def _apply_sa(config, box, v: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(S v, A v) for one time slice."""
    h2 = config.h ** 2
    S = np.zeros_like(v)
    A = np.zeros_like(v)
    for k, (ap, am) in enumerate(_coefficients(config, box, t)):
        fp, fm = _shift(v, k, 1), _shift(v, k, -1)
        S += 2.0 * v - np.cosh(ap) * fp - np.cosh(am) * fm
        A += np.sinh(ap) * fp - np.sinh(am) * fm
    return S / h2, A / h2


def phi_t(config: CarlemanConfig, box: LatticeBox, t: float) -> np.ndarray:
    """d_t phi_j = 2 alpha x_1 varphi'(t)."""
    x1 = _coords(config, box, t)[0]
    return np.broadcast_to(2.0 * config.alpha * x1 * float(config.profile.d1(t)), box.shape)


def phi_tt(config: CarlemanConfig, box: LatticeBox, t: float) -> np.ndarray:
    """d_t^2 phi_j = 2 alpha (varphi'^2 + x_1 varphi'')."""
    x1 = _coords(config, box, t)[0]
    p1, p2 = float(config.profile.d1(t)), float(config.profile.d2(t))
    return np.broadcast_to(2.0 * config.alpha * (p1 ** 2 + x1 * p2), box.shape)


def conjugated_ops(config: CarlemanConfig, f: LatticeField, t: float,
                   check_support: bool = True):
    """(S~ f, A f, d_t phi * f) at time t.

    A is returned without its d_t part; the full antisymmetric operator is
    A~ = A + d_t.
    """
    box = f.box
    if check_support:
        _check_support(config, box, f.values, t)
    S, A = _apply_sa(config, box, f.values, t)
    pt = phi_t(config, box, t) * f.values
    return (LatticeField(box, S - pt), LatticeField(box, A), LatticeField(box, pt))


def conjugated_heat(config: CarlemanConfig, f: LatticeField, f_t: LatticeField,
                    t: float) -> LatticeField:
    """d_t f + S~ f + A f, i.e. e^{phi}(d_t - Delta)(e^{-phi} f) given d_t f."""
    St, A, _ = conjugated_ops(config, f, t)
    return LatticeField(f.box, f_t.values + St.values + A.values)


# ---------------------------------------------------------------------------
# time-dependent fields
# ---------------------------------------------------------------------------

@dataclass
class TimeField:
    """f(t) on a fixed box, given as a callable returning the value array."""

    box: LatticeBox
    fn: Callable[[float], np.ndarray]

    def __call__(self, t: float) -> np.ndarray:
        v = np.asarray(self.fn(t), dtype=float)
        if v.shape != self.box.shape:
            raise ValueError("time field returned an array of the wrong shape")
        return v

    def scaled(self, c: float) -> "TimeField":
        fn = self.fn
        return TimeField(self.box, lambda t: c * np.asarray(fn(t), dtype=float))


def time_grid(n: int) -> np.ndarray:
    if n < 8:
        raise ValueError("time grid needs at least 8 intervals")
    return np.linspace(0.0, 1.0, n + 1)


def random_in_support_field(config: CarlemanConfig, rng: np.random.Generator,
                            box: LatticeBox | None = None, kind: str = "shell",
                            window: tuple[float, float] = (0.05, 0.95)) -> TimeField:
    """Random field supported in {1 <= |hj/R + varphi e_1| <= 4} x window.

    ``shell``: c_j(t) b(|x_j(t)|) tau(t), b a bump on (1, 4).
    ``cutoff``: c_j(t) theta_R(|hj|) eta(x_j(t)) tau(t), the localisation used
    to pass from a solution to a compactly supported function.
    Here c_j(t) = a_j + b_j cos(2 pi t) + e_j sin(2 pi t) with standard
    normal coefficients; the sine term breaks the t -> 1 - t symmetry of the
    profile, which would otherwise cancel the odd-in-varphi' pieces.
    """
    box = box or carleman_box(config)
    if kind not in ("shell", "cutoff"):
        raise ValueError("kind must be 'shell' or 'cutoff'")
    t0, t1 = window
    if not 0.0 <= t0 < t1 <= 1.0:
        raise ValueError("window must be an ordered subinterval of [0, 1]")
    ramp = min(0.1, (t1 - t0) / 3.0)
    a = rng.standard_normal(box.shape)
    b = rng.standard_normal(box.shape)
    e = rng.standard_normal(box.shape)
    rad = box.radius()

    def fn(t: float) -> np.ndarray:
        tau = float(smooth_step((t - t0) / ramp)[0] * smooth_step((t1 - t) / ramp)[0])
        if tau == 0.0:
            return np.zeros(box.shape)
        xs = _coords(config, box, min(max(t, 0.0), 1.0))
        r = np.sqrt(np.broadcast_to(sum(x ** 2 for x in xs), box.shape))
        if kind == "shell":
            env = smooth_step(r - 1.0)[0] * smooth_step(4.0 - r)[0]
        else:
            env = theta_cutoff(rad, config.R) * eta_cutoff(r)
        phase = 2.0 * math.pi * t
        return tau * env * (a + b * math.cos(phase) + e * math.sin(phase))

    return TimeField(box, fn)


# 4th-order centred first derivative
_FD = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_BLOCK = 128


class _Grid:
    """A time field sampled on a uniform grid of [0, 1] with two ghost nodes per side.

    Arrays carry time as the leading axis.  Node i (0..n) sits at row i + 2.
    """

    def __init__(self, config: CarlemanConfig, f: TimeField, n: int, check_support: bool):
        if n < 8:
            raise ValueError("time grid needs at least 8 intervals")
        self.config, self.box, self.n = config, f.box, n
        self.dt = 1.0 / n
        self.times = np.arange(-2, n + 3) * self.dt
        self.clipped = np.clip(self.times, 0.0, 1.0)
        self.V = np.stack([f(t) for t in self.times])
        if check_support:
            for t, v in zip(self.times, self.V):
                if 0.0 <= t <= 1.0:
                    _check_support(config, self.box, v, t)
        self.weights = trapezoid_weights(self.times[2:-2])
        self.hd = config.h ** config.d

    def rows(self, lo: int, hi: int) -> slice:
        return slice(lo, hi)

    def coefs(self, rows: slice):
        """Per axis (cosh a+, cosh a-, sinh a+, sinh a-, x_k) for the given rows."""
        cfg, box = self.config, self.box
        t = self.clipped[rows]
        d = cfg.d
        c = 2.0 * cfg.alpha * cfg.h / cfg.R
        half = cfg.h / (2.0 * cfg.R)
        out = []
        for k, j in enumerate(box.indices()):
            x = (cfg.h * j / cfg.R)[None, ...]
            if k == 0:
                x = x + np.asarray(cfg.profile.value(t)).reshape((-1,) + (1,) * d)
            ap, am = c * (x + half), c * (x - half)
            if max(np.abs(ap).max(), np.abs(am).max()) > 700.0:
                raise OverflowError("cosh/sinh coefficients overflow; alpha too large for this box")
            out.append((np.cosh(ap), np.cosh(am), np.sinh(ap), np.sinh(am), x))
        return out

    def apply(self, coefs, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h2 = self.config.h ** 2
        S = np.zeros_like(v)
        A = np.zeros_like(v)
        for k, (chp, chm, shp, shm, _) in enumerate(coefs):
            fp, fm = _shift(v, k + 1, 1), _shift(v, k + 1, -1)
            S += 2.0 * v - chp * fp - chm * fm
            A += shp * fp - shm * fm
        return S / h2, A / h2

    def phi_t(self, rows: slice, coefs) -> np.ndarray:
        x1 = coefs[0][4]
        p1 = np.asarray(self.config.profile.d1(self.clipped[rows])).reshape((-1,) + (1,) * self.config.d)
        return 2.0 * self.config.alpha * x1 * p1

    def derivative(self, full: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """d/dt at nodes lo..hi-1 of a quantity stored on all rows."""
        out = np.zeros_like(full[lo + 2:hi + 2])
        for c, off in zip(_FD, range(-2, 3)):
            if c:
                out += c * full[lo + 2 + off:hi + 2 + off]
        return out / self.dt

    def ip(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Spatial inner products, one per time row."""
        return self.hd * np.sum((a * b).reshape(a.shape[0], -1), axis=1)

    def blocks(self):
        for lo in range(0, self.n + 1, _BLOCK):
            yield lo, min(lo + _BLOCK, self.n + 1)

    def full_map(self, fn) -> list[np.ndarray]:
        """Apply fn(rows, coefs, V_rows) over all rows in blocks and stack the results."""
        parts = None
        total = self.V.shape[0]
        for lo in range(0, total, _BLOCK):
            rows = slice(lo, min(lo + _BLOCK, total))
            res = fn(rows, self.coefs(rows), self.V[rows])
            if parts is None:
                parts = [[] for _ in res]
            for p, r in zip(parts, res):
                p.append(r)
        return [np.concatenate(p) for p in parts]


@dataclass
class CommutatorPieces:
    I: float
    II: float
    III: float
    IV: float
    total: float
    direct: float
    operator_pieces: dict
    n_time: int
    refinement: dict | None = None

    @property
    def scale(self) -> float:
        return abs(self.I) + abs(self.II) + abs(self.III) + abs(self.IV)

    def ratio_iii_ii(self) -> float:
        return self.III / self.II if self.II != 0 else float("nan")

    def agreement(self) -> float:
        """|direct - total| relative to the size of the pieces."""
        s = self.scale
        return abs(self.direct - self.total) / s if s > 0 else 0.0

    def to_dict(self) -> dict:
        return {"I": self.I, "II": self.II, "III": self.III, "IV": self.IV,
                "total": self.total, "direct": self.direct,
                "ratio_III_II": self.ratio_iii_ii(), "agreement": self.agreement(),
                "operator_pieces": self.operator_pieces, "n_time": self.n_time,
                "refinement": self.refinement}


def _pieces_on_grid(config: CarlemanConfig, f: TimeField, n: int,
                    check_support: bool) -> CommutatorPieces:
    g = _Grid(config, f, n, check_support)
    h, d = config.h, config.d
    c = 2.0 * config.alpha * h / config.R
    sinh_c = math.sinh(2.0 * config.alpha * h ** 2 / config.R ** 2)

    def pre(rows, co, v):
        S, _ = g.apply(co, v)
        pt = g.phi_t(rows, co)
        return S, S - pt * v, pt * v

    Sf, Stf, ptf = g.full_map(pre)
    acc = {k: 0.0 for k in ("I", "II", "II_reduced", "III", "III_op", "IV", "IV_op",
                            "I_op", "direct")}
    for lo, hi in g.blocks():
        rows = slice(lo + 2, hi + 2)
        co = g.coefs(rows)
        v = g.V[rows]
        w = g.weights[lo:hi]
        tc = g.clipped[rows]
        S, A = g.apply(co, v)
        pt = g.phi_t(rows, co)
        St = S - pt * v
        f_t = g.derivative(g.V, lo, hi)
        # direct: <S~(A f + f_t) - A(S~ f) - d_t(S~ f), f>
        S_of, _ = g.apply(co, A + f_t)
        _, A_St = g.apply(co, St)
        direct = g.ip(S_of - pt * (A + f_t) - A_St - g.derivative(Stf, lo, hi), v)
        # reduced pieces
        p1 = np.asarray(config.profile.d1(tc)).reshape((-1,) + (1,) * d)
        p2 = np.asarray(config.profile.d2(tc)).reshape((-1,) + (1,) * d)
        x1 = co[0][4]
        I = g.ip(2.0 * config.alpha * (p1 ** 2 + x1 * p2) * v, v)
        cross = g.ip(co[0][2] * _shift(v, 1, 1), v)
        # <[-d_t phi, A] f, f> and -<S_t f, f> both reduce to this single sum
        red = 2.0 * c * p1.reshape(-1) * cross / h ** 2
        quad = np.zeros(v.shape[0])
        for k, (_, _, _, _, x) in enumerate(co):
            diff = (_shift(v, k + 1, 1) - _shift(v, k + 1, -1)) / 2.0
            quad += g.ip(np.sinh(c * x) ** 2 * v, v) + g.ip(diff, diff)
        IV = 4.0 * sinh_c / h ** 4 * quad
        # operator forms
        I_op = g.ip(-pt * f_t + g.derivative(ptf, lo, hi), v)
        II_op = g.ip(-pt * A + g.apply(co, pt * v)[1], v)
        III_op = g.ip(g.apply(co, f_t)[0] - g.derivative(Sf, lo, hi), v)
        S_A, _ = g.apply(co, A)
        _, A_S = g.apply(co, S)
        IV_op = g.ip(S_A - A_S, v)
        for key, val in (("I", I), ("II", II_op), ("II_reduced", red), ("III", red),
                         ("IV", IV), ("direct", direct), ("I_op", I_op),
                         ("III_op", III_op), ("IV_op", IV_op)):
            acc[key] += float(np.dot(w, val))
    total = acc["I"] + acc["II"] + acc["III"] + acc["IV"]
    ops = {"I": acc["I_op"], "II": acc["II"], "II_reduced": acc["II_reduced"],
           "III": acc["III_op"], "IV": acc["IV_op"]}
    return CommutatorPieces(acc["I"], acc["II"], acc["III"], acc["IV"], total,
                            acc["direct"], ops, n)


def commutator_pieces(config: CarlemanConfig, f: TimeField, n_time: int = 800,
                      refine: bool = True, check_support: bool = True,
                      resolution_tol: float = 1e-4) -> CommutatorPieces:
    """<[S~, A~] f, f> over [0, 1] split into (I)..(IV), plus the direct value.

    (I) = int sum d_t^2 phi f^2, (II) = <[-d_t phi, A] f, f>,
    (III) = -<S_t f, f> in reduced form, (IV) = the sinh^2 plus
    difference-quadratic form of <[S, A] f, f>.  ``direct`` applies the
    operators literally with finite-difference time derivatives.

    With ``refine`` the grid is halved once and the refined values are
    returned; ``refinement`` records the relative change of every piece,
    ``resolved`` (false when any change exceeds ``resolution_tol``) and the
    Richardson-extrapolated direct value with its agreement.
    """
    coarse = _pieces_on_grid(config, f, n_time, check_support)
    if not refine:
        return coarse
    fine = _pieces_on_grid(config, f, 2 * n_time, check_support)
    scale = max(fine.scale, 1e-300)
    changes = {k: abs(getattr(fine, k) - getattr(coarse, k)) / scale
               for k in ("I", "II", "III", "IV", "direct")}
    # the finite-difference error is O(dt^4); one Richardson step removes it
    extrapolated = fine.direct + (fine.direct - coarse.direct) / 15.0
    fine.refinement = {"coarse_n": n_time, "relative_change": changes,
                       "resolved": max(changes.values()) <= resolution_tol,
                       "coarse_agreement": coarse.agreement(),
                       "direct_extrapolated": extrapolated,
                       "agreement_extrapolated": abs(extrapolated - fine.total) / scale}
    return fine


# ---------------------------------------------------------------------------
# parameter conditions
# ---------------------------------------------------------------------------

def _log_sinh(x: float) -> float:
    if x <= 0:
        return NEG_INF
    if x > 20.0:
        return x - math.log(2.0) + math.log1p(-math.exp(-2.0 * x))
    return math.log(math.sinh(x))


def log_carleman_strength(alpha: float, R: float, h: float, d: int) -> float:
    """log of h^-4 sinh(2 alpha h^2/R^2) sinh^2(2 alpha h/(R sqrt d))."""
    return (-4.0 * math.log(h) + _log_sinh(2.0 * alpha * h ** 2 / R ** 2)
            + 2.0 * _log_sinh(2.0 * alpha * h / (R * math.sqrt(d))))


def peque_constant(config: CarlemanConfig) -> float:
    """c in alpha >= c R^2: 27 d ||varphi'|| / 16 (small-argument absorption)."""
    return 27.0 * config.d * config.profile.sup_norms()[0] / 16.0


def c_phi(config: CarlemanConfig) -> float:
    """c_phi = 1/(12 ||varphi''||), from absorbing the d_t^2 phi term."""
    return 1.0 / (12.0 * config.profile.sup_norms()[1])


@dataclass
class ConditionReport:
    clause: str              # "small", "large" or "gap"
    ratio: float             # alpha h / R
    carlalpha: bool
    peque: bool
    grande: bool
    epsilon_ok: bool
    cond_ii_exact: bool
    c_phi: float
    c_peque: float
    margins: dict

    @property
    def valid(self) -> bool:
        if self.clause == "small":
            return self.carlalpha and self.peque
        if self.clause == "large":
            return self.carlalpha and self.grande and self.epsilon_ok
        return False

    @property
    def verdict(self) -> str:
        if self.clause == "gap":
            return "no claim"
        return "valid" if self.valid else "violated"

    def to_dict(self) -> dict:
        return {"clause": self.clause, "ratio": self.ratio, "carlalpha": self.carlalpha,
                "peque": self.peque, "grande": self.grande, "epsilon_ok": self.epsilon_ok,
                "cond_ii_exact": self.cond_ii_exact, "c_phi": self.c_phi,
                "c_peque": self.c_peque, "valid": self.valid, "verdict": self.verdict,
                "margins": self.margins}


def check_carleman_conditions(config: CarlemanConfig) -> ConditionReport:
    """Evaluate the parameter conditions of the Carleman estimate.

    * carlalpha: alpha <= c_phi h^-4 sinh(2 alpha h^2/R^2) sinh^2(2 alpha h/(R sqrt d))
    * peque (clause alpha h/R <= 1/10): alpha >= c R^2
    * grande (clause alpha h/R >= sqrt(d)/2): e^{(2-eps) alpha h/(R sqrt d)} / (Rh) >= 1,
      together with h/R < eps/sqrt(d)

    Margins are logarithmic (positive means satisfied).  The implicit
    constant in the large clause is taken to be 1.
    """
    a, R, h, d = config.alpha, config.R, config.h, config.d
    n1, n2 = config.profile.sup_norms()
    cp = c_phi(config)
    cpq = peque_constant(config)
    ratio = a * h / R
    if ratio <= 0.1:
        clause = "small"
    elif ratio >= math.sqrt(d) / 2.0:
        clause = "large"
    else:
        clause = "gap"
    log_x = log_carleman_strength(a, R, h, d) if a > 0 else NEG_INF
    if a == 0:
        m_alpha = 0.0
    else:
        m_alpha = math.log(cp) + log_x - math.log(a)
    m_peque = (math.log(a) - math.log(cpq * R ** 2)) if a > 0 else NEG_INF
    m_grande = (2.0 - config.epsilon) * ratio / math.sqrt(d) - math.log(R * h)
    m_eps = math.log(config.epsilon / math.sqrt(d)) - math.log(h / R)
    if a > 0:
        lhs = math.log(n1) - 2 * math.log(h) + math.log(ratio) + _log_sinh(9.0 * ratio)
        m_ii = math.log(2.0 / 3.0) + log_x - lhs
    else:
        m_ii = 0.0
    return ConditionReport(
        clause=clause, ratio=ratio, carlalpha=m_alpha >= 0.0, peque=m_peque >= 0.0,
        grande=m_grande >= 0.0, epsilon_ok=m_eps > 0.0, cond_ii_exact=m_ii >= 0.0,
        c_phi=cp, c_peque=cpq,
        margins={"carlalpha": m_alpha, "peque": m_peque, "grande": m_grande,
                 "epsilon": m_eps, "cond_ii_exact": m_ii})


# ---------------------------------------------------------------------------
# empirical Carleman constant
# ---------------------------------------------------------------------------

def carleman_sides(config: CarlemanConfig, f: TimeField, n_time: int = 400) -> tuple[float, float]:
    """(LHS, RHS) of the parabolic Carleman inequality for one field."""
    g = _Grid(config, f, n_time, check_support=True)
    h, d, R, a = config.h, config.d, config.R, config.alpha
    nf = grad = rhs = 0.0
    for lo, hi in g.blocks():
        rows = slice(lo + 2, hi + 2)
        co = g.coefs(rows)
        v = g.V[rows]
        w = g.weights[lo:hi]
        S, A = g.apply(co, v)
        res = g.derivative(g.V, lo, hi) + S - g.phi_t(rows, co) * v + A
        nf += float(np.dot(w, g.ip(v, v)))
        rhs += float(np.dot(w, g.ip(res, res)))
        for k in range(d):
            diff = (_shift(v, k + 1, 1) - _shift(v, k + 1, -1)) / 2.0
            grad += float(np.dot(w, g.ip(diff, diff)))
    root = math.sqrt(math.sinh(2.0 * a * h ** 2 / R ** 2))
    lhs = (root * math.sinh(2.0 * a * h / (R * math.sqrt(d))) * math.sqrt(nf)
           + 2.0 * root * math.sqrt(grad)) / h ** 2
    return lhs, math.sqrt(rhs)


@dataclass
class CarlemanAudit:
    C_hat: float
    ratios: list
    conditions: dict
    n_time: int
    seed: int

    def to_dict(self) -> dict:
        return {"C_hat": self.C_hat, "ratios": self.ratios, "conditions": self.conditions,
                "n_time": self.n_time, "seed": self.seed, "label": "empirical"}


def audit_carleman_inequality(config: CarlemanConfig, samples: int, seed: int,
                              n_time: int = 400, kind: str = "shell") -> CarlemanAudit:
    """C^ = max LHS/RHS over ``samples`` random unit-norm in-support fields."""
    rep = check_carleman_conditions(config)
    if not rep.valid:
        raise ConditionViolation(f"Carleman conditions not met: {rep.verdict} "
                                 f"(clause {rep.clause}, margins {rep.margins})")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    box = carleman_box(config)
    ratios = []
    for _ in range(samples):
        f = random_in_support_field(config, rng, box, kind=kind)
        lhs, rhs = carleman_sides(config, f, n_time)
        if rhs == 0.0:
            continue
        ratios.append(lhs / rhs)
    if not ratios:
        raise ValueError("every sampled field was zero")
    return CarlemanAudit(max(ratios), ratios, rep.to_dict(), n_time, seed)


def localized_lower_bound_log(config: CarlemanConfig) -> float:
    """log of h^-4 sinh(2 alpha h^2/R^2) sinh^2(2 alpha h/(R sqrt d)) e^{-14 alpha}."""
    return log_carleman_strength(config.alpha, config.R, config.h, config.d) - 14.0 * config.alpha


# ---------------------------------------------------------------------------
# upper bounds
# ---------------------------------------------------------------------------

@dataclass
class UpperBoundReport:
    kind: str
    predicted_exponent: float          # log of the predicted bound (constant 1)
    log_sup: float                     # direct sup over the outer shell R <= |hj| < R + h
    log_sup_annulus: float             # literal sup over R - 2 < |hj| < R + 1
    normalized: float                  # close-to-continuum: log_sup * gamma / R^2
    asymptotic: float | None = None    # discrete: log ratio from the large-order asymptotics
    relative_gap: float | None = None
    hypotheses: dict = field(default_factory=dict)

    @property
    def prediction(self) -> LogScalar:
        return LogScalar(1, self.predicted_exponent)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "predicted_exponent": self.predicted_exponent,
                "log_sup": self.log_sup, "log_sup_annulus": self.log_sup_annulus,
                "normalized": self.normalized, "asymptotic": self.asymptotic,
                "relative_gap": self.relative_gap, "hypotheses": self.hypotheses}


def _shell_sup(per_axis_log: np.ndarray, R: float, h: float, d: int,
               inner: float, outer: float, closed_inner: bool) -> float:
    """max over sites with inner (<=|<) |hj| < outer of sum_k g(|j_k|)."""
    jmax = per_axis_log.size - 1
    ax = np.arange(-jmax, jmax + 1)
    grids = np.meshgrid(*([ax] * d), indexing="ij", sparse=True)
    r = np.sqrt(sum((h * g) ** 2 for g in grids))
    lo = (r >= inner) if closed_inner else (r > inner)
    mask = lo & (r < outer)
    if not np.any(mask):
        raise ValueError("no lattice sites in the requested shell")
    total = sum(per_axis_log[np.abs(g)] for g in grids)
    return float(np.max(np.broadcast_to(total, mask.shape)[mask]))


def upper_bound_ctc(gamma: float, R: float, h: float, d: int = 1, M: float = 100.0,
                    require_fine_scale: bool = True) -> UpperBoundReport:
    """Close-to-continuum upper bound: prediction -d R^2/gamma and the weight-ratio sup.

    Hypotheses: Rh < gamma/2, gamma/h^2 >= M and (when ``require_fine_scale``)
    R/h >= M.  The ratio prod_k K_0^2(x)/K_{j_k}^2(x), x = gamma/h^2, decreases
    in |j_k|, so its sup over the full annulus sits at the inner edge; the
    outer shell R <= |hj| < R + h is where the decay at scale R is read off.
    """
    if not (gamma > 0 and R > 0 and h > 0):
        raise HypothesisViolation("gamma, R and h must be positive")
    hyp = {"Rh_lt_gamma_half": R * h < gamma / 2.0,
           "gamma_over_h2_ge_M": gamma / h ** 2 >= M,
           "R_over_h_ge_M": R / h >= M}
    if not hyp["Rh_lt_gamma_half"] or not hyp["gamma_over_h2_ge_M"]:
        raise HypothesisViolation(f"close-to-continuum hypotheses fail: {hyp}")
    if require_fine_scale and not hyp["R_over_h_ge_M"]:
        raise HypothesisViolation(f"R/h = {R / h} < M = {M}")
    x = gamma / h ** 2
    jmax = int(math.ceil((R + 1.0) / h)) + 1
    lk = log_bessel_k_orders(jmax, x)
    g = 2.0 * (lk[0] - lk)
    shell = _shell_sup(g, R, h, d, R, R + h, True)
    ann = _shell_sup(g, R, h, d, R - 2.0, R + 1.0, False)
    return UpperBoundReport("close_to_continuum", -d * R ** 2 / gamma, shell, ann,
                            shell * gamma / R ** 2, hypotheses=hyp)


def discrete_asymptotic_log_ratio(mu: float, R: float, h: float) -> float:
    """log K_0(x) - log K_{(R/h) mu}(x), x = 2/(e h^2), from the large-argument
    and large-order asymptotics:

        K_0(x) ~ sqrt(pi/(2x)) e^{-x},
        2 mu K_{j mu}(x) ~ sqrt(h/R) exp[(mu R/h) log(Rh) + (mu R/h) log mu].
    """
    x = 2.0 / (math.e * h ** 2)
    log_k0 = 0.5 * math.log(math.pi / (2.0 * x)) - x
    log_kj = (0.5 * math.log(h / R) + mu * R / h * (math.log(R * h) + math.log(mu))
              - math.log(2.0 * mu))
    return log_k0 - log_kj


def upper_bound_discrete(mu: float, R: float, h: float, d: int = 1,
                         h0: float = 0.1) -> UpperBoundReport:
    """Purely discrete upper bound with the mu-weight K_{j mu}(2/(e h^2)).

    Hypotheses: Rh >= 2/(e mu) and h < h0.  The predicted exponent is
    -mu((R/h) log(Rh) + (R/h) log mu), i.e. the bound with c_0 = 1.
    """
    if not (mu > 0 and R > 0 and h > 0):
        raise HypothesisViolation("mu, R and h must be positive")
    hyp = {"Rh_ge_2_over_e_mu": R * h >= 2.0 / (math.e * mu), "h_lt_h0": h < h0}
    if not all(hyp.values()):
        raise HypothesisViolation(f"purely discrete hypotheses fail: {hyp}")
    x = 2.0 / (math.e * h ** 2)
    jmax = int(math.ceil((R + 1.0) / h)) + 1
    lk0 = log_bessel_k(0, x).logmag
    if d == 1:
        # only the shell site and the inner annulus edge are needed
        j_shell = int(math.ceil(R / h - 1e-9))
        j_in = int(math.floor((R - 2.0) / h)) + 1
        shell = lk0 - log_bessel_k(j_shell * mu, x).logmag
        ann = 0.0 if j_in <= 0 else lk0 - log_bessel_k(j_in * mu, x).logmag
    else:
        g = np.array([lk0 - log_bessel_k(m * mu, x).logmag for m in range(jmax + 1)])
        shell = _shell_sup(g, R, h, d, R, R + h, True)
        ann = _shell_sup(g, R, h, d, R - 2.0, R + 1.0, False)
    pred = -mu * (R / h * math.log(R * h) + R / h * math.log(mu))
    asym = discrete_asymptotic_log_ratio(mu, R, h)
    gap = abs(shell - asym) / abs(shell) if shell != 0 else float("inf")
    return UpperBoundReport("purely_discrete", pred, shell, ann, float("nan"),
                            asymptotic=asym, relative_gap=gap, hypotheses=hyp)


# ---------------------------------------------------------------------------
# alpha selection
# ---------------------------------------------------------------------------

#: (R, h) pairs on which the close-to-continuum constant c is calibrated (Rh <= 1).
REFERENCE_CTC = ((10.0, 0.1), (20.0, 0.05), (10.0, 0.05), (20.0, 0.025), (40.0, 0.025))
#: (R, h) pairs on which the purely discrete constant c~ is calibrated (Rh > 1).
REFERENCE_DISCRETE = ((10.0, 0.3), (20.0, 0.25), (20.0, 0.5), (40.0, 0.5), (40.0, 1.0))
DYADIC = tuple(2.0 ** k for k in range(-4, 13))


def _alpha_formula(R: float, h: float, c: float, c_tilde: float) -> float:
    if R * h <= 1.0:
        return c * R ** 2
    return c_tilde * (R / h) * math.log(R * h)


def calibrate_alpha_constants(d: int = 1, reference_ctc=REFERENCE_CTC,
                              reference_discrete=REFERENCE_DISCRETE,
                              grid: Sequence[float] = DYADIC) -> tuple[float, float]:
    """Smallest dyadic c and c~ whose alpha passes the conditions on every reference pair."""
    def first(ref, build):
        for c in grid:
            if all(check_carleman_conditions(
                    CarlemanConfig(alpha=build(R, h, c), R=R, h=h, d=d)).valid
                   for R, h in ref):
                return c
        raise RuntimeError("no constant in the dyadic grid passes the reference set")
    c = first(reference_ctc, lambda R, h, c: c * R ** 2)
    ct = first(reference_discrete, lambda R, h, c: c * (R / h) * math.log(R * h))
    return c, ct


@lru_cache(maxsize=4)
def alpha_constants(d: int = 1) -> tuple[float, float]:
    """Default (c, c~) for ``alpha_select``; see ``calibrate_alpha_constants``."""
    return calibrate_alpha_constants(d)


def alpha_select(R: float, h: float, d: int = 1,
                 constants: tuple[float, float] | None = None) -> float:
    """alpha = c R^2 when Rh <= 1 and c~ (R/h) log(Rh) when Rh > 1."""
    if not R >= 1.0:
        raise ValueError("R must be at least 1")
    if not h > 0:
        raise ValueError("h must be positive")
    c, ct = constants if constants is not None else alpha_constants(d)
    return _alpha_formula(R, h, c, ct)


# ---------------------------------------------------------------------------
# lower bounds from the explicit example solution
# ---------------------------------------------------------------------------

def example_log_annulus_mass(R: float, h: float, n_times: int = 129) -> float:
    """log of h int_0^1 sum_{R-2<|hj|<R+1} (u_j(0)^2 + u_j(t)^2) dt for the explicit
    one-dimensional example solution, trapezoid rule in time."""
    times = np.linspace(0.0, 1.0, n_times)
    jmax = int(math.ceil((R + 1.0) / h)) + 1
    j = np.arange(-jmax, jmax + 1)
    sel = j[(np.abs(h * j) > R - 2.0) & (np.abs(h * j) < R + 1.0)]
    if sel.size == 0:
        raise ValueError("annulus contains no lattice sites")
    u0 = example_solution_axis(sel, h, 0.0)
    per = []
    for t in times:
        ut = example_solution_axis(sel, h, float(t))
        per.append(signed_logsumexp(np.ones(2 * sel.size),
                                    np.concatenate([2.0 * u0, 2.0 * ut])).logmag)
    total = signed_logsumexp(np.ones(len(per)), np.array(per), trapezoid_weights(times))
    return total.logmag + math.log(h)


def _r2(y: np.ndarray, pred: np.ndarray) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0


def _lstsq(X: np.ndarray, y: np.ndarray):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, _r2(y, X @ coef)


@dataclass
class LowerBoundFit:
    h: float
    ctc: dict | None
    discrete: dict | None
    points: list

    def to_dict(self) -> dict:
        return {"h": self.h, "close_to_continuum": self.ctc, "purely_discrete": self.discrete,
                "points": self.points}


def fit_lower_bound(R_values: Sequence[float], log_masses: Sequence[float | LogScalar],
                    h: float, min_points: int = 4, discrete_min_Rh: float = 3.0) -> LowerBoundFit:
    """Regression of log annulus mass in both regimes.

    Close-to-continuum (Rh <= 1): log m = a R^2 + b, plus the exponent p from
    -log m = A R^p + B R + C (profile least squares over p).
    Purely discrete (Rh >= ``discrete_min_Rh``): log m = s (R/h) log(Rh) + b (R/h) + c.
    """
    R = np.asarray(R_values, dtype=float)
    logs = []
    for m in log_masses:
        if isinstance(m, LogScalar):
            if m.sign <= 0:
                raise ValueError("mass must be positive (zero field has no fit)")
            logs.append(m.logmag)
        else:
            if not np.isfinite(m):
                raise ValueError("mass must be positive (zero field has no fit)")
            logs.append(float(m))
    L = np.asarray(logs)
    if R.shape != L.shape:
        raise ValueError("R values and masses differ in length")
    points = [{"R": float(r), "Rh": float(r * h), "log_mass": float(l)} for r, l in zip(R, L)]
    ctc = disc = None
    m1 = R * h <= 1.0
    if m1.sum() >= min_points:
        Rs, Ls = R[m1], L[m1]
        (a, b), r2 = _lstsq(np.vstack([Rs ** 2, np.ones_like(Rs)]).T, Ls)

        def sse(p):
            X = np.vstack([Rs ** p, Rs, np.ones_like(Rs)]).T
            coef, *_ = np.linalg.lstsq(X, -Ls, rcond=None)
            return float(np.sum((-Ls - X @ coef) ** 2))

        res = minimize_scalar(sse, bounds=(1.0, 3.0), method="bounded",
                              options={"xatol": 1e-6})
        p = float(res.x)
        Xp = np.vstack([Rs ** p, Rs, np.ones_like(Rs)]).T
        coef_p, r2p = _lstsq(Xp, -Ls)
        ctc = {"n": int(m1.sum()), "slope_R2": float(a), "intercept": float(b), "r2": r2,
               "exponent": p, "exponent_fit_r2": r2p, "c_lower": float(-a)}
    m2 = R * h >= discrete_min_Rh
    if m2.sum() >= min_points:
        Rs, Ls = R[m2], L[m2]
        X = Rs / h * np.log(Rs * h)
        coef, r2 = _lstsq(np.vstack([X, Rs / h, np.ones_like(Rs)]).T, Ls)
        coef1, r2_1 = _lstsq(np.vstack([X, np.ones_like(Rs)]).T, Ls)
        disc = {"n": int(m2.sum()), "slope": float(coef[0]), "nuisance_R_over_h": float(coef[1]),
                "intercept": float(coef[2]), "r2": r2, "plain_slope": float(coef1[0]),
                "plain_r2": r2_1}
    if ctc is None and disc is None:
        raise ValueError(f"insufficient in-regime points (need {min_points} in a regime)")
    return LowerBoundFit(h, ctc, disc, points)


def lower_bound_audit(R_grid: Sequence[float], h: float, d: int = 1,
                      n_times: int = 129, min_points: int = 4) -> LowerBoundFit:
    """Annulus masses of the explicit example solution over ``R_grid`` and their fits."""
    if d != 1:
        raise ValueError("the explicit example solution is one-dimensional")
    R_grid = [float(r) for r in R_grid]
    if not R_grid:
        raise ValueError("empty R grid")
    masses = [example_log_annulus_mass(R, h, n_times) for R in R_grid]
    return fit_lower_bound(R_grid, masses, h, min_points=min_points)


# ---------------------------------------------------------------------------
# contradiction logic
# ---------------------------------------------------------------------------

@dataclass
class GapVerdict:
    gamma: float
    gamma_star: float
    verdict: str
    crossing_R: float | None

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "gamma_star": self.gamma_star, "verdict": self.verdict,
                "crossing_R": self.crossing_R}


def landis_gap(gamma: float, c_lower: float, d: int = 1, log_prefactor_gap: float = 0.0,
               rel_tol: float = 1e-12) -> GapVerdict:
    """Compare the lower rate e^{-c_lower R^2} with the upper rate e^{-d R^2/gamma}.

    gamma* = d / c_lower.  For gamma < gamma* the upper bound eventually drops
    below the lower bound, which is the contradiction; ``crossing_R`` is where
    that happens given log(C_upper / C_lower) = ``log_prefactor_gap``.
    """
    if not c_lower > 0:
        raise ValueError("c_lower must be positive")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    gstar = d / c_lower
    if abs(gamma - gstar) <= rel_tol * gstar:
        return GapVerdict(gamma, gstar, "boundary", None)
    if gamma < gstar:
        rate = d / gamma - c_lower
        return GapVerdict(gamma, gstar, "contradiction",
                          math.sqrt(max(log_prefactor_gap, 0.0) / rate))
    return GapVerdict(gamma, gstar, "no contradiction", None)
