"""Stationary discrete Schrodinger equation  Delta_h u + V u = 0.

Contents:

* residual evaluation (linear fields and sign/log fields),
* the elliptic Carleman audit with the static weight alpha |hj/R + 3 e_1|^2,
* regime-dependent choice of alpha,
* the max-norm shell recursion M_N <= (4d - 1 + q_N) M_{N+1} and the decay
  thresholds that follow from it,
* the Bessel-J testbed u_n = J_n(t0), which solves the equation in d = 1,
  h = 1 with V(n) = 2(1 - n/t0).

Shell quantities are kept as natural logs throughout because the testbed
decays super-exponentially: log|J_200(2)| is about -860, far below the
smallest double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .besselkit import bessel_j_orders, jota_prediction
from .carleman import CarlemanConfig, SupportError, carleman_box, smooth_step
from .lattice import (LatticeBox, LatticeField, LogLatticeField, _shift, interior_mask,
                      laplacian_array)
from .logscalar import NEG_INF, LogScalar

CENTER_SHIFT = 3.0          # the static weight is centred at -3 e_1 in units of R
RESIDUAL_GATE = 1e-8        # relative to ||u||_inf


class ResidualTooLarge(ValueError):
    """Raised when a field offered as a solution does not solve the equation."""


class MetricError(ValueError):
    """Raised when a Euclidean quantity is requested from max-norm shell tooling."""


# ---------------------------------------------------------------------------
# problems and residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticProblem:
    """A field u with potential V on one box.

    ``u`` is a LatticeField or a LogLatticeField.  ``V_bound`` is the declared
    sup bound of V; it must dominate the actual values.
    """
    box: LatticeBox
    V: np.ndarray
    V_bound: float
    u: LatticeField | LogLatticeField
    label: str = ""

    def __post_init__(self):
        V = np.broadcast_to(np.asarray(self.V, dtype=float), self.box.shape).copy()
        V.setflags(write=False)
        object.__setattr__(self, "V", V)
        if self.u.box != self.box:
            raise ValueError("field and problem live on different boxes")
        if not np.all(np.isfinite(V)):
            raise ValueError("potential must be finite")
        actual = float(np.abs(V).max())
        if not self.V_bound >= actual * (1.0 - 1e-12):
            raise ValueError(f"declared bound {self.V_bound} is below sup|V| = {actual}")

    def log_field(self) -> LogLatticeField:
        if isinstance(self.u, LogLatticeField):
            return self.u
        return LogLatticeField.from_linear(self.u)

    def log_sup(self) -> float:
        lg = self.log_field().logmags
        return float(lg.max())


def _log_combine(terms: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Elementwise signed sum of sign * exp(log) terms; returns (sign, log)."""
    logs = np.stack([np.broadcast_to(lg, terms[0][1].shape) for _, lg in terms])
    signs = np.stack([np.broadcast_to(s, terms[0][1].shape) for s, _ in terms])
    m = logs.max(axis=0)
    finite = np.isfinite(m)
    safe = np.where(finite, m, 0.0)
    with np.errstate(invalid="ignore"):
        total = np.sum(np.where(signs != 0, signs * np.exp(logs - safe), 0.0), axis=0)
        mag = np.sum(np.where(signs != 0, np.exp(logs - safe), 0.0), axis=0)
    total = np.where(finite, total, 0.0)
    with np.errstate(divide="ignore"):
        out_log = np.where(total != 0.0, safe + np.log(np.abs(total)), NEG_INF)
        mag_log = np.where(mag != 0.0, safe + np.log(mag), NEG_INF)
    return np.sign(total), out_log, mag_log


@dataclass
class ResidualReport:
    """Interior residual of Delta_h u + V u.

    ``relative_to_sup``: max |residual| / ||u||_inf, the gate quantity.
    ``backward``: max over sites of |residual_j| / (sum of |terms at j|), which
    stays meaningful where u is astronomically small.
    """
    residual: LogLatticeField
    log_max: float
    relative_to_sup: float
    backward: float

    def to_dict(self) -> dict:
        return {"log_max": self.log_max, "relative_to_sup": self.relative_to_sup,
                "backward": self.backward}


def elliptic_residual(p: EllipticProblem) -> LatticeField:
    """Delta_h u + V u on interior sites (zero on the outermost layer)."""
    inner = interior_mask(p.box, 1)
    if isinstance(p.u, LogLatticeField):
        res, _ = residual_report(p).residual.to_linear(floor=-745.0)
        return res
    r = laplacian_array(p.u.values, p.box.h) + p.V * p.u.values
    return LatticeField(p.box, np.where(inner, r, 0.0))


def residual_report(p: EllipticProblem) -> ResidualReport:
    """Residual computed in the log domain, so it is valid for any dynamic range."""
    box, h = p.box, p.box.h
    lf = p.log_field()
    s, lg = lf.signs, lf.logmags
    log_h2 = 2.0 * math.log(h)
    terms = []
    for k in range(box.d):
        for step in (1, -1):
            terms.append((_shift(s, k, step), _shift(np.where(s != 0, lg, 0.0), k, step) - log_h2))
    with np.errstate(divide="ignore"):
        diag = -2.0 * box.d / h ** 2 + p.V
        terms.append((s * np.sign(diag), lg + np.log(np.abs(diag))))
    # _shift pads with zeros: turn padded entries into exact zeros
    terms = [(ts, np.where(ts != 0, tl, NEG_INF)) for ts, tl in terms]
    sign, log_res, log_mag = _log_combine(terms)
    inner = interior_mask(box, 1)
    sign = np.where(inner, sign, 0.0)
    log_res = np.where(inner, log_res, NEG_INF)
    field_ = LogLatticeField(box, sign, log_res)
    log_max = float(log_res.max())
    log_sup = p.log_sup()
    rel = 0.0 if log_max == NEG_INF else (math.inf if log_sup == NEG_INF
                                          else math.exp(log_max - log_sup))
    live = inner & np.isfinite(log_res) & np.isfinite(log_mag)
    backward = float(np.exp(log_res[live] - log_mag[live]).max()) if np.any(live) else 0.0
    return ResidualReport(field_, log_max, rel, backward)


# ---------------------------------------------------------------------------
# Bessel-J testbed
# ---------------------------------------------------------------------------

def bessel_potential(n: np.ndarray, t0: float) -> np.ndarray:
    """V(n) = 2(1 - n/t0).

    From J_{n-1} + J_{n+1} = (2n/t0) J_n the second difference of J_n(t0) is
    (2n/t0 - 2) J_n, so Delta_1 u + V u = 0 needs V = 2 - 2n/t0.
    """
    return 2.0 * (1.0 - np.asarray(n, dtype=float) / t0)


def bessel_testbed(n_max: int = 201, t0: float = 2.0) -> EllipticProblem:
    """u_n = J_n(t0) on n in [-n_max, n_max], d = 1, h = 1, sign/log storage.

    Negative orders follow from J_{-n} = (-1)^n J_n, and the three-term
    recurrence holds for every integer n, so the whole symmetric window is
    a solution.  V_bound is the window sup, 2(1 + n_max/t0).
    """
    if n_max < 4:
        raise ValueError("n_max must be at least 4")
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    box = LatticeBox(1, 1.0, int(n_max))
    signs, logs = bessel_j_orders(n_max, t0)
    signs, logs = signs[: n_max + 1], logs[: n_max + 1]
    k = np.arange(1, n_max + 1)
    neg_signs = (signs[1:] * np.where(k % 2 == 0, 1.0, -1.0))[::-1]
    all_signs = np.concatenate([neg_signs, signs])
    all_logs = np.concatenate([logs[1:][::-1], logs])
    n = np.arange(-n_max, n_max + 1)
    V = bessel_potential(n, t0)
    return EllipticProblem(box, V, float(np.abs(V).max()),
                           LogLatticeField(box, all_signs, all_logs),
                           label=f"J_n({t0:g})")


@dataclass
class JotaFit:
    a: float        # coefficient of N log N, expected -1
    b: float        # coefficient of N, expected 1 + log(t0/2)
    c: float
    r2: float
    N_range: tuple
    expected_b: float
    max_trend_gap: float    # max |log|J_N| - large-order trend| on the range

    @property
    def slope_error(self) -> float:
        return abs(self.a + 1.0)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "r2": self.r2,
                "N_range": list(self.N_range), "expected_b": self.expected_b,
                "slope_error": self.slope_error, "max_trend_gap": self.max_trend_gap}


def jota_slope_fit(t0: float = 2.0, N_lo: int = 50, N_hi: int = 200) -> JotaFit:
    """Least squares fit of log|J_N(t0)| = a N log N + b N + c on [N_lo, N_hi]."""
    if not 1 <= N_lo < N_hi - 2:
        raise ValueError("need at least three orders in the fit range")
    signs, logs = bessel_j_orders(N_hi, t0)
    N = np.arange(N_lo, N_hi + 1, dtype=float)
    y = logs[N_lo: N_hi + 1]
    X = np.column_stack([N * np.log(N), N, np.ones_like(N)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    pred = X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
    gap = max(abs(float(y[i]) - jota_prediction(int(n), t0)) for i, n in enumerate(N))
    return JotaFit(float(coef[0]), float(coef[1]), float(coef[2]), r2, (N_lo, N_hi),
                   1.0 + math.log(t0 / 2.0), gap)


# ---------------------------------------------------------------------------
# shells in the max norm
# ---------------------------------------------------------------------------

@dataclass
class ShellData:
    """Max-norm shell data, all magnitudes as natural logs.

    log_M[N-1] = log max_{|n|_inf in {N, N-1}} |u_n| and
    q[N-1]     = h^2 max_{|n|_inf = N} |V_n|, for N = 1 .. len.
    ``residual`` is the relative residual of the source problem, or None for
    synthetic sequences that are not solutions of anything.
    """
    h: float
    d: int
    log_M: np.ndarray
    q: np.ndarray
    residual: float | None = None
    label: str = ""
    metric: str = "inf"

    def __post_init__(self):
        self.log_M = np.asarray(self.log_M, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.metric != "inf":
            raise MetricError("shell data is defined for max-norm shells only")
        if self.log_M.ndim != 1 or self.log_M.shape != self.q.shape or self.log_M.size < 1:
            raise ValueError("log_M and q must be 1-d arrays of equal positive length")
        if np.any(np.isnan(self.log_M)) or np.any(self.log_M == np.inf):
            raise ValueError("log_M must be finite or -inf")
        if np.any(self.q < 0) or not np.all(np.isfinite(self.q)):
            raise ValueError("q_N must be finite and nonnegative")
        if self.d < 1 or not self.h > 0:
            raise ValueError("invalid d or h")

    @property
    def n_shells(self) -> int:
        return int(self.log_M.size)

    def M(self, N: int) -> LogScalar:
        self._check_N(N)
        return LogScalar.from_log(float(self.log_M[N - 1]))

    def _check_N(self, N: int) -> None:
        if not 1 <= N <= self.n_shells:
            raise IndexError(f"shell {N} not available (1..{self.n_shells})")

    def factor(self, N: int) -> float:
        self._check_N(N)
        return 4.0 * self.d - 1.0 + float(self.q[N - 1])

    @classmethod
    def synthetic(cls, log_M: Sequence[float], d: int = 1, h: float = 1.0,
                  q: Sequence[float] | float = 0.0, label: str = "synthetic") -> "ShellData":
        log_M = np.asarray(log_M, dtype=float)
        q = np.broadcast_to(np.asarray(q, dtype=float), log_M.shape)
        return cls(h, d, log_M, q, None, label)

    @classmethod
    def geometric(cls, ratio: float, n_shells: int, d: int = 1, h: float = 1.0,
                  q: float = 0.0) -> "ShellData":
        """M_N = ratio^{-(N-1)}, so M_1 = 1 and M_{N+1} = ratio^{-N}."""
        if not ratio > 0:
            raise ValueError("ratio must be positive")
        N = np.arange(1, n_shells + 1)
        return cls.synthetic(-(N - 1) * math.log(ratio), d, h, q,
                             label=f"geometric {ratio:g}^-N")

    def to_rows(self) -> list[dict]:
        return [{"N": N, "log_M": float(self.log_M[N - 1]), "q": float(self.q[N - 1]),
                 "factor": self.factor(N)} for N in range(1, self.n_shells + 1)]


def shell_extract(p: EllipticProblem, metric: str = "inf") -> ShellData:
    """M_N and q_N over |n|_inf shells, N = 1 .. extent."""
    if metric != "inf":
        raise MetricError("the shell recursion uses |n|_inf shells; Euclidean annuli "
                          "belong to the parabolic tooling")
    box = p.box
    shell = box.index_norm_inf()
    lg = p.log_field().logmags
    h2 = box.h ** 2
    absV = np.abs(p.V)
    per_shell = np.full(box.extent + 1, NEG_INF)
    vmax = np.zeros(box.extent + 1)
    np.maximum.at(per_shell, shell.ravel(), lg.ravel())
    np.maximum.at(vmax, shell.ravel(), absV.ravel())
    N = np.arange(1, box.extent + 1)
    log_M = np.maximum(per_shell[N], per_shell[N - 1])
    rep = residual_report(p)
    return ShellData(box.h, box.d, log_M, h2 * vmax[N], rep.relative_to_sup, p.label)


@dataclass
class RecursionReport:
    rows: list
    worst_margin: float
    worst_N: int | None
    passed: bool
    residual: float

    def to_dict(self) -> dict:
        return {"worst_margin": self.worst_margin, "worst_N": self.worst_N,
                "passed": self.passed, "residual": self.residual, "rows": self.rows}


def uc_recursion_audit(s: ShellData, gate: float = RESIDUAL_GATE,
                       tol: float = 1e-12) -> RecursionReport:
    """Check M_N <= (4d - 1 + q_N) M_{N+1} for N = 1 .. n_shells - 1.

    The per-shell margin is log(factor M_{N+1} / M_N): nonnegative means the
    inequality holds.  Shells with M_N = 0 hold vacuously (margin +inf).
    Only residual-gated solutions are accepted.
    """
    if s.residual is None:
        raise ResidualTooLarge("shell data carries no residual; only solutions are audited")
    if not s.residual <= gate:
        raise ResidualTooLarge(f"residual {s.residual:.3e} exceeds gate {gate:.1e}")
    rows = []
    worst, worst_N = math.inf, None
    for N in range(1, s.n_shells):
        lm, lm1 = float(s.log_M[N - 1]), float(s.log_M[N])
        fac = s.factor(N)
        if lm == NEG_INF:
            margin = math.inf
        elif lm1 == NEG_INF:
            margin = -math.inf
        else:
            margin = math.log(fac) + lm1 - lm
        rows.append({"N": N, "log_M": lm, "log_M_next": lm1, "q": float(s.q[N - 1]),
                     "factor": fac, "margin": margin})
        if margin < worst:
            worst, worst_N = margin, N
    return RecursionReport(rows, worst, worst_N, worst >= -tol, float(s.residual))


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------

def uc_threshold(s: ShellData, N: int) -> LogScalar:
    """M_1 / prod_{n=1}^{N} (4d - 1 + q_n)."""
    s._check_N(N)
    log_prod = float(np.sum(np.log(4.0 * s.d - 1.0 + s.q[:N])))
    return LogScalar.from_log(float(s.log_M[0]) - log_prod) if s.log_M[0] > NEG_INF \
        else LogScalar.zero()


def bounded_potential_threshold(s: ShellData, N: int, V_sup: float) -> LogScalar:
    """Bounded-V form: M_1 exp(-(R/h) log(4d - 1 + h^2 ||V||)), R = N h."""
    s._check_N(N)
    if V_sup < 0:
        raise ValueError("V_sup must be nonnegative")
    if s.log_M[0] == NEG_INF:
        return LogScalar.zero()
    return LogScalar.from_log(float(s.log_M[0]) - N * math.log(4.0 * s.d - 1.0 + s.h ** 2 * V_sup))


def linear_potential_threshold(s: ShellData, N: int) -> LogScalar:
    """V(x) = x form: M_1 exp(-(R/h) log(4d - 1 + h^2 R)), R = N h."""
    s._check_N(N)
    if s.log_M[0] == NEG_INF:
        return LogScalar.zero()
    R = N * s.h
    return LogScalar.from_log(float(s.log_M[0]) - N * math.log(4.0 * s.d - 1.0 + s.h ** 2 * R))


def linear_potential_shells(h: float, n_shells: int, d: int = 1,
                            log_M: Sequence[float] | None = None) -> ShellData:
    """Shell data for V(x) = x_1 on (hZ)^d: q_N = h^2 max_{|n|=N} |h n_1| = h^3 N."""
    N = np.arange(1, n_shells + 1)
    lm = np.zeros(n_shells) if log_M is None else np.asarray(log_M, dtype=float)
    return ShellData.synthetic(lm, d, h, h ** 3 * N, label="V(x)=x")


@dataclass
class ThresholdScan:
    flags: list          # flags[i] is for N = i + 1: M_{N+1} < threshold(N)
    N0: int | None       # smallest N with flags for every N' >= N in range
    rows: list

    def to_dict(self) -> dict:
        return {"N0": self.N0, "any_flag": any(self.flags), "rows": self.rows}


def threshold_scan(s: ShellData, rel_tol: float = 1e-12) -> ThresholdScan:
    """Compare M_{N+1} with the product threshold for N = 1 .. n_shells - 1.

    A flag means the decay is strictly faster than any nonzero solution can
    achieve, i.e. "decay forces u = 0".  Strictness is read with a relative
    slack of ``rel_tol`` on the logs, so a sequence sitting exactly on the
    threshold is not flagged because of rounding in the two log sums.
    """
    rows, flags = [], []
    for N in range(1, s.n_shells):
        thr = uc_threshold(s, N)
        nxt = float(s.log_M[N])
        slack = rel_tol * max(1.0, abs(thr.logmag)) if not thr.is_zero() else 0.0
        flag = (not thr.is_zero()) and nxt < thr.logmag - slack
        flags.append(flag)
        rows.append({"N": N, "log_M_next": nxt, "log_threshold": thr.logmag,
                     "verdict": "decay forces u = 0" if flag else "no claim"})
    N0 = None
    for i in range(len(flags) - 1, -1, -1):
        if not flags[i]:
            break
        N0 = i + 1
    return ThresholdScan(flags, N0, rows)


# ---------------------------------------------------------------------------
# alpha regimes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticAlpha:
    alpha: float
    case: str
    beta: float | None

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "case": self.case, "beta": self.beta}


def beta_of(R: float, h: float) -> float:
    """beta with R = h^{-beta}; needs 0 < h < 1."""
    if not 0 < h < 1:
        raise ValueError("beta is defined for 0 < h < 1 only")
    return -math.log(R) / math.log(h)


def alpha_select_elliptic(R: float, h: float, d: int = 1, mode: str = "auto",
                          c: float = 1.0) -> EllipticAlpha:
    """Regime-dependent Carleman strength.

    auto:    beta <= 3 (h R^{1/3} <= 1): alpha = c R^{4/3}
             beta > 3:  alpha = (sqrt(d)/4) R^{1 + 1/beta} log(R^{1 - 1/beta})
    fixed_h: alpha = c (R/h) log(R h), for R h > 1.
    """
    if not R >= 1:
        raise ValueError("R must be at least 1")
    if not h > 0:
        raise ValueError("h must be positive")
    if mode == "fixed_h":
        if not R * h > 1:
            raise ValueError("fixed-h mode needs R h > 1")
        return EllipticAlpha(c * (R / h) * math.log(R * h), "fixed_h", None)
    if mode != "auto":
        raise ValueError("mode must be 'auto' or 'fixed_h'")
    beta = beta_of(R, h)
    if beta <= 3.0:
        return EllipticAlpha(c * R ** (4.0 / 3.0), "continuum", beta)
    return EllipticAlpha(math.sqrt(d) / 4.0 * R ** (1.0 + 1.0 / beta)
                         * math.log(R ** (1.0 - 1.0 / beta)), "intermediate", beta)


# ---------------------------------------------------------------------------
# elliptic Carleman audit
# ---------------------------------------------------------------------------

def _static_coords(config: CarlemanConfig, box: LatticeBox) -> list[np.ndarray]:
    xs = [config.h * j / config.R for j in box.indices()]
    xs[0] = xs[0] + CENTER_SHIFT
    return xs


def static_support_mask(config: CarlemanConfig, box: LatticeBox) -> np.ndarray:
    r = np.sqrt(np.broadcast_to(sum(x ** 2 for x in _static_coords(config, box)), box.shape))
    return (r >= 1.0) & (r <= 4.0)


def static_ops(config: CarlemanConfig, f: LatticeField) -> tuple[np.ndarray, np.ndarray]:
    """(S f, A f) for the weight alpha |hj/R + 3 e_1|^2.

    e^{phi} Delta_h (e^{-phi} f) = -(S + A) f, with S symmetric and A
    antisymmetric on zero-extended fields.
    """
    box = f.box
    if box.h != config.h or box.d != config.d:
        raise ValueError("box does not match the configuration")
    bad = (f.values != 0.0) & ~static_support_mask(config, box)
    if np.any(bad):
        raise SupportError(f"field is nonzero at {int(bad.sum())} sites outside "
                           "1 <= |hj/R + 3 e_1| <= 4")
    c = 2.0 * config.alpha * config.h / config.R
    half = config.h / (2.0 * config.R)
    v = f.values
    S = np.zeros_like(v)
    A = np.zeros_like(v)
    for k, x in enumerate(_static_coords(config, box)):
        ap, am = c * (x + half), c * (x - half)
        if max(np.abs(ap).max(), np.abs(am).max()) > 700.0:
            raise OverflowError("cosh/sinh coefficients overflow; alpha too large")
        fp, fm = _shift(v, k, 1), _shift(v, k, -1)
        S += 2.0 * v - np.cosh(ap) * fp - np.cosh(am) * fm
        A += np.sinh(ap) * fp - np.sinh(am) * fm
    h2 = config.h ** 2
    return S / h2, A / h2


def static_commutator(config: CarlemanConfig, f: LatticeField) -> tuple[float, float]:
    """<[S, A] f, f> two ways: direct 2<Sf, Af> and the closed form.

    Closed form: 4 h^-4 sinh(2 alpha h^2/R^2) h^d sum_k sum_j
    [sinh^2(2 alpha h x_k / R) f_j^2 + ((f_{j+e_k} - f_{j-e_k})/2)^2].
    It is a sum of squares, hence the positivity.
    """
    S, A = static_ops(config, f)
    vol = config.h ** config.d
    direct = 2.0 * vol * float(np.sum(S * A))
    v = f.values
    c = 2.0 * config.alpha * config.h / config.R
    nz = v != 0.0   # sinh may overflow off the support, where f vanishes
    acc = 0.0
    for k, x in enumerate(_static_coords(config, f.box)):
        diff = (_shift(v, k, 1) - _shift(v, k, -1)) / 2.0
        xs = np.broadcast_to(x, v.shape)[nz]
        acc += float(np.sum((np.sinh(c * xs) * v[nz]) ** 2)) + float(np.sum(diff ** 2))
    closed = 4.0 * math.sinh(2.0 * config.alpha * config.h ** 2 / config.R ** 2) \
        / config.h ** 4 * vol * acc
    return direct, closed


def elliptic_sides(config: CarlemanConfig, f: LatticeField) -> tuple[float, float]:
    """(LHS, RHS) of the elliptic Carleman inequality.

    LHS = h^-2 sqrt(s) [sinh(2 alpha h/(R sqrt d)) ||f|| + 2 (sum_k ||(f_+ - f_-)/2||^2)^{1/2}],
    s = sinh(2 alpha h^2/R^2);  RHS = ||e^phi Delta_h(e^-phi f)||.
    Since RHS^2 >= <[S,A]f,f> and the closed form dominates LHS^2 / 2, the
    ratio never exceeds sqrt(2).
    """
    S, A = static_ops(config, f)
    vol = config.h ** config.d
    v = f.values
    nf = vol * float(np.sum(v ** 2))
    grad = 0.0
    for k in range(config.d):
        diff = (_shift(v, k, 1) - _shift(v, k, -1)) / 2.0
        grad += vol * float(np.sum(diff ** 2))
    a, h, R, d = config.alpha, config.h, config.R, config.d
    root = math.sqrt(math.sinh(2.0 * a * h ** 2 / R ** 2))
    lhs = root * (math.sinh(2.0 * a * h / (R * math.sqrt(d))) * math.sqrt(nf)
                  + 2.0 * math.sqrt(grad)) / h ** 2
    rhs = math.sqrt(vol * float(np.sum((S + A) ** 2)))
    return lhs, rhs


def random_static_field(config: CarlemanConfig, rng: np.random.Generator,
                        box: LatticeBox | None = None) -> LatticeField:
    """c_j b(|hj/R + 3 e_1|) with Gaussian c_j and a smooth bump b on (1, 4), unit norm."""
    box = box or carleman_box(config)
    r = np.sqrt(np.broadcast_to(sum(x ** 2 for x in _static_coords(config, box)), box.shape))
    env = smooth_step(r - 1.0)[0] * smooth_step(4.0 - r)[0]
    v = env * rng.standard_normal(box.shape)
    n = math.sqrt(config.h ** config.d * float(np.sum(v ** 2)))
    return LatticeField(box, v / n if n > 0 else v)


SQRT2 = math.sqrt(2.0)


@dataclass
class EllipticAudit:
    C_hat: float
    ratios: list
    min_commutator_rel: float     # min over samples of closed form / scale
    max_commutator_gap: float     # max |direct - closed| / scale
    alpha: float
    seed: int
    passed: bool

    def to_dict(self) -> dict:
        return {"C_hat": self.C_hat, "ratios": self.ratios,
                "min_commutator_rel": self.min_commutator_rel,
                "max_commutator_gap": self.max_commutator_gap, "alpha": self.alpha,
                "seed": self.seed, "passed": self.passed, "bound": SQRT2,
                "label": "empirical"}


def audit_carleman_elliptic(config: CarlemanConfig, samples: int, seed: int,
                            tol: float = 1e-10) -> EllipticAudit:
    """Empirical C^ for the static weight.  No parameter conditions apply.

    The contract: every commutator is >= -tol * scale, direct and closed
    forms agree to ``tol`` relative to scale, and C^ <= sqrt(2).  ``scale`` is
    the sum of absolute values entering 2<Sf, Af>.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    box = carleman_box(config)
    ratios, comm_min, gap_max = [], math.inf, 0.0
    for _ in range(samples):
        f = random_static_field(config, rng, box)
        direct, closed = static_commutator(config, f)
        S, A = static_ops(config, f)
        scale = 2.0 * config.h ** config.d * float(np.sum(np.abs(S * A))) or 1.0
        comm_min = min(comm_min, min(direct, closed) / scale)
        gap_max = max(gap_max, abs(direct - closed) / scale)
        lhs, rhs = elliptic_sides(config, f)
        if rhs > 0:
            ratios.append(lhs / rhs)
    if not ratios:
        raise ValueError("every sampled field was zero")
    C = max(ratios)
    ok = comm_min >= -tol and gap_max <= tol and C <= SQRT2 * (1 + 1e-12)
    return EllipticAudit(C, ratios, comm_min, gap_max, config.alpha, seed, ok)


# ---------------------------------------------------------------------------
# decay versus lower bound
# ---------------------------------------------------------------------------

def elliptic_rate(kind: str, R: float, beta: float | None = None,
                  h: float | None = None) -> float:
    """Exponent rate(R) of e^{-mu rate(R)} for each regime."""
    if kind == "continuum":
        return R ** (4.0 / 3.0)
    if kind == "intermediate":
        if beta is None or not beta > 0:
            raise ValueError("intermediate rate needs beta > 0")
        return R ** (1.0 + 1.0 / beta) * math.log(R ** (1.0 - 1.0 / beta))
    if kind == "fixed_h":
        if h is None or not h > 0:
            raise ValueError("fixed-h rate needs h > 0")
        return (R / h) * math.log(R * h)
    raise ValueError(f"unknown decay kind {kind!r}")


@dataclass
class EllipticGap:
    kind: str
    mu0: float
    fitted_C: float
    verdict: str
    crossing_R: float | None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu0": self.mu0, "fitted_C": self.fitted_C,
                "verdict": self.verdict, "crossing_R": self.crossing_R}


def landis_elliptic_gap(kind: str, mu0: float, fitted_C: float, beta: float | None = None,
                        h: float | None = None, log_prefactor_gap: float = 0.0,
                        rel_tol: float = 1e-12, R_max: float = 1e12) -> EllipticGap:
    """Assumed decay e^{-mu0 rate(R)} against the lower bound e^{-C rate(R)}.

    The assumed decay is eventually below the lower bound iff mu0 > C.  The
    crossing scale solves (mu0 - C) rate(R) = log_prefactor_gap; it is found
    by bracketing on the increasing branch of rate.
    """
    if not fitted_C > 0:
        raise ValueError("fitted_C must be positive")
    if not mu0 > 0:
        raise ValueError("mu0 must be positive")
    elliptic_rate(kind, 2.0, beta, h if h is not None else 1.0)     # validates arguments
    if abs(mu0 - fitted_C) <= rel_tol * fitted_C:
        return EllipticGap(kind, mu0, fitted_C, "boundary", None)
    if mu0 < fitted_C:
        return EllipticGap(kind, mu0, fitted_C, "no contradiction", None)
    target = max(log_prefactor_gap, 0.0) / (mu0 - fitted_C)
    lo = 1.0 if kind != "fixed_h" else 1.0 / h
    lo = max(lo, 1.0) * (1.0 + 1e-9)
    g = lambda R: elliptic_rate(kind, R, beta, h) - target
    if g(lo) >= 0:
        return EllipticGap(kind, mu0, fitted_C, "contradiction", lo)
    hi = lo * 2.0
    while g(hi) < 0:
        hi *= 2.0
        if hi > R_max:
            return EllipticGap(kind, mu0, fitted_C, "contradiction", None)
    return EllipticGap(kind, mu0, fitted_C, "contradiction", float(brentq(g, lo, hi)))
