"""Log-domain Bessel functions I_n, K_nu, J_n and inequality audits.

Evaluation branches
-------------------
K_nu(x), real nu >= 0
    Base pair K_mu, K_{mu+1} with |mu| <= 1/2 from Temme's series (x < 2) or
    Steed's continued fraction (x >= 2), both carried with the e^{-x} factor
    stripped; then the upward ratio recurrence
    r_{nu} = K_{nu+1}/K_nu = 1/r_{nu-1} + 2 nu/x, which is stable.
    Very large orders use the uniform (Debye) expansion.
I_n(x), integer n
    Power series in log form for x <= series_cutoff, Hankel's large-argument
    series when x >> n^2, otherwise Miller's downward recurrence normalised by
    sum_{n in Z} I_n(x) = e^x.  Very large orders use the uniform expansion.
J_n(x), integer n >= 0
    Miller's downward recurrence normalised by J_0 + 2 sum J_{2k} = 1, carried
    with a running log scale so that J_200(2) ~ 1e-375 is still representable.

The trapezoid rule applied to K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt
(the integrand decays double exponentially) is exposed as ``k_quadrature`` and
serves as an independent oracle for K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, rgamma

from .logscalar import NEG_INF, LogScalar

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_MAXIT = 100000


@dataclass(frozen=True)
class BesselEvalPolicy:
    """Switch points between evaluation branches.

    series_cutoff
        arguments at or below this use the power series for I.
    asymptotic_order_ratio
        nu/x above this (and nu >= 64) sends K and I to the uniform expansion.
    asymptotic_min_order
        orders at or above this always use the uniform expansion.
    quadrature_nodes
        node count of the trapezoid oracle for K.
    hankel_min_argument
        smallest x for which the large-argument series of I may be used
        (additionally x >= 25 (n^2 + 1) is required).
    """

    series_cutoff: float = 30.0
    asymptotic_order_ratio: float = 1.0e3
    asymptotic_min_order: float = 256.0
    quadrature_nodes: int = 256
    hankel_min_argument: float = 1.0e4

    def __post_init__(self):
        if not self.series_cutoff > 0:
            raise ValueError("series_cutoff must be positive")
        if self.quadrature_nodes < 64:
            raise ValueError("quadrature_nodes must be at least 64")
        if not self.asymptotic_order_ratio > 0 or not self.asymptotic_min_order > 0:
            raise ValueError("asymptotic thresholds must be positive")


DEFAULT_POLICY = BesselEvalPolicy()


def _check_positive(x: float, name: str = "x") -> float:
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"{name} must be a positive finite real, got {x!r}")
    return x


# ---------------------------------------------------------------------------
# K: base pair via Temme / Steed, scaled by e^{x}
# ---------------------------------------------------------------------------

def _gam12(mu: float) -> tuple[float, float, float, float]:
    """Temme's gamma combinations: gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)."""
    gampl = float(rgamma(1.0 + mu))
    gammi = float(rgamma(1.0 - mu))
    gam2 = 0.5 * (gammi + gampl)
    if abs(mu) < 1e-3:
        # 1/Gamma(1+z) = 1 + c1 z + c2 z^2 + c3 z^3 + ...; gam1 = -(c1 + c3 mu^2 + c5 mu^4)
        c1, c3, c5 = EULER_GAMMA, -0.04200263503409523553, -0.04219773455554433675
        gam1 = -(c1 + c3 * mu * mu + c5 * mu ** 4)
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
    return gam1, gam2, gampl, gammi


def _k_base_scaled(mu: float, x: float) -> tuple[float, float]:
    """Return (e^x K_mu(x), e^x K_{mu+1}(x)) for |mu| <= 1/2."""
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _gam12(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        mu2 = mu * mu
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        scale = math.exp(x)
        return total * scale, total1 * (2.0 / x) * scale
    # Steed's method for the second continued fraction
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu * mu
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) / s
    k1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, k1


def _k_upward(nu: float, x: float) -> tuple[float, float]:
    """(log K_nu(x), K_{nu+1}/K_nu) for nu >= 0 by base pair + ratio recurrence."""
    nl = int(math.floor(nu + 0.5))
    mu = nu - nl
    kmu, k1 = _k_base_scaled(mu, x)
    logk = math.log(kmu) - x
    r = k1 / kmu  # K_{mu+1}/K_mu
    order = mu
    for _ in range(nl):
        logk += math.log(r)
        order += 1.0
        r = 1.0 / r + 2.0 * order / x
    return logk, r


def log_bessel_k_orders(nmax: int, x: float, nu0: float = 0.0) -> np.ndarray:
    """log K_{nu0+k}(x) for k = 0..nmax by the upward recurrence (nu0 >= 0)."""
    x = _check_positive(x)
    if nu0 < 0:
        raise ValueError("nu0 must be nonnegative")
    logk0, r = _k_upward(nu0, x)
    out = np.empty(nmax + 1)
    out[0] = logk0
    order = nu0
    acc = logk0
    for k in range(1, nmax + 1):
        acc += math.log(r)
        out[k] = acc
        order += 1.0
        r = 1.0 / r + 2.0 * order / x
    return out


def k_ratio_orders(nmax: int, x: float) -> np.ndarray:
    """K_{k+1}(x)/K_k(x) for k = 0..nmax (integer orders), all from ratios."""
    x = _check_positive(x)
    kmu, k1 = _k_base_scaled(0.0, x)
    out = np.empty(nmax + 1)
    r = k1 / kmu
    for k in range(nmax + 1):
        out[k] = r
        r = 1.0 / r + 2.0 * (k + 1) / x
    return out


# ---------------------------------------------------------------------------
# uniform (Debye) expansion
# ---------------------------------------------------------------------------

def _debye_u(p: float) -> list[float]:
    p2 = p * p
    return [
        1.0,
        p * (3.0 - 5.0 * p2) / 24.0,
        p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0,
        p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 ** 2 - 425425.0 * p2 ** 3) / 414720.0,
        p2 * p2 * (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2 ** 2
                   - 446185740.0 * p2 ** 3 + 185910725.0 * p2 ** 4) / 39813120.0,
    ]


def _eta(z: float) -> tuple[float, float]:
    """sqrt(1+z^2) + log(z/(1+sqrt(1+z^2))) and p = 1/sqrt(1+z^2)."""
    s = math.hypot(1.0, z)
    return s + math.log(z / (1.0 + s)), 1.0 / s


def _uniform_logs(nu: float, z: float, terms: int) -> tuple[float, float]:
    eta, p = _eta(z)
    quarter = 0.25 * math.log1p(z * z)
    log_k = 0.5 * math.log(math.pi / (2.0 * nu)) - nu * eta - quarter
    log_i = -0.5 * math.log(2.0 * math.pi * nu) + nu * eta - quarter
    if terms > 0:
        u = _debye_u(p)[: terms + 1]
        sk = sum(((-1) ** k) * u[k] / nu ** k for k in range(len(u)))
        si = sum(u[k] / nu ** k for k in range(len(u)))
        log_k += math.log(sk)
        log_i += math.log(si)
    return log_k, log_i


def uniform_asymptotics(n: float, z: float, terms: int = 0) -> tuple[LogScalar, LogScalar]:
    """Uniform large-order approximations of (K_n(nz), I_n(nz)).

    With ``terms=0`` these are the leading-order forms
        K_n(nz) ~ sqrt(pi/(2n)) e^{-n eta} / (1+z^2)^{1/4},
        I_n(nz) ~ e^{n eta} / (sqrt(2 pi n) (1+z^2)^{1/4}),
    eta = sqrt(1+z^2) + log(z/(1+sqrt(1+z^2))).  ``terms`` adds Debye
    corrections u_1..u_terms (at most 4).
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    z = _check_positive(z, "z")
    if not 0 <= terms <= 4:
        raise ValueError("terms must be in 0..4")
    lk, li = _uniform_logs(float(n), z, terms)
    return LogScalar(1, lk), LogScalar(1, li)


def _use_uniform(nu: float, x: float, policy: BesselEvalPolicy) -> bool:
    if nu >= policy.asymptotic_min_order:
        return True
    return nu >= 64 and nu / x >= policy.asymptotic_order_ratio


# ---------------------------------------------------------------------------
# K public API
# ---------------------------------------------------------------------------

def log_bessel_k(n: float, x: float, policy: BesselEvalPolicy | None = None,
                 method: str = "auto") -> LogScalar:
    """log K_{|n|}(x).  ``n`` may be real; ``method`` in {auto, recurrence, uniform}."""
    policy = policy or DEFAULT_POLICY
    x = _check_positive(x)
    nu = abs(float(n))
    if method not in ("auto", "recurrence", "uniform"):
        raise ValueError(f"unknown method {method!r}")
    if method == "uniform" or (method == "auto" and _use_uniform(nu, x, policy)):
        if nu < 1:
            raise ValueError("uniform branch needs order >= 1")
        lk, _ = _uniform_logs(nu, x / nu, 4)
        return LogScalar(1, lk)
    logk, _ = _k_upward(nu, x)
    return LogScalar(1, logk)


def k_ratio(n: int, x: float, policy: BesselEvalPolicy | None = None) -> float:
    """K_{n+1}(x)/K_n(x) from the ratio recurrence (no linear K values formed)."""
    policy = policy or DEFAULT_POLICY
    x = _check_positive(x)
    n = int(n)
    if n >= 0:
        target, invert = n, False
    else:
        # K_{n+1}/K_n = K_{|n|-1}/K_{|n|}
        target, invert = -n - 1, True
    if _use_uniform(target + 1, x, policy) and target >= 1:
        a = log_bessel_k(target + 1, x, policy).logmag - log_bessel_k(target, x, policy).logmag
        r = math.exp(a)
    else:
        _, r = _k_upward(float(target), x)
    return 1.0 / r if invert else r


def k_quadrature(nu: float, x: float, nodes: int | None = None) -> LogScalar:
    """Oracle: trapezoid rule on K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt.

    The integrand decays double exponentially in t, so the plain trapezoid
    rule on a truncated interval converges geometrically in the node count.
    Summation is done in log space.
    """
    x = _check_positive(x)
    nodes = DEFAULT_POLICY.quadrature_nodes if nodes is None else int(nodes)
    if nodes < 64:
        raise ValueError("need at least 64 nodes")
    nu = abs(float(nu))

    def g(t):
        return -x * np.cosh(t) + nu * t + np.log1p(np.exp(-2.0 * nu * t)) - math.log(2.0)

    tstar = math.asinh(nu / x) if nu > 0 else 0.0
    peak = float(g(np.array(tstar)))
    lo, hi = tstar, tstar + 1.0
    while float(g(np.array(hi))) > peak - 60.0:
        hi = tstar + 2.0 * (hi - tstar)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(g(np.array(mid))) > peak - 60.0:
            lo = mid
        else:
            hi = mid
    t = np.linspace(0.0, hi, nodes)
    dt = t[1] - t[0]
    vals = g(t)
    w = np.full(nodes, dt)
    w[0] *= 0.5
    w[-1] *= 0.5
    logs = vals + np.log(w)
    m = logs.max()
    return LogScalar(1, m + math.log(np.sum(np.exp(logs - m))))


# ---------------------------------------------------------------------------
# I
# ---------------------------------------------------------------------------

def _log_i_series(n: int, x: float) -> float:
    if x == 0.0:
        return 0.0 if n == 0 else NEG_INF
    q = 0.25 * x * x
    term, total = 1.0, 1.0
    for k in range(1, _MAXIT):
        term *= q / (k * (n + k))
        total += term
        if term < total * _EPS:
            break
    return n * math.log(0.5 * x) - float(gammaln(n + 1.0)) + math.log(total)


def _log_i_hankel(n: int, x: float) -> float | None:
    mu4 = 4.0 * n * n
    term, total = 1.0, 1.0
    prev = math.inf
    for k in range(1, 200):
        term *= -(mu4 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) > prev:
            return None
        total += term
        prev = abs(term)
        if abs(term) < _EPS * abs(total):
            return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)
    return None


def _miller_start(nmax: int, x: float) -> int:
    return int(nmax + 10.0 * math.sqrt(x) + 30)


def _miller_i_ratios(nmax: int, x: float) -> np.ndarray:
    """rho_k = I_{k+1}(x)/I_k(x) for k = 0..N-1 with N the Miller start."""
    N = _miller_start(nmax, x)
    rho = np.empty(N)
    r = 0.0  # I_{N+1}/I_N taken as 0
    for k in range(N, 0, -1):
        r = 1.0 / (2.0 * k / x + r)
        rho[k - 1] = r
    return rho


def log_bessel_i_orders(nmax: int, x: float) -> np.ndarray:
    """log I_k(x) for k = 0..nmax (Miller, normalised by sum_n I_n = e^x)."""
    x = float(x)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        out = np.full(nmax + 1, NEG_INF)
        out[0] = 0.0
        return out
    rho = _miller_i_ratios(nmax, x)
    # log(v_k / v_0) with v_{k+1}/v_k = rho_k
    logv = np.concatenate(([0.0], np.cumsum(np.log(rho))))
    # sum_{n in Z} I_n = I_0 + 2 sum_{k>=1} I_k = e^x
    m = logv.max()
    s = np.exp(logv - m)
    total = s[0] + 2.0 * s[1:].sum()
    log_i0 = x - (m + math.log(total))
    return log_i0 + logv[: nmax + 1]


def log_bessel_i(n: int, x: float, policy: BesselEvalPolicy | None = None) -> LogScalar:
    """log I_{|n|}(x) for integer n and x >= 0."""
    policy = policy or DEFAULT_POLICY
    x = float(x)
    if x < 0 or not math.isfinite(x):
        raise ValueError(f"x must be a nonnegative finite real, got {x!r}")
    n = abs(int(n))
    if x == 0.0:
        return LogScalar.one() if n == 0 else LogScalar.zero()
    if n >= 1 and _use_uniform(n, x, policy):
        _, li = _uniform_logs(float(n), x / n, 4)
        return LogScalar(1, li)
    if x <= policy.series_cutoff:
        return LogScalar(1, _log_i_series(n, x))
    if x >= policy.hankel_min_argument and x >= 25.0 * (n * n + 1):
        val = _log_i_hankel(n, x)
        if val is not None:
            return LogScalar(1, val)
    return LogScalar(1, float(log_bessel_i_orders(n, x)[n]))


def i_ratio(n: int, x: float) -> float:
    """I_{n+1}(x)/I_n(x) for n >= 0 from the backward ratio recurrence."""
    x = _check_positive(x)
    if n < 0:
        raise ValueError("i_ratio needs n >= 0")
    return float(_miller_i_ratios(n + 1, x)[n])


# ---------------------------------------------------------------------------
# J
# ---------------------------------------------------------------------------

def bessel_j_orders(nmax: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """(signs, log|J_k(x)|) for k = 0..nmax by Miller's algorithm."""
    x = _check_positive(x)
    top = max(nmax, int(math.ceil(x)))
    N = top + 30 + int(math.sqrt(60.0 * top))
    N += N % 2
    signs = np.zeros(N + 1)
    logs = np.full(N + 1, NEG_INF)
    vp, v = 0.0, 1e-300  # v_{k+1}, v_k at the running scale
    scale = 0.0
    signs[N], logs[N] = 1.0, math.log(v)
    big = 1e250
    for k in range(N, 0, -1):
        vm = (2.0 * k / x) * v - vp
        vp, v = v, vm
        if abs(v) > big:
            vp /= big
            v /= big
            scale += math.log(big)
        if v != 0.0:
            signs[k - 1] = math.copysign(1.0, v)
            logs[k - 1] = math.log(abs(v)) + scale
    # normalisation: J_0 + 2 sum_{k>=1} J_{2k} = 1
    w = np.zeros(N + 1)
    w[0] = 1.0
    w[2::2] = 2.0
    live = (w > 0) & (signs != 0)
    m = logs[live].max()
    total = float(np.sum(w[live] * signs[live] * np.exp(logs[live] - m)))
    log_norm = m + math.log(abs(total))
    sgn_norm = 1.0 if total > 0 else -1.0
    return (signs[: nmax + 1] * sgn_norm), logs[: nmax + 1] - log_norm


def log_bessel_j(n: int, x: float) -> LogScalar:
    """Signed log-domain J_n(x) for n >= 0, x > 0."""
    x = _check_positive(x)
    n = int(n)
    if n < 0:
        raise ValueError("log_bessel_j needs n >= 0")
    s, l = bessel_j_orders(n, x)
    if s[n] == 0:
        return LogScalar.zero()
    return LogScalar(int(s[n]), float(l[n]))


def jota_prediction(n: int, z: float) -> float:
    """Large-order trend of log|J_n(z)| at fixed z.

    J_n(z) ~ (e z / (2n))^n / sqrt(2 pi n), so the log is
    -0.5 log(2 pi n) + n log(e z / (2n)).  The error is O(1/n) in absolute terms.
    """
    return -0.5 * math.log(2.0 * math.pi * n) + n * math.log(math.e * z / (2.0 * n))


# ---------------------------------------------------------------------------
# classical inequality audit
# ---------------------------------------------------------------------------

@dataclass
class InequalityRecord:
    name: str
    strict: bool
    min_margin: float = math.inf
    argmin: tuple = ()
    count: int = 0

    def update(self, margin: float, where: tuple) -> None:
        self.count += 1
        if margin < self.min_margin or not self.argmin:
            self.min_margin = float(margin)
            self.argmin = where

    def passed(self, tol: float = 1e-8) -> bool:
        return self.count > 0 and self.min_margin >= -tol

    def strictly_passed(self, resolution: float = 1e-10) -> bool:
        """Strict inequalities must not fall below zero by more than the resolution.

        Margins of order 1/x^3 at x = 10^6 sit below double precision, so a
        strict claim can only be checked down to a resolution, never exactly.
        """
        return self.count > 0 and (not self.strict or self.min_margin > -resolution)

    def to_dict(self, tol: float = 1e-8, resolution: float = 1e-10) -> dict:
        return {"name": self.name, "strict": self.strict, "min_margin": self.min_margin,
                "argmin": list(self.argmin), "count": self.count,
                "passed": self.passed(tol) and self.strictly_passed(resolution)}


@dataclass
class BesselInequalityReport:
    records: dict = field(default_factory=dict)
    tolerance: float = 1e-8
    strict_resolution: float = 1e-10

    def passed(self) -> bool:
        return all(r.passed(self.tolerance) and r.strictly_passed(self.strict_resolution)
                   for r in self.records.values())

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "strict_resolution": self.strict_resolution,
                "passed": self.passed(),
                "inequalities": [self.records[k].to_dict(self.tolerance, self.strict_resolution)
                                 for k in sorted(self.records)]}


def _log_k_derivative_fd(n: int, x: float) -> float:
    """Five-point central difference of log K_n at x."""
    eps = 1e-3 * x
    f = [_k_upward(float(abs(n)), x + k * eps)[0] for k in (-2, -1, 1, 2)]
    return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * eps)


def audit_bessel_inequalities(orders: Sequence[int], arguments: Sequence[float],
                              tolerance: float = 1e-8) -> BesselInequalityReport:
    """Evaluate the margins of the classical K/I inequalities on a grid.

    Margins are log-ratios (rhs over lhs), so they are relative and a
    violated inequality shows up as a negative number.
    """
    orders = [int(n) for n in orders]
    arguments = [float(x) for x in arguments]
    if not orders or not arguments:
        raise ValueError("order and argument grids must be nonempty")
    for x in arguments:
        _check_positive(x)
    rep = BesselInequalityReport(tolerance=tolerance)
    names = {
        "turan": True, "turan_lower": False, "turan_n0_lower": True, "turan_n0_upper": True,
        "product_monotonicity_I": True, "product_monotonicity_K": False,
        "derivative_recurrence": False, "order_monotonicity": True,
    }
    for nm, strict in names.items():
        rep.records[nm] = InequalityRecord(nm, strict)
    nmax = max(abs(n) for n in orders) + 2
    for x in arguments:
        r = k_ratio_orders(nmax, x)          # r[k] = K_{k+1}/K_k
        logr = np.log(r)
        rho = _miller_i_ratios(nmax, x)      # rho[k] = I_{k+1}/I_k
        for n in orders:
            a = abs(n)
            # log(K_{n+1} K_{n-1} / K_n^2) in terms of |n|
            if a == 0:
                tur = 2.0 * logr[0]
            else:
                tur = logr[a] - logr[a - 1]
            rep.records["turan"].update(tur, (n, x))
            rep.records["order_monotonicity"].update(logr[a], (n, x))
            if a >= 1:
                rep.records["turan_lower"].update(math.log1p(1.0 / x) - tur, (n, x))
            else:
                ratio_log = -2.0 * logr[0]  # log(K_0^2/(K_{-1}K_1))
                lower = -math.log1p(1.0 / x + 1.0 / (4.0 * x ** 3))
                rep.records["turan_n0_lower"].update(ratio_log - lower, (n, x))
                rep.records["turan_n0_upper"].update(-math.log1p(1.0 / x) - ratio_log, (n, x))
            if n >= 0:
                nu = n + 0.5
                mid = math.log(x) - math.log(nu + math.hypot(nu, x))
                rep.records["product_monotonicity_I"].update(mid - math.log(rho[n]), (n, x))
                rep.records["product_monotonicity_K"].update(-logr[n] - mid, (n, x))
            # K_n'/K_n = -(K_{n+1} + K_{n-1})/(2 K_n)
            if a == 0:
                exact = -r[0]
            else:
                exact = -0.5 * (r[a] + 1.0 / r[a - 1])
            fd = _log_k_derivative_fd(a, x)
            rep.records["derivative_recurrence"].update(-abs(fd - exact) / abs(exact), (n, x))
    return rep


def wronskian_defect(n: int, x: float) -> float:
    """|x (I_n K_{n+1} + I_{n+1} K_n) - 1| using the independent I and K evaluators."""
    x = _check_positive(x)
    n = abs(int(n))
    li_n = log_bessel_i(n, x).logmag
    li_n1 = log_bessel_i(n + 1, x).logmag
    lk_n = log_bessel_k(n, x).logmag
    lk_n1 = log_bessel_k(n + 1, x).logmag
    val = math.exp(li_n + lk_n1 + math.log(x)) + math.exp(li_n1 + lk_n + math.log(x))
    return abs(val - 1.0)
