"""Fields on a truncated box of (hZ)^d.

Sites are j in [-N, N]^d; the physical point is hj.  Everything outside the
box is taken to be zero (zero extension), which is how difference operators
treat the boundary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .logscalar import LogScalar, signed_logsumexp


@dataclass(frozen=True)
class LatticeBox:
    d: int
    h: float
    extent: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.h > 0:
            raise ValueError("mesh h must be positive")
        if int(self.extent) != self.extent or self.extent < 4:
            raise ValueError("extent must be an integer >= 4")
        if (2 * self.extent + 1) ** self.d > 2 ** 31:
            raise ValueError("box too large for dense storage")

    @property
    def shape(self) -> tuple:
        return (2 * self.extent + 1,) * self.d

    @property
    def size(self) -> int:
        return (2 * self.extent + 1) ** self.d

    def indices(self) -> list[np.ndarray]:
        """Integer coordinates j_k of every site, one broadcastable array per axis."""
        ax = np.arange(-self.extent, self.extent + 1)
        return list(np.meshgrid(*([ax] * self.d), indexing="ij", sparse=True))

    def radius(self, metric: str = "euclidean") -> np.ndarray:
        """|hj| per site, Euclidean or max-norm."""
        idx = self.indices()
        if metric == "euclidean":
            r2 = sum((self.h * j) ** 2 for j in idx)
            return np.sqrt(np.broadcast_to(r2, self.shape))
        if metric == "inf":
            out = np.zeros(self.shape)
            for j in idx:
                out = np.maximum(out, np.abs(self.h * j))
            return out
        raise ValueError(f"unknown metric {metric!r}")

    def index_norm_inf(self) -> np.ndarray:
        """|n|_inf per site (integer shell index)."""
        out = np.zeros(self.shape, dtype=int)
        for j in self.indices():
            out = np.maximum(out, np.abs(j))
        return out

    def center(self) -> tuple:
        return (self.extent,) * self.d

    def site(self, j: Sequence[int]) -> tuple:
        """Array index of lattice point j."""
        if len(j) != self.d:
            raise ValueError("point has wrong dimension")
        if any(abs(int(v)) > self.extent for v in j):
            raise IndexError(f"point {tuple(j)} outside box")
        return tuple(int(v) + self.extent for v in j)


class LatticeField:
    """Real field on a box; values are read-only once constructed."""

    def __init__(self, box: LatticeBox, values):
        values = np.array(values, dtype=float)
        if values.shape != box.shape:
            if values.size == box.size:
                values = values.reshape(box.shape)
            else:
                raise ValueError(f"values shape {values.shape} does not match box {box.shape}")
        values.setflags(write=False)
        self.box = box
        self.values = values

    @classmethod
    def zeros(cls, box: LatticeBox) -> "LatticeField":
        return cls(box, np.zeros(box.shape))

    @classmethod
    def delta(cls, box: LatticeBox, j: Sequence[int] | None = None) -> "LatticeField":
        v = np.zeros(box.shape)
        v[box.site(j if j is not None else (0,) * box.d)] = 1.0
        return cls(box, v)

    @classmethod
    def from_function(cls, box: LatticeBox, fn) -> "LatticeField":
        """Build from fn(*coords) where coords are the physical points hj per axis."""
        coords = [box.h * j for j in box.indices()]
        return cls(box, np.broadcast_to(fn(*coords), box.shape))

    def __add__(self, other: "LatticeField") -> "LatticeField":
        _same_box(self, other)
        return LatticeField(self.box, self.values + other.values)

    def __sub__(self, other: "LatticeField") -> "LatticeField":
        _same_box(self, other)
        return LatticeField(self.box, self.values - other.values)

    def __mul__(self, a: float) -> "LatticeField":
        return LatticeField(self.box, a * self.values)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"LatticeField(d={self.box.d}, h={self.box.h}, extent={self.box.extent})"


class LogLatticeField:
    """Field stored as sign and natural-log magnitude per site."""

    def __init__(self, box: LatticeBox, signs, logmags):
        signs = np.array(signs, dtype=float).reshape(box.shape)
        logmags = np.array(logmags, dtype=float).reshape(box.shape)
        logmags = np.where(signs == 0, -np.inf, logmags)
        signs = np.where(np.isneginf(logmags), 0.0, signs)
        signs.setflags(write=False)
        logmags.setflags(write=False)
        self.box = box
        self.signs = signs
        self.logmags = logmags

    @classmethod
    def from_linear(cls, f: LatticeField) -> "LogLatticeField":
        with np.errstate(divide="ignore"):
            return cls(f.box, np.sign(f.values), np.log(np.abs(f.values)))

    def to_linear(self, floor: float = -700.0) -> tuple[LatticeField, int]:
        """Exponentiate; entries with logmag below ``floor`` are clamped to 0.

        Returns the field and the number of clamped nonzero sites.
        """
        live = self.signs != 0
        clamp = live & (self.logmags < floor)
        vals = np.where(live & ~clamp, self.signs * np.exp(np.where(live, self.logmags, 0.0)), 0.0)
        return LatticeField(self.box, vals), int(clamp.sum())

    def __repr__(self) -> str:
        return f"LogLatticeField(d={self.box.d}, h={self.box.h}, extent={self.box.extent})"


def _same_box(f, g) -> None:
    if f.box != g.box:
        raise ValueError("fields live on different boxes")


# ---------------------------------------------------------------------------
# difference operators
# ---------------------------------------------------------------------------

def _shift(a: np.ndarray, k: int, s: int) -> np.ndarray:
    """b_j = a_{j + s e_k} with zero extension."""
    out = np.zeros_like(a)
    n = a.shape[k]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if s > 0:
        src[k], dst[k] = slice(s, n), slice(0, n - s)
    elif s < 0:
        src[k], dst[k] = slice(0, n + s), slice(-s, n)
    else:
        return a.copy()
    out[tuple(dst)] = a[tuple(src)]
    return out


def diff_ops(f: LatticeField, k: int, kind: str) -> LatticeField:
    """D_{+,k}, D_{-,k} or the symmetric difference D^s_k (zero extension)."""
    if not 0 <= k < f.box.d:
        raise ValueError(f"axis {k} out of range for d={f.box.d}")
    h = f.box.h
    v = f.values
    if kind == "forward":
        out = (_shift(v, k, 1) - v) / h
    elif kind == "backward":
        out = (v - _shift(v, k, -1)) / h
    elif kind == "symmetric":
        out = (_shift(v, k, 1) - _shift(v, k, -1)) / (2.0 * h)
    else:
        raise ValueError(f"unknown difference kind {kind!r}")
    return LatticeField(f.box, out)


def laplacian_array(v: np.ndarray, h: float) -> np.ndarray:
    """Sum over axes of D_- D_+ applied to the zero-extended array."""
    out = np.zeros_like(v)
    for k in range(v.ndim):
        pad = [(0, 0)] * v.ndim
        pad[k] = (1, 1)
        vp = np.pad(v, pad)
        n = vp.shape[k]
        hi = [slice(None)] * v.ndim
        lo = [slice(None)] * v.ndim
        hi[k], lo[k] = slice(1, n), slice(0, n - 1)
        dplus = (vp[tuple(hi)] - vp[tuple(lo)]) / h      # at sites -N-1 .. N
        m = dplus.shape[k]
        hi[k], lo[k] = slice(1, m), slice(0, m - 1)
        out = out + (dplus[tuple(hi)] - dplus[tuple(lo)]) / h
    return out


def discrete_laplacian(f: LatticeField) -> LatticeField:
    return LatticeField(f.box, laplacian_array(f.values, f.box.h))


def interior_mask(box: LatticeBox, margin: int = 1) -> np.ndarray:
    """True at sites at least ``margin`` steps away from the box boundary."""
    m = np.ones(box.shape, dtype=bool)
    for j in box.indices():
        m &= np.abs(j) <= box.extent - margin
    return m


# ---------------------------------------------------------------------------
# norms, inner products, sums
# ---------------------------------------------------------------------------

def inner(f: LatticeField, g: LatticeField) -> float:
    """<f, g> = h^d sum_j f_j g_j."""
    _same_box(f, g)
    return float(f.box.h ** f.box.d * np.sum(f.values * g.values))


def l2_norm(f: LatticeField) -> float:
    a = np.abs(f.values)
    m = a.max() if a.size else 0.0
    if m == 0.0:
        return 0.0
    return float(m * math.sqrt(f.box.h ** f.box.d * np.sum((a / m) ** 2)))


def sup_norm(f: LatticeField) -> float:
    return float(np.abs(f.values).max())


def summation_by_parts_check(f: LatticeField, g: LatticeField) -> float:
    """|sum_j sum_k (D_{+,k} f)_j g_j + sum_j sum_k f_j (D_{-,k} g)_j|."""
    _same_box(f, g)
    inner_mask = interior_mask(f.box, 1)
    for name, u in (("f", f), ("g", g)):
        if np.any(u.values[~inner_mask] != 0):
            raise ValueError(f"{name} must vanish on the outermost layer of the box")
    total = 0.0
    for k in range(f.box.d):
        total += float(np.sum(diff_ops(f, k, "forward").values * g.values))
        total += float(np.sum(f.values * diff_ops(g, k, "backward").values))
    return abs(total)


def annulus_mask(box: LatticeBox, inner_r: float, outer_r: float,
                 metric: str = "euclidean") -> np.ndarray:
    """Sites with inner_r < |hj| < outer_r (strict on both sides)."""
    r = box.radius(metric)
    return (r > inner_r) & (r < outer_r)


def _check_annulus(box: LatticeBox, R: float) -> None:
    if not R + 1 < box.extent * box.h:
        raise ValueError(f"annulus R+1={R + 1} does not fit in box of half-width {box.extent * box.h}")


def annulus_mass(fields, R: float, include_time_integral: bool = False,
                 times: Sequence[float] | None = None):
    """h^d sum over R-2 < |hj| < R+1 of |u_j|^2.

    With ``include_time_integral`` the per-field masses are integrated over
    ``times`` by the trapezoid rule.  Linear fields give a float, log-domain
    fields give a LogScalar.
    """
    if isinstance(fields, (LatticeField, LogLatticeField)):
        fields = [fields]
    fields = list(fields)
    if not fields:
        raise ValueError("no fields supplied")
    box = fields[0].box
    for f in fields:
        _same_box(fields[0], f)
    _check_annulus(box, R)
    mask = annulus_mask(box, R - 2.0, R + 1.0)
    hd = box.h ** box.d
    use_log = any(isinstance(f, LogLatticeField) for f in fields)
    if include_time_integral:
        if times is None or len(times) != len(fields):
            raise ValueError("need one time per field for the time integral")
        w = trapezoid_weights(times)
    else:
        if len(fields) != 1:
            raise ValueError("several fields given without the time-integral flag")
        w = np.ones(1)
    if not use_log:
        per = np.array([hd * float(np.sum(f.values[mask] ** 2)) for f in fields])
        return float(np.dot(w, per))
    logs = []
    for f in fields:
        lf = f if isinstance(f, LogLatticeField) else LogLatticeField.from_linear(f)
        sel = lf.logmags[mask & (lf.signs != 0)]
        logs.append(signed_logsumexp(np.ones(sel.size), 2.0 * sel))
    total = signed_logsumexp([s.sign for s in logs], [s.logmag for s in logs], w)
    if total.sign == 0:
        return total
    return LogScalar(1, total.logmag + math.log(hd))


def trapezoid_weights(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing with at least two samples")
    dt = np.diff(t)
    w = np.zeros(t.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def field_to_csv(f, path) -> None:
    """Write j_1..j_d and value (or sign, logmag) columns."""
    box = f.box
    idx = np.indices(box.shape).reshape(box.d, -1).T - box.extent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"j_{k + 1}" for k in range(box.d)]
        if isinstance(f, LogLatticeField):
            w.writerow(cols + ["sign", "logmag"])
            for row, s, l in zip(idx, f.signs.ravel(), f.logmags.ravel()):
                w.writerow(list(map(int, row)) + [int(s), repr(float(l))])
        else:
            w.writerow(cols + ["value"])
            for row, v in zip(idx, f.values.ravel()):
                w.writerow(list(map(int, row)) + [repr(float(v))])


def fields_equal_on(f: LatticeField, g: LatticeField, mask: np.ndarray) -> bool:
    return bool(np.array_equal(f.values[mask], g.values[mask]))


def embed(f: LatticeField, box: LatticeBox) -> LatticeField:
    """Copy f into a larger (or equal) concentric box, zero elsewhere."""
    if box.d != f.box.d or box.h != f.box.h or box.extent < f.box.extent:
        raise ValueError("target box must be a concentric enlargement")
    v = np.zeros(box.shape)
    off = box.extent - f.box.extent
    sl = tuple(slice(off, off + 2 * f.box.extent + 1) for _ in range(box.d))
    v[sl] = f.values
    return LatticeField(box, v)


def iter_sites(box: LatticeBox) -> Iterable[tuple]:
    for idx in np.ndindex(*box.shape):
        yield tuple(i - box.extent for i in idx)
