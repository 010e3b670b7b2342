"""Eigenvalues, counting functions near a spectral tip, Sturm counts and power-law fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np
import scipy.linalg as sla
from scipy import stats

from .quantize import HermitianOperator, SchrodingerSpec, schrodinger_tridiagonal

PER_DECADE = 12
MIN_FIT_POINTS = 5
REAL_TOL = 1e-14


class SpectraError(RuntimeError):
    pass


class FitError(ValueError):
    pass


# ----------------------------------------------------------------------------
# eigenvalues


def eigenvalues(op: HermitianOperator) -> np.ndarray:
    """All eigenvalues in ascending order."""
    try:
        if op.storage == "dense":
            A = op.matrix
            # FFT kernels of real even symbols are real up to rounding
            if np.iscomplexobj(A) and np.abs(A.imag).max(initial=0.0) <= REAL_TOL * np.abs(A).max(initial=0.0):
                A = A.real
            return sla.eigvalsh(A, check_finite=True)
        band = op.matrix
        if band.shape[0] == 2:
            # a Hermitian tridiagonal matrix is unitarily similar to the real one with |e|
            return sla.eigvalsh_tridiagonal(band[1].real, np.abs(band[0, 1:]))
        return sla.eig_banded(band, lower=False, eigvals_only=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SpectraError(f"eigensolver failed for {op.storage} matrix of size {op.size}: {exc}") from exc


# ----------------------------------------------------------------------------
# counting


@dataclass(frozen=True)
class CountingFunction:
    """Counts of eigenvalues beyond distance ``t`` from the tip ``reference``.

    ``side='above'`` counts ``λ > reference + t``; ``'below'`` counts ``λ < reference - t``.
    """

    eigenvalues: np.ndarray
    reference: float = 0.0
    side: str = "below"
    resolution_floor: float = 0.0

    def __post_init__(self):
        if self.side not in ("above", "below"):
            raise ValueError(f"side must be 'above' or 'below', got {self.side!r}")
        ev = np.sort(np.asarray(self.eigenvalues, float))
        object.__setattr__(self, "eigenvalues", ev)

    def count(self, t) -> np.ndarray | int:
        t = np.asarray(t, float)
        if np.any(t <= 0):
            raise ValueError("t must be positive")
        ev = self.eigenvalues
        if self.side == "above":
            out = ev.size - np.searchsorted(ev, self.reference + t, side="right")
        else:
            out = np.searchsorted(ev, self.reference - t, side="left")
        return int(out) if out.ndim == 0 else out.astype(np.int64)

    def flagged(self, t) -> np.ndarray | bool:
        r = np.asarray(t, float) < self.resolution_floor
        return bool(r) if r.ndim == 0 else r


def counting(cf: CountingFunction, t: float) -> int:
    return cf.count(t)


@dataclass(frozen=True)
class CountSamples:
    t: np.ndarray
    n: np.ndarray
    flagged: np.ndarray

    def pairs(self) -> list[tuple[float, int]]:
        return list(zip(self.t.tolist(), self.n.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "n", "flagged"])
        for t, n, f in zip(self.t, self.n, self.flagged):
            w.writerow([repr(float(t)), int(n), int(bool(f))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CountSamples":
        rows = list(csv.DictReader(io.StringIO(text)))
        t = np.array([float(r["t"]) for r in rows])
        n = np.array([int(float(r["n"])) for r in rows])
        f = np.array([bool(int(r.get("flagged", 0) or 0)) for r in rows])
        return cls(t, n, f)


def t_grid(lo: float, hi: float, per_decade: int = PER_DECADE) -> np.ndarray:
    """Geometric grid from ``lo`` with ``per_decade`` points per decade, up to ``hi``."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    k = int(math.floor(per_decade * math.log10(hi / lo) + 1e-9))
    return lo * 10.0 ** (np.arange(k + 1) / per_decade)


def count_samples(cf: CountingFunction, ts) -> CountSamples:
    ts = np.asarray(ts, float)
    return CountSamples(ts, np.asarray(cf.count(ts)), np.asarray(cf.flagged(ts)))


# ----------------------------------------------------------------------------
# Sturm counts


@numba.njit(cache=True)
def _sturm_negatives(diag, off2, shift):
    """Number of negative pivots of ``T - shift`` (= eigenvalues below ``shift``)."""
    n = diag.shape[0]
    scale = 0.0
    for i in range(n):
        a = abs(diag[i])
        if a > scale:
            scale = a
    pivmin = 1e-300 + 1e-16 * scale
    count = 0
    d = diag[0] - shift
    if abs(d) < pivmin:
        d = -pivmin
    if d < 0:
        count += 1
    for i in range(1, n):
        d = diag[i] - shift - off2[i - 1] / d
        if abs(d) < pivmin:
            d = -pivmin
        if d < 0:
            count += 1
    return count


@numba.njit(cache=True)
def _sturm_many(diag, off2, shifts):
    out = np.empty(shifts.shape[0], dtype=np.int64)
    for k in range(shifts.shape[0]):
        out[k] = _sturm_negatives(diag, off2, shifts[k])
    return out


def sturm_counts(diag: np.ndarray, off: np.ndarray, shifts) -> np.ndarray:
    """Eigenvalues strictly below each shift of the tridiagonal ``(diag, off)``."""
    diag = np.ascontiguousarray(np.real(diag), dtype=np.float64)
    off2 = np.ascontiguousarray(np.abs(off) ** 2, dtype=np.float64)
    shifts = np.atleast_1d(np.asarray(shifts, np.float64))
    return _sturm_many(diag, off2, shifts)


def sturm_count_1d(spec: SchrodingerSpec, t, L: float, n: int) -> np.ndarray | int:
    """Number of eigenvalues ``< -t`` of the 1D Dirichlet operator on ``[-L, L]``."""
    if spec.d != 1:
        raise ValueError("sturm_count_1d requires d = 1")
    diag, off = schrodinger_tridiagonal(spec, L, n)
    t_arr = np.asarray(t, float)
    out = sturm_counts(diag, off, -np.atleast_1d(t_arr))
    return int(out[0]) if t_arr.ndim == 0 else out


# ----------------------------------------------------------------------------
# resolution floors


def schrodinger_floor(L: float, gamma0: float, h_max: float) -> float:
    """Smallest trustworthy ``t`` for a Dirichlet box of half-width ``L``.

    The lowest box mode sits at ``(pi/2L)^2 gamma0``; bound states of energy
    ``-t`` extend to ``|x| ~ h_max/t``, so ``t`` must exceed ``~ 2 h_max / L``.
    """
    return max((np.pi / (2 * L)) ** 2 * gamma0, 2 * h_max / L)


def psdo_floor(L: float, n: int, h_max: float) -> float:
    """``h_max / K`` with ``K = pi n / (2L)``: the subsymbol size at the resolved frequency scale."""
    return h_max * 2 * L / (np.pi * n)


# ----------------------------------------------------------------------------
# power-law fits


@dataclass(frozen=True)
class FitResult:
    C: float
    theta: float
    window: tuple[float, float]
    r_squared: float
    point_count: int
    C_stderr: float = float("nan")
    theta_stderr: float = float("nan")
    theta_fixed: float | None = None
    C_fixed: float | None = None
    C_fixed_stderr: float | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy t_lo < t_hi")

    def log_C_halfwidth(self, level: float = 0.95) -> float:
        """Half-width of the confidence interval for ``log C``."""
        dof = max(self.point_count - 2, 1)
        return float(stats.t.ppf(0.5 + level / 2, dof) * self.C_stderr / self.C)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _as_tn(samples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, CountSamples):
        return samples.t.astype(float), samples.n.astype(float)
    arr = np.asarray(list(samples), float)
    if arr.size == 0:
        return np.zeros(0), np.zeros(0)
    return arr[:, 0], arr[:, 1]


def fit_power_law(samples, window: Sequence[float], theta_fixed: float | None = None) -> FitResult:
    """Least squares of ``log n`` on ``log t`` inside ``window``: ``n ≈ C t^-theta``.

    Points with ``n = 0`` are dropped with a note. ``theta_fixed`` additionally
    reports the best ``C`` with the exponent held fixed.
    """
    t, n = _as_tn(samples)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise FitError("window must satisfy t_lo < t_hi")
    inside = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    notes = []
    zero = inside & (n <= 0)
    if zero.any():
        notes.append(f"dropped {int(zero.sum())} zero-count points")
    m = inside & (n > 0)
    k = int(m.sum())
    if k < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} positive counts in window [{lo:g}, {hi:g}], got {k}")
    x = np.log(t[m])
    y = np.log(n[m])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise FitError("all samples share one t value")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    icpt = ym - slope * xm
    resid = y - (icpt + slope * x)
    ssr = float((resid**2).sum())
    sst = float(((y - ym) ** 2).sum())
    if sst > 0:
        r2 = 1.0 - ssr / sst
    else:
        # constant counts carry no slope information
        r2 = 0.0
        notes.append("constant counts in window")
    s2 = ssr / (k - 2)
    se_slope = math.sqrt(s2 / sxx)
    se_icpt = math.sqrt(s2 * (1.0 / k + xm * xm / sxx))
    C = math.exp(icpt)
    Cf = Cfs = None
    if theta_fixed is not None:
        z = y + theta_fixed * x
        Cf = float(math.exp(z.mean()))
        Cfs = float(Cf * z.std(ddof=1) / math.sqrt(k))
    return FitResult(
        C, -slope, (lo, hi), float(min(max(r2, 0.0), 1.0)), k,
        C * se_icpt, se_slope, theta_fixed, Cf, Cfs, tuple(notes),
    )


def default_window(floor: float) -> tuple[float, float]:
    """One decade starting at the resolution floor."""
    return (floor, 10.0 * floor)


def auto_window(samples, floor: float, per_decade: int = PER_DECADE, theta_fixed: float | None = None) -> FitResult:
    """Fit on the decade with maximal ``r^2`` among starts in ``[floor, 10 floor]``.

    Candidate decades need at least five positive counts; ties go to the
    smallest start.
    """
    best = None
    for k in range(per_decade + 1):
        s = floor * 10.0 ** (k / per_decade)
        try:
            f = fit_power_law(samples, (s, 10 * s), theta_fixed)
        except FitError:
            continue
        if best is None or f.r_squared > best.r_squared + 1e-12:
            best = f
    if best is None:
        raise FitError(f"no decade above floor {floor:g} has {MIN_FIT_POINTS} positive counts")
    return best
