"""Predicted accumulation coefficients: closed form, Monte-Carlo phase volume, hydrogen oracle.

All coefficients include the ``(2 pi)^-d`` phase-space normalization, so a
coefficient ``C`` predicts ``n(-t) ~ C t^-theta`` for the eigenvalue count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import betaln, gammaln

NORMALIZATION = "(2pi)^-d phase-space factor included; h_+^d in the closed form"
HALF_POWER_NORMALIZATION = "(2pi)^-d included; h_+^(d/2) variant (inconsistent with the radial integral)"


class QuadratureError(RuntimeError):
    pass


class BoundsError(RuntimeError):
    """Accepted Monte-Carlo samples touched the sampling envelope."""


# ----------------------------------------------------------------------------
# geometry


def unit_ball_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1))


def sphere_area(d: int) -> float:
    """Surface measure of ``S^(d-1)``; 2 for ``d = 1`` (counting measure on ``±1``)."""
    return d * unit_ball_volume(d)


def geometry_constants(d: int) -> tuple[float, float]:
    """``(Omega_d, B(d/2 + 1, d/2))`` via log-Gamma."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return unit_ball_volume(d), math.exp(betaln(0.5 * d + 1, 0.5 * d))


def _check_spd(a2: np.ndarray) -> np.ndarray:
    a2 = np.atleast_2d(np.asarray(a2, float))
    if a2.shape[-1] != a2.shape[-2]:
        raise ValueError(f"a2 must be square, got {a2.shape}")
    if not np.allclose(a2, np.swapaxes(a2, -1, -2), rtol=1e-12, atol=1e-14):
        raise ValueError("a2 must be symmetric")
    lam = np.linalg.eigvalsh(a2)
    if np.any(lam[..., 0] <= 0):
        raise ValueError(f"a2 is not positive definite (smallest eigenvalue {lam[..., 0].min():.3e})")
    return a2


def slice_volume(a2, c: float) -> float:
    """Volume of ``{xi : xi^T a2 xi < c}``."""
    a2 = _check_spd(a2)
    if c <= 0:
        return 0.0
    d = a2.shape[0]
    return unit_ball_volume(d) * np.linalg.det(a2) ** -0.5 * c ** (0.5 * d)


# ----------------------------------------------------------------------------
# direction functions


def sphere_samples(d: int, count: int = 256) -> np.ndarray:
    """Deterministic, roughly uniform points on ``S^(d-1)``."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        phi = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    if d == 3:
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        rho = np.sqrt(1 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise ValueError(f"unsupported dimension {d}")


@dataclass(frozen=True)
class DirectionFunction:
    """Function on ``S^(d-1)``, scalar or symmetric positive-definite form valued.

    ``evaluator`` maps directions ``(P, d)`` to ``(P,)`` or ``(P, d, d)``.
    """

    d: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    form_valued: bool = False
    name: str = ""

    @classmethod
    def constant(cls, d: int, value, name: str = "") -> "DirectionFunction":
        v = np.asarray(value, float)
        form = v.ndim == 2
        if form:
            _check_spd(v)

        def ev(omega, v=v, form=form):
            P = np.asarray(omega).shape[0]
            return np.broadcast_to(v, (P, d, d) if form else (P,)).copy()

        return cls(d, ev, form, name or f"const({value})")

    def __call__(self, omega) -> np.ndarray:
        omega = np.atleast_2d(np.asarray(omega, float))
        P = omega.shape[0]
        val = np.asarray(self.evaluator(omega), float)
        shape = (P, self.d, self.d) if self.form_valued else (P,)
        if val.shape != shape:
            val = np.broadcast_to(val, shape).copy()
        return val

    def default_direction(self) -> np.ndarray:
        e = np.zeros(self.d)
        e[0] = 1.0
        return e

    def sphere_mean(self, count: int = 256) -> np.ndarray:
        return self(sphere_samples(self.d, count)).mean(axis=0)

    def ellipticity(self, count: int = 256) -> tuple[float, np.ndarray]:
        """Smallest eigenvalue of a form-valued field over sampled directions."""
        if not self.form_valued:
            raise ValueError("ellipticity is defined for form-valued fields")
        om = sphere_samples(self.d, count)
        vals = self(om)
        if not np.allclose(vals, np.swapaxes(vals, 1, 2), rtol=1e-12, atol=1e-14):
            raise ValueError("form-valued field is not symmetric")
        lam = np.linalg.eigvalsh(vals)[:, 0]
        i = int(np.argmin(lam))
        return float(lam[i]), om[i]

    def max_value(self, count: int = 256) -> float:
        if self.form_valued:
            raise ValueError("max_value is defined for scalar fields")
        return float(self(sphere_samples(self.d, count)).max())

    def finite_on_antipodes(self, count: int = 64) -> bool:
        om = sphere_samples(self.d, count)
        return bool(np.all(np.isfinite(self(om))) and np.all(np.isfinite(self(-om))))


# ----------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CoefficientReport:
    C: float
    theta: float
    method: str  # closed_form | radial_quadrature | monte_carlo | oracle
    stderr: float = 0.0
    normalization: str = NORMALIZATION
    seeds: tuple = ()
    nodes: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def predicted_counting(report: CoefficientReport, t) -> np.ndarray | float:
    """``C t^-theta``."""
    return report.C * np.asarray(t, float) ** (-report.theta)


def counting_exponent(d: int, kappa: float = 0.5, l: float = 2.0) -> float:
    """``theta = d (1 - kappa) / (kappa l)``.

    For ``H = |xi|^l - |x|^-p`` the phase volume of ``{H < -t}`` scales with
    ``kappa = p / l``; the standard Coulomb case ``p = 1, l = 2`` gives ``d/2``.
    """
    return d * (1 - kappa) / (kappa * l)


# ----------------------------------------------------------------------------
# closed form


def _sphere_integral_2d(f: Callable[[np.ndarray], np.ndarray], tol: float, max_nodes: int) -> tuple[float, int]:
    nodes = 16
    prev = None
    while nodes <= max_nodes:
        om = sphere_samples(2, nodes)
        val = 2 * np.pi * float(np.mean(f(om)))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val, nodes
        if prev is not None and val == prev == 0:
            return 0.0, nodes
        prev = val
        nodes *= 2
    raise QuadratureError(f"S^1 quadrature did not converge with {max_nodes} nodes")


def _sphere_integral_3d(f, tol: float, max_nodes: int) -> tuple[float, int]:
    m = 8
    prev = None
    while 2 * m * m <= max_nodes * 8:
        z, wz = np.polynomial.legendre.leggauss(m)
        nphi = 2 * m
        phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
        Z, PHI = np.meshgrid(z, phi, indexing="ij")
        rho = np.sqrt(1 - Z**2)
        om = np.stack([rho * np.cos(PHI), rho * np.sin(PHI), Z], axis=-1).reshape(-1, 3)
        vals = f(om).reshape(m, nphi)
        val = float(np.sum(wz[:, None] * vals) * 2 * np.pi / nphi)
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val, m * nphi
        if prev is not None and val == prev == 0:
            return 0.0, m * nphi
        prev = val
        m *= 2
    raise QuadratureError("S^2 quadrature did not converge")


def closed_form_coefficient(
    a2: DirectionFunction,
    h: DirectionFunction,
    d: int,
    tol: float = 1e-6,
    max_nodes: int = 1 << 16,
    half_power: bool = False,
) -> CoefficientReport:
    """``C = (2pi)^-d Omega_d B(d/2+1, d/2) ∫_S det(a2)^(-1/2) h_+^d dω``, ``theta = d/2``.

    The radial integral ``∫_0^inf (h/r - 1)_+^(d/2) r^(d-1) dr = h^d B(d/2+1, d/2)``
    fixes the power of ``h``. ``half_power=True`` uses ``h_+^(d/2)`` instead
    and tags the report accordingly; it exists only for comparison.
    """
    if a2.d != d or h.d != d:
        raise ValueError("direction functions must match d")
    power = 0.5 * d if half_power else float(d)

    def integrand(om):
        det = np.linalg.det(a2(om))
        if np.any(det <= 0):
            raise ValueError("a2 is not positive definite on the sphere")
        return det**-0.5 * np.maximum(h(om), 0.0) ** power

    if d == 1:
        I, nodes = float(np.sum(integrand(sphere_samples(1)))), 2
    elif d == 2:
        I, nodes = _sphere_integral_2d(integrand, tol, max_nodes)
    elif d == 3:
        I, nodes = _sphere_integral_3d(integrand, tol, max_nodes)
    else:
        raise ValueError(f"unsupported dimension {d}")
    omega, beta = geometry_constants(d)
    C = (2 * np.pi) ** -d * omega * beta * I
    norm = HALF_POWER_NORMALIZATION if half_power else NORMALIZATION
    return CoefficientReport(float(C), 0.5 * d, "closed_form", 0.0, norm, (), nodes)


def radial_quadrature_coefficient(a2: DirectionFunction, h: DirectionFunction, d: int, tol: float = 1e-10) -> CoefficientReport:
    """Same coefficient with the radial integral done numerically per direction.

    Cross-checks the Beta-function reduction of the closed form.
    """
    from scipy.integrate import quad

    def radial(hv):
        if hv <= 0:
            return 0.0
        val, _ = quad(lambda r: (hv / r - 1) ** (0.5 * d) * r ** (d - 1), 0, hv, epsabs=0, epsrel=tol, limit=200)
        return val

    def integrand(om):
        det = np.linalg.det(a2(om))
        return det**-0.5 * np.array([radial(v) for v in h(om)])

    if d == 1:
        I = float(np.sum(integrand(sphere_samples(1))))
    elif d == 2:
        I, _ = _sphere_integral_2d(integrand, 1e-8, 1 << 12)
    else:
        I, _ = _sphere_integral_3d(integrand, 1e-8, 1 << 10)
    C = (2 * np.pi) ** -d * unit_ball_volume(d) * I
    return CoefficientReport(float(C), 0.5 * d, "radial_quadrature")


# ----------------------------------------------------------------------------
# Monte-Carlo phase volume


@dataclass(frozen=True)
class ScalarHamiltonian:
    """Classical Hamiltonian; ``evaluator(x, xi)`` returns ``(P,)`` or ``(P, branches)``.

    For matrix symbols pass the eigenvalue branches; the phase volume sums the
    indicator over branches.
    """

    d: int
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "H"

    def __call__(self, x, xi) -> np.ndarray:
        return np.asarray(self.evaluator(x, xi), float)

    def check_coercive(self, rng: np.random.Generator, samples: int = 64) -> bool:
        """Sampled check that ``H(x, s xi) -> +inf`` as ``s`` grows."""
        x = rng.normal(size=(samples, self.d))
        xi = rng.normal(size=(samples, self.d))
        a = self(x, 1e3 * xi)
        b = self(x, 1e4 * xi)
        return bool(np.all(b > a) and np.all(b > 0))


@dataclass(frozen=True)
class MCBounds:
    """Envelope ``{|x| < R, xi^T M xi < K |x|^-p}`` with ``0 <= p < 2``.

    ``p = 0`` is a ball times an ellipsoid; ``p > 0`` follows the singular
    shape of the sublevel sets of ``xi^T a2 xi - h |x|^-p``.
    """

    R: float
    M: np.ndarray
    K: float
    p: float = 1.0

    def __post_init__(self):
        if not (self.R > 0 and self.K > 0 and 0 <= self.p < 2):
            raise ValueError("need R > 0, K > 0 and 0 <= p < 2")
        _check_spd(self.M)

    @property
    def d(self) -> int:
        return np.atleast_2d(self.M).shape[0]

    def volume(self) -> float:
        d = self.d
        e = d * (1 - self.p / 2)
        M = np.atleast_2d(self.M)
        return (
            sphere_area(d)
            * unit_ball_volume(d)
            * np.linalg.det(M) ** -0.5
            * self.K ** (d / 2)
            * self.R**e
            / e
        )

    def sample(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Uniform points of the envelope plus their normalized envelope radius."""
        d = self.d
        e = d * (1 - self.p / 2)
        u = rng.random(count)
        r = self.R * u ** (1 / e)
        om = _uniform_sphere(rng, count, d)
        x = r[:, None] * om
        w = _uniform_sphere(rng, count, d) * rng.random(count)[:, None] ** (1 / d)
        rad = np.sqrt(self.K * r ** (-self.p))
        Minv_half = _inv_sqrt(np.atleast_2d(self.M))
        xi = (w * rad[:, None]) @ Minv_half.T
        return x, xi, np.maximum(r / self.R, np.linalg.norm(w, axis=-1))


def _uniform_sphere(rng, count, d):
    if d == 1:
        return np.where(rng.random(count) < 0.5, -1.0, 1.0)[:, None]
    g = rng.normal(size=(count, d))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _inv_sqrt(M):
    lam, V = np.linalg.eigh(M)
    return (V / np.sqrt(lam)) @ V.T


BOUNDARY_MARGIN = 0.99


def phase_volume_mc(
    H: ScalarHamiltonian,
    d: int,
    samples: int,
    bounds: MCBounds,
    level: float = 1.0,
    seed: int = 0,
    streams: int = 4,
    batch: int = 1_000_000,
    theta: float | None = None,
) -> CoefficientReport:
    """Estimate ``(2pi)^-d meas{(x, xi) : H(x, xi) < -level}``.

    Uniform sampling in the envelope, ``streams`` independent generators
    spawned from ``seed``. Raises :class:`BoundsError` when an accepted sample
    lies within 1% of the envelope boundary.
    """
    if H.d != d or bounds.d != d:
        raise ValueError("dimension mismatch between H, bounds and d")
    if samples < streams:
        raise ValueError("need at least one sample per stream")
    children = np.random.SeedSequence(seed).spawn(streams)
    per = [samples // streams + (1 if i < samples % streams else 0) for i in range(streams)]
    total = 0.0
    total_sq = 0.0
    for ss, count in zip(children, per):
        rng = np.random.default_rng(ss)
        done = 0
        while done < count:
            m = min(batch, count - done)
            x, xi, rad = bounds.sample(rng, m)
            vals = H(x, xi)
            hit = vals < -level
            k = hit.sum(axis=1) if hit.ndim == 2 else hit.astype(float)
            acc = k > 0
            if np.any(acc) and rad[acc].max() > BOUNDARY_MARGIN:
                raise BoundsError(
                    f"accepted sample at normalized envelope radius {rad[acc].max():.4f}; enlarge bounds"
                )
            total += float(k.sum())
            total_sq += float((k * k).sum())
            done += m
    W = bounds.volume()
    norm = (2 * np.pi) ** -d
    mean = total / samples
    if total == 0:
        stderr = norm * W * 3.0 / samples
        C = 0.0
    else:
        var = max(total_sq / samples - mean * mean, 0.0)
        stderr = norm * W * math.sqrt(var / samples)
        C = norm * W * mean
    th = 0.5 * d if theta is None else theta
    return CoefficientReport(
        float(C), th, "monte_carlo", float(stderr), NORMALIZATION, (seed, streams), samples,
        {"acceptance": mean, "envelope_volume": W, "level": level},
    )


def power_hamiltonian(a2: DirectionFunction, h: DirectionFunction, p: float = 1.0) -> ScalarHamiltonian:
    """``xi^T a2(omega) xi - h(omega) |x|^-p``, ``omega = x/|x|``."""
    d = a2.d

    def ev(x, xi):
        r = np.linalg.norm(x, axis=-1)
        om = x / np.where(r > 0, r, 1.0)[:, None]
        q = np.einsum("pi,pij,pj->p", xi, a2(om), xi)
        return q - h(om) * np.where(r > 0, r, np.inf) ** -p

    return ScalarHamiltonian(d, ev, f"power(p={p})")


def default_bounds(a2: DirectionFunction, h: DirectionFunction, p: float = 1.0, level: float = 1.0, slack: float = 1.05) -> MCBounds:
    """Envelope for :func:`power_hamiltonian` at ``level``.

    Accepted points satisfy ``|x| < (h_max/level)^(1/p)`` and
    ``gamma0 |xi|^2 <= xi^T a2 xi < h_max |x|^-p``.
    """
    d = a2.d
    om = sphere_samples(d, 512)
    hmax = float(np.max(h(om)))
    if hmax <= 0:
        hmax = 1.0
    gamma0 = float(np.linalg.eigvalsh(a2(om))[:, 0].min())
    # the sampled minimum can slightly overestimate the true minimum; pad it
    M = 0.98 * gamma0 * np.eye(d)
    return MCBounds(slack * (hmax / level) ** (1 / p), M, slack**2 * hmax, p)


# ----------------------------------------------------------------------------
# hydrogen oracle


def hydrogen_levels(q: float = 1.0, n_max: int = 100) -> np.ndarray:
    """Eigenvalues of ``-Laplace - q/|x|`` in 3D, with multiplicity, ascending."""
    n = np.arange(1, n_max + 1)
    return np.repeat(-(q**2) / (4.0 * n**2), n**2)


def hydrogen_count(t, q: float = 1.0) -> np.ndarray:
    """``#{levels < -t}`` counted with multiplicity ``n^2``."""
    t = np.asarray(t, float)
    m = np.ceil(q / (2 * np.sqrt(t))) - 1
    # guard the rounding of the square root at exact level values
    m = np.where(q**2 / (4 * np.maximum(m, 1) ** 2) <= t, m - 1, m)
    m = np.maximum(m, 0)
    m = np.where(q**2 / (4 * (m + 1) ** 2) > t, m + 1, m)
    return (m * (m + 1) * (2 * m + 1) / 6).astype(np.int64)


def hydrogen_coefficient(q: float = 1.0) -> CoefficientReport:
    return CoefficientReport(q**3 / 24.0, 1.5, "oracle")
