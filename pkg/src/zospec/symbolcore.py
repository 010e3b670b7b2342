"""Matrix-valued polyhomogeneous symbols and their pointwise linear algebra.

Symbols are evaluated on batches of phase-space points: an evaluator takes
``x`` and ``xi`` arrays of shape ``(P, d)`` and returns either ``(P,)`` (scalar
symbols) or ``(P, N, N)``. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SymbolError(ValueError):
    """Raised for invalid symbols or evaluation points."""


class ContourError(ValueError):
    """Raised when a contour passes too close to the spectrum or quadrature stalls."""


# ----------------------------------------------------------------------------
# helpers shared by symbol builders


def regularized_norm(xi: np.ndarray, scale: float) -> np.ndarray:
    """``sqrt(scale**2 + |xi|**2)`` along the last axis."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(scale * scale + np.einsum("...i,...i->...", xi, xi))


def unit_direction(v: np.ndarray) -> np.ndarray:
    """Normalize along the last axis; the zero vector maps to ``e_1``."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    e1 = np.zeros(v.shape[-1])
    e1[0] = 1.0
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, v / safe, e1)


def _as_points(a, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size == d else a.reshape(-1, 1)
    if a.shape[-1] != d:
        raise SymbolError(f"expected points with last axis {d}, got shape {a.shape}")
    return a


def _as_matrices(values, npts: int, N: int) -> np.ndarray:
    v = np.asarray(values)
    if v.ndim == 0:
        v = np.broadcast_to(v, (npts,))
    if N == 1 and v.shape == (npts,):
        v = v.reshape(npts, 1, 1)
    if v.shape == (N, N):
        v = np.broadcast_to(v, (npts, N, N))
    if v.shape != (npts, N, N):
        raise SymbolError(f"evaluator returned shape {v.shape}, expected {(npts, N, N)}")
    return v.astype(complex, copy=False)


# ----------------------------------------------------------------------------
# polynomial symbols (exact derivatives)


@dataclass(frozen=True)
class PolynomialForm:
    """Scalar polynomial in ``(x, xi)``: ``{(x_powers, xi_powers): coeff}``."""

    terms: Mapping[tuple[tuple[int, ...], tuple[int, ...]], complex]

    @property
    def d(self) -> int:
        (xp, _), *_ = self.terms.keys()
        return len(xp)

    def __call__(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[0], dtype=complex)
        for (xp, kp), c in self.terms.items():
            out += c * np.prod(x ** np.array(xp), axis=-1) * np.prod(xi ** np.array(kp), axis=-1)
        return out

    def derivative(self, x_orders: Sequence[int], xi_orders: Sequence[int]) -> "PolynomialForm":
        new: dict = {}
        for (xp, kp), c in self.terms.items():
            coef = complex(c)
            nxp, nkp = [], []
            for p, m in zip(xp, x_orders):
                if m > p:
                    coef = 0.0
                    break
                coef *= math.perm(p, m)
                nxp.append(p - m)
            else:
                for p, m in zip(kp, xi_orders):
                    if m > p:
                        coef = 0.0
                        break
                    coef *= math.perm(p, m)
                    nkp.append(p - m)
            if coef != 0:
                key = (tuple(nxp), tuple(nkp))
                new[key] = new.get(key, 0) + coef
        if not new:
            zero = tuple([0] * len(x_orders))
            new = {(zero, zero): 0.0}
        return PolynomialForm(new)

    def scaled(self, factor: complex) -> "PolynomialForm":
        return PolynomialForm({k: factor * c for k, c in self.terms.items()})

    def __add__(self, other: "PolynomialForm") -> "PolynomialForm":
        new = dict(self.terms)
        for k, c in other.terms.items():
            new[k] = new.get(k, 0) + c
        kept = {k: c for k, c in new.items() if c != 0}
        if not kept:
            zero = tuple([0] * self.d)
            kept = {(zero, zero): 0.0}
        return PolynomialForm(kept)


# ----------------------------------------------------------------------------
# symbol types


@dataclass(frozen=True)
class SymbolComponent:
    """One homogeneous term ``a_order(x, xi)`` of a polyhomogeneous symbol.

    ``polynomial`` (scalar symbols only) enables exact derivatives;
    ``x_dependent=False`` lets derivative-based operations skip x-derivatives.
    """

    order: int
    evaluator: Evaluator | None = None
    homogeneous: bool = True
    polynomial: PolynomialForm | None = None
    x_dependent: bool = True
    regularization_scale: float = 1.0

    def __post_init__(self):
        if self.evaluator is None and self.polynomial is None:
            raise SymbolError("component needs an evaluator or a polynomial form")

    def __call__(self, x, xi) -> np.ndarray:
        if self.polynomial is not None:
            return self.polynomial(x, xi)
        return self.evaluator(x, xi)


def homogeneous_component(
    order: int,
    angular: Callable[[np.ndarray, np.ndarray], np.ndarray],
    scale: float = 1.0,
    x_dependent: bool = True,
) -> SymbolComponent:
    """Component ``angular(x, omega) * (scale**2 + |xi|**2)**(order/2)``.

    ``omega = xi/|xi|`` (``e_1`` at ``xi = 0``). ``angular`` returns ``(P,)`` or
    ``(P, N, N)``.
    """

    def ev(x, xi):
        val = np.asarray(angular(x, unit_direction(xi)))
        if order == 0:
            return val
        w = regularized_norm(xi, scale) ** order
        return val * (w if val.ndim == 1 else w[:, None, None])

    return SymbolComponent(order, ev, True, None, x_dependent, scale)


@dataclass(frozen=True)
class PolyhomSymbol:
    """Sum of components with unique orders, stored in decreasing order."""

    d: int
    N: int
    components: tuple[SymbolComponent, ...]
    name: str = "symbol"
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        orders = [c.order for c in self.components]
        if len(set(orders)) != len(orders):
            raise SymbolError(f"component orders must be unique, got {orders}")
        object.__setattr__(
            self, "components", tuple(sorted(self.components, key=lambda c: -c.order))
        )

    @property
    def orders(self) -> list[int]:
        return [c.order for c in self.components]

    def component(self, order: int) -> SymbolComponent | None:
        for c in self.components:
            if c.order == order:
                return c
        return None

    def evaluate(self, x, xi, orders: Sequence[int] | None = None) -> np.ndarray:
        """Sum of the selected components at the points, shape ``(P, N, N)``."""
        x = _as_points(x, self.d)
        xi = _as_points(xi, self.d)
        x, xi = np.broadcast_arrays(x, xi)
        out = np.zeros((x.shape[0], self.N, self.N), dtype=complex)
        for c in self.components:
            if orders is None or c.order in orders:
                out += _as_matrices(c(x, xi), x.shape[0], self.N)
        return out

    __call__ = evaluate

    def principal(self, x, xi) -> np.ndarray:
        return self.evaluate(x, xi, orders=[0])

    @property
    def x_dependent(self) -> bool:
        return any(c.x_dependent for c in self.components)


def check_homogeneity(
    component: SymbolComponent, d: int, rng: np.random.Generator, samples: int = 32
) -> float:
    """Largest relative homogeneity defect over random ``(x, xi, tau)``.

    Sampled at ``|xi| >= 1e3 * scale`` where the regularization is negligible.
    """
    base = 1e3 * max(1.0, component.regularization_scale)
    x = rng.normal(size=(samples, d))
    xi = unit_direction(rng.normal(size=(samples, d))) * rng.uniform(base, 2 * base, (samples, 1))
    tau = rng.uniform(0.5, 4.0, samples)
    a = np.asarray(component(x, xi))
    b = np.asarray(component(x, xi * tau[:, None]))
    scale = tau ** component.order
    if a.ndim == 3:
        scale = scale[:, None, None]
    num = np.abs(b - scale * a).reshape(samples, -1).max(axis=1)
    den = np.maximum(np.abs(scale * a).reshape(samples, -1).max(axis=1), 1e-300)
    return float((num / den).max())


# ----------------------------------------------------------------------------
# pointwise spectral data


@dataclass(frozen=True)
class EigenBranchSet:
    values: np.ndarray  # non-increasing
    vectors: np.ndarray  # columns


def _check_hermitian(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SymbolError(f"expected a square matrix, got shape {m.shape}")
    defect = np.linalg.norm(m - m.conj().T)
    if defect > HERMITIAN_RTOL * max(np.linalg.norm(m), 1.0):
        raise SymbolError(f"matrix is not Hermitian: ||m - m*|| = {defect:.3e}")
    return 0.5 * (m + m.conj().T)


def fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry real non-negative (lowest index on ties)."""
    v = np.array(vectors, dtype=complex)
    mags = np.abs(v)
    for j in range(v.shape[1]):
        top = mags[:, j].max()
        i = int(np.flatnonzero(mags[:, j] >= top * (1 - 1e-12))[0])
        if mags[i, j] > 0:
            v[:, j] *= np.conj(v[i, j]) / mags[i, j]
            v[i, j] = abs(v[i, j])
    return v


def eigen_branches(m) -> EigenBranchSet:
    """Eigenvalues in non-increasing order with phase-fixed orthonormal eigenvectors."""
    h = _check_hermitian(m)
    w, v = np.linalg.eigh(h)
    order = np.argsort(-w, kind="stable")
    return EigenBranchSet(w[order], fix_phase(v[:, order]))


@dataclass(frozen=True)
class Contour:
    """Counter-clockwise circle used for Riesz-type contour integrals."""

    center: complex
    radius: float
    nodes: int = 64

    def __post_init__(self):
        if not self.radius > 0:
            raise ContourError("contour radius must be positive")
        if self.nodes < 8:
            raise ContourError("contour needs at least 8 nodes")

    def points(self, nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``zeta_k`` and weights ``w_k`` with ``(2 pi i)^-1 ∮ f ≈ Σ w_k f(zeta_k)``."""
        n = nodes or self.nodes
        e = np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
        return self.center + self.radius * e, self.radius * e / n

    def inside(self, z) -> np.ndarray:
        return np.abs(np.asarray(z) - self.center) < self.radius


MAX_CONTOUR_NODES = 1024


def _check_contour_clearance(eigs: np.ndarray, c: Contour) -> None:
    gap = np.abs(np.abs(eigs - c.center) - c.radius)
    bad = gap <= 1e-8 * c.radius
    if bad.any():
        raise ContourError(
            f"eigenvalue {eigs[bad][0]:.12g} lies on the contour "
            f"(center {c.center}, radius {c.radius})"
        )


def _resolvent(m: np.ndarray, z: complex) -> np.ndarray:
    return np.linalg.inv(m - z * np.eye(m.shape[0]))


def riesz_projector(m, c: Contour, tol: float = 1e-8, change_tol: float = 1e-12) -> np.ndarray:
    """Spectral projector onto the eigenvalues of ``m`` inside the circle.

    Trapezoid rule on the circle, doubling the node count until the idempotency
    residual ``||P^2 - P||`` is below ``tol`` and the result changes by at most
    ``change_tol`` under one more doubling.
    """
    h = _check_hermitian(m)
    _check_contour_clearance(np.linalg.eigvalsh(h), c)
    nodes = c.nodes
    prev = None
    while True:
        zs, ws = c.points(nodes)
        # (2 pi i)^-1 ∮ (zeta - A)^-1 dzeta, counter-clockwise
        P = sum(w * -_resolvent(h, z) for z, w in zip(zs, ws))
        P = 0.5 * (P + P.conj().T)
        resid = np.linalg.norm(P @ P - P)
        if resid <= tol and prev is not None and np.linalg.norm(P - prev) <= change_tol:
            return P
        if nodes >= MAX_CONTOUR_NODES:
            raise ContourError(f"contour quadrature did not converge: ||P^2-P|| = {resid:.3e}")
        prev = P
        nodes *= 2


def eigen_projector(m, c: Contour) -> np.ndarray:
    """Same projector built from :func:`eigen_branches`."""
    br = eigen_branches(m)
    sel = c.inside(br.values)
    v = br.vectors[:, sel]
    return v @ v.conj().T


def resolvent_correction(
    a0,
    b,
    da0_dx: Sequence[np.ndarray],
    da0_dxi: Sequence[np.ndarray],
    c: Contour,
    tol: float = 1e-12,
) -> np.ndarray:
    """``(2 pi i)^-1 ∮ c(zeta) dzeta`` (counter-clockwise) for the order -1 resolvent term.

    ``c(zeta) = -(a0-zeta)^-1 q(zeta) (a0-zeta)^-1`` with
    ``q(zeta) = b + (1/2i) Σ_j (d_xj a0)(a0-zeta)^-1 (d_xij a0)``.
    """
    a0 = np.asarray(a0, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_contour_clearance(np.linalg.eigvalsh(_check_hermitian(a0)), c)
    dx = [np.asarray(m, dtype=complex) for m in da0_dx]
    dk = [np.asarray(m, dtype=complex) for m in da0_dxi]
    if len(dx) != len(dk):
        raise SymbolError("da0_dx and da0_dxi must have the same length")

    def integrand(z):
        R = _resolvent(a0, z)
        q = b.copy()
        for gx, gk in zip(dx, dk):
            q = q + (gx @ R @ gk) / 2j
        return -R @ q @ R

    nodes = c.nodes
    prev = None
    while True:
        zs, ws = c.points(nodes)
        val = sum(w * integrand(z) for z, w in zip(zs, ws))
        scale = max(np.linalg.norm(val), 1.0)
        if prev is not None and np.linalg.norm(val - prev) <= tol * scale:
            return val
        if nodes >= MAX_CONTOUR_NODES:
            raise ContourError(
                f"contour quadrature did not converge: change {np.linalg.norm(val - prev):.3e}"
            )
        prev = val
        nodes *= 2


# ----------------------------------------------------------------------------
# derivatives of symbols


def _stencil(order: int) -> list[tuple[int, float]]:
    if order == 0:
        return [(0, 1.0)]
    if order == 1:
        return [(-1, -0.5), (1, 0.5)]
    if order == 2:
        return [(-1, 1.0), (0, -2.0), (1, 1.0)]
    raise SymbolError(f"finite-difference stencil of order {order} not supported")


def mixed_derivative(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x: np.ndarray,
    xi: np.ndarray,
    x_orders: Sequence[int],
    xi_orders: Sequence[int],
    rel_step: float | None = None,
) -> np.ndarray:
    """``d_x^a d_xi^b f`` by tensor-product central differences plus one Richardson step.

    Steps are ``rel_step * max(1, |x|)`` in x and ``rel_step * max(1, |xi|)`` in xi.
    The default ``rel_step`` balances truncation and round-off for the total order.
    """
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    d = x.shape[-1]
    total = sum(x_orders) + sum(xi_orders)
    if total == 0:
        return np.asarray(f(x, xi))
    if rel_step is None:
        rel_step = 1e-4 if total <= 2 else 10 ** (-16 / (total + 2))
    hx = rel_step * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    hk = rel_step * np.maximum(1.0, np.linalg.norm(xi, axis=-1))
    orders = list(x_orders) + list(xi_orders)

    def estimate(sx, sk):
        acc = 0.0
        for combo in itertools.product(*[_stencil(o) for o in orders]):
            w = 1.0
            dxv = np.zeros_like(x)
            dkv = np.zeros_like(xi)
            for axis, (off, wt) in enumerate(combo):
                w *= wt
                if axis < d:
                    dxv[..., axis] = off * sx
                else:
                    dkv[..., axis - d] = off * sk
            val = np.asarray(f(x + dxv, xi + dkv))
            acc = acc + w * val
        denom = np.prod([sx ** o for o in x_orders], axis=0) * np.prod(
            [sk ** o for o in xi_orders], axis=0
        )
        denom = np.asarray(denom)
        if np.ndim(acc) == 3:
            denom = denom[:, None, None]
        return acc / denom

    coarse = estimate(hx, hk)
    fine = estimate(hx / 2, hk / 2)
    return (4 * fine - coarse) / 3


def _component_derivative(comp: SymbolComponent, x, xi, x_orders, xi_orders, N: int):
    npts = x.shape[0]
    if comp.polynomial is not None:
        return _as_matrices(comp.polynomial.derivative(x_orders, xi_orders)(x, xi), npts, N)
    if sum(x_orders) > 0 and not comp.x_dependent:
        return np.zeros((npts, N, N), dtype=complex)
    return _as_matrices(mixed_derivative(comp, x, xi, x_orders, xi_orders), npts, N)


def subprincipal_symbol(s: PolyhomSymbol, x, xi) -> np.ndarray:
    """``a_{-1}(x, xi) + (1/2i) Σ_j d_xi_j d_x_j a_0(x, xi)`` at one point."""
    x = _as_points(x, s.d)
    xi = _as_points(xi, s.d)
    if np.any(np.linalg.norm(xi, axis=-1) == 0):
        raise SymbolError("subprincipal symbol is undefined at xi = 0")
    a0 = s.component(0)
    am1 = s.component(-1)
    if a0 is None:
        raise SymbolError("symbol has no order-0 component")
    out = np.zeros((x.shape[0], s.N, s.N), dtype=complex)
    if am1 is not None:
        out += _as_matrices(am1(x, xi), x.shape[0], s.N)
    for j in range(s.d):
        e = [0] * s.d
        e[j] = 1
        out += _component_derivative(a0, x, xi, e, e, s.N) / 2j
    return out[0] if out.shape[0] == 1 else out


# ----------------------------------------------------------------------------
# change of quantization


def _multi_indices(d: int, k: int):
    for combo in itertools.product(range(k + 1), repeat=d):
        if sum(combo) == k:
            yield combo


MAX_FD_ALPHA = 2


def convert_quantization(
    s: PolyhomSymbol, direction: str, order_cutoff: int = -1
) -> PolyhomSymbol:
    """Re-express a symbol in the other quantization by the derivative series.

    ``weyl_to_left``: ``a_l = Σ_a (1/a!) (1/2)^|a| d_xi^a D_x^a a_W``;
    ``left_to_weyl`` uses ``-1/2``. ``D_x = -i d_x``. Terms of order below
    ``order_cutoff`` are dropped. Polynomial components are differentiated
    exactly; black-box components by finite differences up to ``|a| = 2``.
    """
    if direction not in ("weyl_to_left", "left_to_weyl"):
        raise SymbolError(f"unknown direction {direction!r}")
    if order_cutoff < -2:
        raise SymbolError("order_cutoff must be >= -2")
    sign = 0.5 if direction == "weyl_to_left" else -0.5
    terms: dict[int, list] = {}
    for comp in s.components:
        max_alpha = comp.order - order_cutoff
        if max_alpha < 0:
            continue
        if comp.polynomial is None:
            max_alpha = min(max_alpha, MAX_FD_ALPHA)
        if not comp.x_dependent:
            max_alpha = 0
        for k in range(max_alpha + 1):
            for alpha in _multi_indices(s.d, k):
                coef = sign**k * (-1j) ** k / np.prod([math.factorial(a) for a in alpha])
                terms.setdefault(comp.order - k, []).append((comp, alpha, coef))

    comps = []
    for order, items in terms.items():
        polys = [(c, a, k) for c, a, k in items if c.polynomial is not None]
        if len(polys) == len(items):
            poly = None
            for c, a, k in polys:
                p = c.polynomial.derivative(a, a).scaled(k)
                poly = p if poly is None else poly + p
            comps.append(
                SymbolComponent(order, None, False, poly, any(c.x_dependent for c, _, _ in items))
            )
            continue

        def ev(x, xi, items=items):
            tot = 0
            for c, a, k in items:
                tot = tot + k * _component_derivative(c, x, xi, a, a, s.N)
            return tot

        homog = all(c.homogeneous for c, _, _ in items)
        scale = max(c.regularization_scale for c, _, _ in items)
        comps.append(
            SymbolComponent(order, ev, homog, None, any(c.x_dependent for c, _, _ in items), scale)
        )
    target = "left" if direction == "weyl_to_left" else "weyl"
    meta = dict(s.meta)
    meta["quantization"] = target
    return PolyhomSymbol(s.d, s.N, tuple(comps), f"{s.name}->{target}", meta)


# ----------------------------------------------------------------------------
# essential spectrum


def merge_intervals(intervals, tol: float = 1e-12) -> list[tuple[float, float]]:
    out: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def essential_spectrum(s: PolyhomSymbol, x_samples, omega_samples) -> list[tuple[float, float]]:
    """Range of the principal-symbol eigenvalue branches over the sampled cosphere.

    Returns closed intervals ``(lo, hi)``; isolated points have ``lo == hi``.
    """
    xs = _as_points(x_samples, s.d)
    ws = unit_direction(_as_points(omega_samples, s.d))
    if xs.size == 0 or ws.size == 0:
        raise SymbolError("sample sets must be nonempty")
    X = np.repeat(xs, ws.shape[0], axis=0)
    W = np.tile(ws, (xs.shape[0], 1))
    vals = np.linalg.eigvalsh(s.principal(X, W))[:, ::-1]
    lo = vals.min(axis=0)
    hi = vals.max(axis=0)
    return merge_intervals(zip(lo, hi))
