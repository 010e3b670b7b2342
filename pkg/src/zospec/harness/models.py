"""Model problems: zero-order scalar and vector operators near a spectral tip, Schrodinger operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..asymptotics import (
    CoefficientReport,
    DirectionFunction,
    closed_form_coefficient,
    hydrogen_coefficient,
    sphere_samples,
)
from ..npelast import plus_projector
from ..quantize import (
    SchrodingerSpec,
    assemble_operator,
    assemble_schrodinger,
    make_grid,
    smooth_weight,
)
from ..spectra import (
    CountingFunction,
    CountSamples,
    count_samples,
    eigenvalues,
    psdo_floor,
    schrodinger_floor,
    sturm_counts,
)
from ..quantize import schrodinger_tridiagonal
from ..symbolcore import PolyhomSymbol, SymbolComponent, SymbolError, unit_direction

KINDS = ("scalar_psdo", "vector_psdo", "schrodinger")


class ModelError(ValueError):
    pass


@dataclass
class ModelProblem:
    """A model operator together with its spectral tip and predicted coefficient.

    ``reference``/``side`` locate the tip; ``expected`` is the predicted
    coefficient (``None`` when only the exponent is predicted).
    """

    kind: str
    model_id: str
    d: int
    reference: float
    side: str
    symbol: PolyhomSymbol | None = None
    spec: SchrodingerSpec | None = None
    expected: CoefficientReport | None = None
    quantization: str = "weyl"
    h_max: float = 1.0
    gamma0: float = 1.0
    ladder: tuple[tuple[float, int], ...] = ()
    exact_levels: Callable[[float], np.ndarray] | None = None
    coefficient_checked: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")

    @property
    def theta_expected(self) -> float:
        return self.expected.theta if self.expected is not None else 0.5 * self.d

    # -- spectra at one grid level -------------------------------------------------

    def floor(self, L: float, n: int) -> float:
        if self.kind == "schrodinger":
            if self.exact_levels is not None:
                return self.h_max / L
            return schrodinger_floor(L, self.gamma0, self.h_max)
        return psdo_floor(L, n, self.h_max)

    def counting_function(self, L: float, n: int) -> CountingFunction:
        """Full eigenvalue list at one level (dense and exact paths)."""
        fl = self.floor(L, n)
        if self.exact_levels is not None:
            ev = self.exact_levels(L)
        elif self.kind == "schrodinger":
            ev = eigenvalues(assemble_schrodinger(self.spec, make_grid(self.d, L, n, dense=False)))
        else:
            ev = eigenvalues(self.operator(L, n))
        return CountingFunction(ev, self.reference, self.side, fl)

    def operator(self, L: float, n: int):
        if self.kind == "schrodinger":
            return assemble_schrodinger(self.spec, make_grid(self.d, L, n, dense=False))
        grid = make_grid(self.d, L, n, self.symbol.N)
        return assemble_operator(self.symbol, grid, self.quantization)

    def samples(self, L: float, n: int, ts) -> CountSamples:
        ts = np.asarray(ts, float)
        if self.kind == "schrodinger" and self.d == 1 and self.exact_levels is None:
            diag, off = schrodinger_tridiagonal(self.spec, L, n)
            counts = sturm_counts(diag, off, self.reference - ts)
            return CountSamples(ts, counts, ts < self.floor(L, n))
        return count_samples(self.counting_function(L, n), ts)


# ----------------------------------------------------------------------------
# builders


def _form(value, d: int) -> DirectionFunction:
    if isinstance(value, DirectionFunction):
        return value
    v = np.asarray(value, float)
    if v.ndim == 0:
        v = v * np.eye(d)
    return DirectionFunction.constant(d, v)


def _scalar(value, d: int) -> DirectionFunction:
    if isinstance(value, DirectionFunction):
        return value
    return DirectionFunction.constant(d, float(value))


def _surgery_factor(x: np.ndarray, delta: float, depth: float) -> np.ndarray:
    r = np.linalg.norm(x, axis=-1)
    return 1.0 - depth * smooth_weight(np.maximum(r - delta, 0.0), delta)


def scalar_components(
    d: int,
    g: DirectionFunction,
    h: DirectionFunction,
    beta: float = 0.0,
    freeze: bool = False,
    surgery: tuple[float, float] | None = None,
) -> tuple[Callable, Callable]:
    """Evaluators of ``a0 = 1/(1 + x.g(w)x)`` and ``a_-1 = h(w) (1+|xi|^2)^(-1/2) m(x)``.

    ``m(x) = 1 - beta |x|^2/(1+|x|^2)`` (``m = 1`` when frozen at ``x = 0``);
    ``surgery = (delta, depth)`` lowers ``a0`` only outside ``|x| <= delta``.
    """

    def a0(x, xi):
        om = unit_direction(xi)
        q = np.einsum("pi,pij,pj->p", x, g(om), x)
        val = 1.0 / (1.0 + q)
        if surgery is not None:
            val = val * _surgery_factor(x, *surgery)
        return val

    def am1(x, xi):
        om = unit_direction(xi)
        val = h(om) / np.sqrt(1.0 + np.einsum("pi,pi->p", xi, xi))
        if beta and not freeze:
            r2 = np.einsum("pi,pi->p", x, x)
            val = val * (1.0 - beta * r2 / (1.0 + r2))
        return val

    return a0, am1


def build_scalar_model(
    d: int = 1,
    g=1.0,
    h=1.0,
    beta: float = 0.0,
    freeze: bool = False,
    surgery: tuple[float, float] | None = None,
    ladder=None,
    quantization: str = "weyl",
    model_id: str | None = None,
) -> ModelProblem:
    """Scalar operator with principal maximum 1 at ``x = 0`` and positive subsymbol ``h``.

    Tip ``1`` from above. The predicted coefficient is the closed form with
    ``g`` as the quadratic form and ``h`` as the amplitude (Fourier-swapped roles).
    """
    if d not in (1, 2):
        raise ModelError("scalar model supports d = 1, 2")
    gf, hf = _form(g, d), _scalar(h, d)
    om = sphere_samples(d, 256)
    hv = hf(om)
    if np.any(hv <= 0):
        raise ModelError("subsymbol amplitude h must be strictly positive at the critical point")
    gamma0, _ = gf.ellipticity()
    if gamma0 <= 0:
        raise ModelError("g must be positive definite")
    a0, am1 = scalar_components(d, gf, hf, beta, freeze, surgery)
    sym = PolyhomSymbol(
        d, 1,
        (SymbolComponent(0, a0), SymbolComponent(-1, am1, x_dependent=bool(beta) and not freeze)),
        name=model_id or f"scalar{d}d",
    )
    expected = closed_form_coefficient(gf, hf, d)
    if ladder is None:
        ladder = ((2.0, 512), (2.0, 1024)) if d == 1 else ((1.0, 48), (1.0, 64))
    m = ModelProblem(
        "scalar_psdo", model_id or f"scalar-d{d}", d, 1.0, "above", symbol=sym,
        expected=expected, quantization=quantization, h_max=float(hv.max()), gamma0=gamma0,
        ladder=tuple(ladder),
        params={"beta": beta, "freeze": freeze, "surgery": surgery},
    )
    check_setting(m)
    return m


def check_setting(m: ModelProblem, delta: float = 0.5, samples: int = 2000, seed: int = 0) -> None:
    """Sampled check of the tip shape: quadratic near ``x = 0``, bounded away outside ``|x| <= delta``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (samples, m.d)) * 3 * delta
    xi = rng.normal(size=(samples, m.d)) * 10
    p = m.symbol.component(0)(x, xi)
    p = np.real(p if np.ndim(p) == 1 else np.linalg.eigvalsh(p)[:, -1])
    r2 = np.einsum("pi,pi->p", x, x)
    near = r2 <= delta**2
    gap = m.reference - p
    if np.any(gap[near] < 0.25 * m.gamma0 * r2[near] - 1e-12):
        raise ModelError("principal symbol is not quadratically separated from the tip near x = 0")
    if np.any(~near) and gap[~near].min() <= 0:
        raise ModelError("principal symbol reaches the tip outside the delta-ball")


def _check_projector(proj: Callable, d: int, count: int = 64) -> None:
    om = sphere_samples(d, count)
    P = proj(om)
    if not (
        np.allclose(P @ P, P, atol=1e-12)
        and np.allclose(P, np.conj(np.swapaxes(P, 1, 2)), atol=1e-12)
        and np.allclose(np.trace(P, axis1=1, axis2=2), 1.0, atol=1e-12)
    ):
        raise ModelError("p1 is not a rank-one orthogonal projector at sampled directions")


def block_projector(N: int = 2) -> Callable:
    def proj(om):
        P = np.zeros((om.shape[0], N, N))
        P[:, 0, 0] = 1.0
        return P

    return proj


def build_vector_model(
    d: int = 1,
    g=1.0,
    h=1.0,
    projector: str = "block",
    N: int | None = None,
    level: float = 2.0,
    glue_radius: float | None = None,
    ladder=None,
    model_id: str | None = None,
) -> ModelProblem:
    """``mu1 p1(w) + level (I - p1(w))`` with ``mu1 = 1 - a0 - a_-1`` (flipped picture, tip 0 below).

    ``projector='block'`` uses ``p1 = diag(1, 0, ...)``; ``'np_plus'`` (``d = 2``,
    ``N = 3``) uses the ``+1`` eigenprojector of the elastic symbol.
    ``glue_radius`` blends ``mu1`` into ``level`` for ``|x| >= glue_radius``.
    """
    if level <= 1:
        raise ModelError("complementary level must exceed 1 to separate the branches")
    gf, hf = _form(g, d), _scalar(h, d)
    if projector == "block":
        N = N or 2
        proj = block_projector(N)
        coef_checked = True
    elif projector == "np_plus":
        if d != 2:
            raise ModelError("the np_plus projector lives on S^1 (d = 2)")
        N = 3
        proj = plus_projector
        coef_checked = False
    else:
        raise ModelError(f"unknown projector {projector!r}")
    _check_projector(proj, d)
    a0, am1 = scalar_components(d, gf, hf)
    eye = np.eye(N)

    def glue(x):
        if glue_radius is None:
            return 1.0
        r = np.linalg.norm(x, axis=-1)
        return 1.0 - smooth_weight(np.maximum(r - glue_radius, 0.0), glue_radius)

    def principal(x, xi):
        P = proj(unit_direction(xi))
        w = glue(x)
        mu = w * (1.0 - a0(x, xi)) + (1 - w) * level if glue_radius is not None else 1.0 - a0(x, xi)
        return mu[:, None, None] * P + level * (eye - P)

    def lower(x, xi):
        P = proj(unit_direction(xi))
        w = glue(x) if glue_radius is not None else 1.0
        return (-w * am1(x, xi))[:, None, None] * P

    sym = PolyhomSymbol(
        d, N, (SymbolComponent(0, principal), SymbolComponent(-1, lower, x_dependent=glue_radius is not None)),
        name=model_id or f"vector-{projector}",
    )
    hv = hf(sphere_samples(d, 256))
    gamma0, _ = gf.ellipticity()
    if ladder is None:
        ladder = ((2.0, 512), (2.0, 1024)) if d == 1 else ((1.0, 32), (1.0, 40))
    return ModelProblem(
        "vector_psdo", model_id or f"vector-{projector}-d{d}", d, 0.0, "below", symbol=sym,
        expected=closed_form_coefficient(gf, hf, d), h_max=float(hv.max()), gamma0=gamma0,
        ladder=tuple(ladder), coefficient_checked=coef_checked,
        params={"projector": projector, "N": N, "level": level, "glue_radius": glue_radius},
    )


def build_schrodinger_model(
    d: int = 1,
    a2=1.0,
    h=1.0,
    potential_scale: float = 1.0,
    ladder=None,
    model_id: str | None = None,
) -> ModelProblem:
    """``-div a2 grad - h (1+|x|^2)^(-1/2)`` with Dirichlet walls; tip 0 from below."""
    af, hf = _form(a2, d), _scalar(h, d)
    spec = SchrodingerSpec(d, af, hf, potential_scale, name=model_id or f"schrodinger{d}d")
    gamma0 = spec.check_ellipticity()
    scaled = DirectionFunction(d, lambda om: potential_scale * hf(om), False, "scaled h")
    hmax = max(float(scaled(sphere_samples(d, 256)).max()), 0.0)
    if ladder is None:
        ladder = ((5e3, 250_000), (2e4, 1_000_000)) if d == 1 else ((20.0, 40), (30.0, 60))
    return ModelProblem(
        "schrodinger", model_id or f"schrodinger-d{d}", d, 0.0, "below", spec=spec,
        expected=closed_form_coefficient(af, scaled, d), quantization="fd",
        h_max=hmax if hmax > 0 else 1.0, gamma0=gamma0, ladder=tuple(ladder),
    )


def build_hydrogen_model(q: float = 1.0, ladder=None) -> ModelProblem:
    """Exact 3D hydrogen levels; a box of size ``L`` keeps levels with ``4 n^2 / q <= L``."""

    def levels(L):
        n_max = max(int(np.floor(np.sqrt(q * L) / 2)), 1)
        n = np.arange(1, n_max + 1)
        return np.repeat(-(q**2) / (4.0 * n**2), n**2)

    return ModelProblem(
        "schrodinger", "hydrogen", 3, 0.0, "below", expected=hydrogen_coefficient(q),
        quantization="fd", h_max=q, gamma0=1.0,
        ladder=tuple(ladder or ((1e5, 0), (1e6, 0))), exact_levels=levels,
    )
