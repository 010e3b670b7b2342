"""Principal-symbol machinery of the elastic Neumann-Poincare operator on a surface in R^3.

With ``kappa = mu / (2 (2 mu + lambda))`` the principal symbol is
``kappa * r(omega)``, ``r(omega) = i [[0, 0, -w1], [0, 0, -w2], [w1, w2, 0]]``,
whose eigenvalues are ``kappa, 0, -kappa`` for every unit covector ``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .symbolcore import eigen_branches, merge_intervals

UNIT_TOL = 1e-12
OVERLAP_TOL = 1e-10

SYMBOL_NOTE = "kappa(x) * r(omega) with omega = xi/|xi|; fixed by the eigenvalues (+-kappa, 0)"


class NPError(ValueError):
    pass


@dataclass(frozen=True)
class LamePoint:
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise NPError(f"shear modulus must be positive, got {self.mu}")
        if not 2 * self.mu + self.lam > 0:
            raise NPError(f"need 2 mu + lambda > 0, got {2 * self.mu + self.lam}")


def lame_to_kappa(p: LamePoint) -> float:
    """``mu / (2 (2 mu + lambda))``."""
    if not 2 * p.mu + p.lam > 0:
        raise NPError("2 mu + lambda must be positive")
    return p.mu / (2.0 * (2.0 * p.mu + p.lam))


def _unit(omega) -> np.ndarray:
    w = np.asarray(omega, float)
    if w.shape != (2,):
        raise NPError(f"omega must be a 2-vector, got shape {w.shape}")
    if abs(np.hypot(*w) - 1.0) > UNIT_TOL:
        raise NPError(f"omega must be a unit vector, |omega| = {np.hypot(*w)!r}")
    return w


def r_matrix(omega) -> np.ndarray:
    w1, w2 = _unit(omega)
    return 1j * np.array([[0, 0, -w1], [0, 0, -w2], [w1, w2, 0]], dtype=complex)


def np_principal_symbol(kappa: float, omega) -> np.ndarray:
    """``kappa * r(omega)``; Hermitian (i times real antisymmetric)."""
    return kappa * r_matrix(omega)


@dataclass(frozen=True)
class NPEigenvectors:
    plus: np.ndarray
    zero: np.ndarray
    minus: np.ndarray

    def as_columns(self) -> np.ndarray:
        """Columns ordered by eigenvalue ``+1, 0, -1``."""
        return np.stack([self.plus, self.zero, self.minus], axis=1)


def np_eigenvectors(omega, verify: bool = True) -> NPEigenvectors:
    """Unit eigenvectors of ``r(omega)`` for eigenvalues ``+1, 0, -1``.

    ``v+ = (-i w1, -i w2, 1)/sqrt2``, ``v0 = (-w2, w1, 0)``, ``v- = (i w1, i w2, 1)/sqrt2``.
    With ``verify`` each is compared (up to phase) with :func:`eigen_branches`.
    """
    w1, w2 = _unit(omega)
    s = 2**-0.5
    vecs = NPEigenvectors(
        np.array([-1j * w1, -1j * w2, 1.0]) * s,
        np.array([-w2, w1, 0.0], dtype=complex),
        np.array([1j * w1, 1j * w2, 1.0]) * s,
    )
    if verify:
        br = eigen_branches(r_matrix(omega))
        for j, v in enumerate((vecs.plus, vecs.zero, vecs.minus)):
            overlap = abs(np.vdot(br.vectors[:, j], v))
            if overlap < 1 - OVERLAP_TOL:
                raise NPError(f"eigenvector formula {j} disagrees with eigendecomposition (overlap {overlap:.3e})")
    return vecs


def plus_projector(omega: np.ndarray) -> np.ndarray:
    """Batched rank-one projectors ``v+ v+^*`` for directions ``(P, 2)``, shape ``(P, 3, 3)``."""
    w = np.asarray(omega, float)
    v = np.stack([-1j * w[:, 0], -1j * w[:, 1], np.ones(w.shape[0])], axis=-1) * 2**-0.5
    return v[:, :, None] * v[:, None, :].conj()


@dataclass(frozen=True)
class KappaField:
    """``kappa(x)`` on a 2D chart with a declared nondegenerate maximizer."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    maximizer: tuple[float, float] = (0.0, 0.0)
    hessian: np.ndarray | None = None
    bounds: tuple[tuple[float, float], tuple[float, float]] = ((-1.0, 1.0), (-1.0, 1.0))
    name: str = "kappa"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        return np.broadcast_to(np.asarray(self.evaluator(x), float), (x.shape[0],)).copy()

    def sample(self, samples: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        (a, b), (c, d) = self.bounds
        pts = np.column_stack([rng.uniform(a, b, samples), rng.uniform(c, d, samples)])
        pts = np.vstack([pts, np.asarray(self.maximizer, float)[None, :]])
        return self(pts)

    def hessian_at_max(self, step: float = 1e-4) -> np.ndarray:
        if self.hessian is not None:
            return np.asarray(self.hessian, float)
        x0 = np.asarray(self.maximizer, float)
        H = np.zeros((2, 2))
        e = np.eye(2) * step
        f0 = self(x0)[0]
        for i in range(2):
            for j in range(2):
                if i == j:
                    H[i, i] = (self(x0 + e[i])[0] - 2 * f0 + self(x0 - e[i])[0]) / step**2
                else:
                    H[i, j] = (
                        self(x0 + e[i] + e[j])[0] - self(x0 + e[i] - e[j])[0]
                        - self(x0 - e[i] + e[j])[0] + self(x0 - e[i] - e[j])[0]
                    ) / (4 * step**2)
        return H

    def check(self, samples: int = 256) -> None:
        k = self.sample(samples)
        if np.any(k <= 0) or np.any(k >= 0.5):
            raise NPError("kappa must lie in (0, 1/2)")


def constant_kappa(kappa: float) -> KappaField:
    return KappaField(lambda x: np.full(x.shape[0], kappa), hessian=np.zeros((2, 2)), name=f"const({kappa})")


def np_essential_spectrum(field: KappaField, samples: int = 1000, seed: int = 0) -> list[tuple[float, float]]:
    """``[-k+, -k-] ∪ {0} ∪ [k-, k+]`` from sampled ``kappa``; the negative part mirrors the positive."""
    if samples < 100:
        raise NPError("need at least 100 samples")
    k = field.sample(samples, seed)
    lo, hi = float(k.min()), float(k.max())
    return merge_intervals([(-hi, -lo), (0.0, 0.0), (lo, hi)], tol=0.0)


@dataclass(frozen=True)
class OrderRecord:
    theta: float
    d: int
    depends_on: dict = field(default_factory=dict)


def np_predicted_order(field: KappaField, rtol: float = 1e-8) -> OrderRecord:
    """Accumulation exponent at the nondegenerate maximum of ``kappa``: ``theta = d/2 = 1``.

    The coefficient itself is not computed; the record lists its inputs.
    """
    H = field.hessian_at_max()
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(np.abs(lam).max(), 1e-300)
    if np.any(np.abs(lam) <= rtol * scale) or np.allclose(lam, 0):
        raise NPError(
            f"Hessian of kappa at the maximizer is degenerate (eigenvalues {lam}); "
            "degenerate extrema follow a different law not covered here"
        )
    if np.any(lam >= 0):
        raise NPError(f"Hessian at the declared maximizer is not negative definite (eigenvalues {lam})")
    x0 = tuple(float(v) for v in field.maximizer)
    return OrderRecord(
        1.0, 2,
        {
            "maximizer": x0,
            "kappa_max": float(field(np.asarray(x0))[0]),
            "hessian": H.tolist(),
            "subprincipal": "subprincipal symbol at the maximizer (curvature dependent), not evaluated",
            "note": SYMBOL_NOTE,
        },
    )
