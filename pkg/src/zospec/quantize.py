"""Truncated periodic grids and matrix assembly of quantized symbols.

Pseudodifferential operators are assembled on a periodic lattice by sampling
the symbol at lattice frequencies; Schrodinger-type operators use second-order
finite differences in divergence form with Dirichlet walls.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .asymptotics import DirectionFunction
from .symbolcore import PolyhomSymbol, SymbolError

DENSE_GUARD = 20000
MAX_TRIDIAGONAL_N = 2_000_000
DEFECT_WARN = 1e-3

QUANTIZATIONS = ("weyl", "left", "fd")
STORAGES = ("dense", "banded")


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Periodic lattice with ``n`` nodes per axis on ``[-L, L)^d``."""

    d: int
    L: float
    n: int

    @property
    def spacing(self) -> float:
        return 2 * self.L / self.n

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def nodes_1d(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.n)

    @property
    def frequencies_1d(self) -> np.ndarray:
        return (np.pi / self.L) * np.arange(-self.n // 2, self.n // 2)

    @property
    def nodes(self) -> np.ndarray:
        """All nodes, shape ``(n**d, d)``, first axis slowest."""
        return _lattice(self.nodes_1d, self.d)

    @property
    def frequencies(self) -> np.ndarray:
        return _lattice(self.frequencies_1d, self.d)

    def fft_frequencies_1d(self) -> np.ndarray:
        """Frequencies in FFT order (``m mod n``), the order used for kernels."""
        return (np.pi / self.L) * np.fft.fftfreq(self.n, 1.0 / self.n)


def _lattice(axis: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def make_grid(d: int, L: float, n: int, N: int = 1, dense: bool = True) -> Grid:
    """Validate and build a :class:`Grid`.

    The dense-size guard ``n**d * N <= 20000`` applies when ``dense`` is set.
    """
    if d not in (1, 2, 3):
        raise GridError(f"d must be 1, 2 or 3, got {d}")
    if not L > 0:
        raise GridError("L must be positive")
    if n % 2 or n < 8:
        raise GridError(f"n must be even and >= 8, got {n}")
    if dense and n**d * N > DENSE_GUARD:
        raise GridError(
            f"dense size {n**d * N} exceeds guard {DENSE_GUARD}; "
            "use the banded or 1D tridiagonal Schrodinger paths for large grids"
        )
    if d == 1 and n > MAX_TRIDIAGONAL_N:
        raise GridError(f"n = {n} exceeds the 1D limit {MAX_TRIDIAGONAL_N}")
    return Grid(d, float(L), int(n))


# ----------------------------------------------------------------------------
# operators


@dataclass(frozen=True)
class HermitianOperator:
    """Assembled Hermitian matrix.

    ``storage == 'dense'``: ``matrix`` is ``(M, M)``.
    ``storage == 'banded'``: ``matrix`` is the upper band ``(u+1, M)`` with
    ``band[u + i - j, j] = A[i, j]`` (the layout of ``scipy.linalg.eig_banded``).
    """

    matrix: np.ndarray
    storage: str
    grid: Grid
    N: int
    quantization: str
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.storage not in STORAGES:
            raise ValueError(f"unknown storage {self.storage!r}")
        if self.quantization not in QUANTIZATIONS:
            raise ValueError(f"unknown quantization {self.quantization!r}")

    @property
    def size(self) -> int:
        return self.matrix.shape[-1]

    @property
    def bandwidth(self) -> int:
        return self.size - 1 if self.storage == "dense" else self.matrix.shape[0] - 1

    def to_dense(self) -> np.ndarray:
        if self.storage == "dense":
            return self.matrix
        u = self.bandwidth
        M = self.size
        A = np.zeros((M, M), dtype=self.matrix.dtype)
        for k in range(u + 1):
            diag = self.matrix[u - k, k:]
            A[np.arange(M - k), np.arange(k, M)] = diag
            if k:
                A[np.arange(k, M), np.arange(M - k)] = np.conj(diag)
        return A

    def flipped(self, level: float = 1.0) -> "HermitianOperator":
        """Operator ``level*I - A`` with identical storage."""
        m = -self.matrix
        if self.storage == "dense":
            m = m + level * np.eye(self.size, dtype=m.dtype)
        else:
            m = m.copy()
            m[-1] += level
        meta = dict(self.meta)
        meta["flipped"] = level
        return HermitianOperator(m, self.storage, self.grid, self.N, self.quantization, meta)


def dense_operator(A: np.ndarray, grid: Grid | None = None, N: int = 1, **meta) -> HermitianOperator:
    """Wrap an explicit Hermitian matrix (symmetrized) as an operator."""
    A = np.asarray(A)
    A = 0.5 * (A + A.conj().T)
    g = grid or Grid(1, 1.0, max(8, A.shape[0] + A.shape[0] % 2))
    return HermitianOperator(A, "dense", g, N, "fd", dict(meta))


# ----------------------------------------------------------------------------
# pseudodifferential assembly


def _kernel(s: PolyhomSymbol, g: Grid, points: np.ndarray) -> np.ndarray:
    """``K[p, delta] = n^-d Σ_m exp(2 pi i delta.m/n) a(points[p], xi_m)``.

    Returns shape ``(P, n**d, N, N)`` with delta flattened (first axis slowest).
    """
    P = points.shape[0]
    n, d, N = g.n, g.d, s.N
    xi = _lattice(g.fft_frequencies_1d(), d)
    F = xi.shape[0]
    x = np.repeat(points, F, axis=0)
    vals = s.evaluate(x, np.tile(xi, (P, 1)))
    vals = vals.reshape((P,) + (n,) * d + (N, N))
    K = np.fft.ifftn(vals, axes=tuple(range(1, d + 1)))
    return K.reshape(P, F, N, N)


def _delta_index(a: np.ndarray, b: np.ndarray, n: int, d: int) -> np.ndarray:
    """Flat index of ``(a - b) mod n`` for flat lattice indices ``a[:, None]``, ``b[None, :]``."""
    sa = np.array(np.unravel_index(a, (n,) * d))
    sb = np.array(np.unravel_index(b, (n,) * d))
    diff = (sa[:, :, None] - sb[:, None, :]) % n
    return np.ravel_multi_index(tuple(diff), (n,) * d)


def assemble_raw(s: PolyhomSymbol, g: Grid, q: str, chunk_points: int = 600_000) -> np.ndarray:
    """Unsymmetrized matrix of ``OP_q(s)`` on the grid, shape ``(M, M)``, ``M = n^d N``."""
    if s.d != g.d:
        raise SymbolError(f"symbol dimension {s.d} does not match grid dimension {g.d}")
    if q not in ("weyl", "left"):
        raise ValueError(f"quantization must be 'weyl' or 'left', got {q!r}")
    make_grid(g.d, g.L, g.n, s.N)  # size guard
    n, d, N = g.n, g.d, s.N
    G = g.size
    A = np.empty((G, N, G, N), dtype=complex)
    idx = np.arange(G)

    if not s.x_dependent:
        K = _kernel(s, g, np.zeros((1, d)))[0]
        D = _delta_index(idx, idx, n, d)
        A[:] = K[D].transpose(0, 2, 1, 3)
        return A.reshape(G * N, G * N)

    nodes = g.nodes
    if q == "left":
        rows = max(1, chunk_points // G)
        for start in range(0, G, rows):
            r = idx[start : start + rows]
            K = _kernel(s, g, nodes[r])
            D = _delta_index(r, idx, n, d)
            A[r] = K[np.arange(len(r))[:, None], D].transpose(0, 2, 1, 3)
        return A.reshape(G * N, G * N)

    # Weyl: symbol at midpoints -L + (L/n) s, s = j + k in [0, 2n-2] per axis;
    # chunk over the first-axis midpoint index.
    R = n ** (d - 1)
    rest = np.arange(R)
    if d > 1:
        sj = np.array(np.unravel_index(rest, (n,) * (d - 1)))
        ssum = sj[:, :, None] + sj[:, None, :]
        S_rest = np.ravel_multi_index(tuple(ssum), (2 * n - 1,) * (d - 1))
        D_rest = _delta_index(rest, rest, n, d - 1)
        mid_rest = -g.L + (g.L / n) * _lattice(np.arange(2 * n - 1), d - 1)
    else:
        S_rest = np.zeros((1, 1), dtype=int)
        D_rest = np.zeros((1, 1), dtype=int)
        mid_rest = np.zeros((1, 0))
    A6 = A.reshape(n, R, N, n, R, N)
    for s0 in range(2 * n - 1):
        x0 = -g.L + (g.L / n) * s0
        pts = np.concatenate([np.full((mid_rest.shape[0], 1), x0), mid_rest], axis=1)
        K = _kernel(s, g, pts).reshape(pts.shape[0], n, R, N, N)
        for j0 in range(max(0, s0 - n + 1), min(s0, n - 1) + 1):
            k0 = s0 - j0
            block = K[S_rest, (j0 - k0) % n, D_rest]  # (R, R, N, N)
            A6[j0, :, :, k0, :, :] = block.transpose(0, 2, 1, 3)
    return A.reshape(G * N, G * N)


def symmetrization_defect(A: np.ndarray) -> float:
    """``||A - A*||_F / (2 ||A||_F)``."""
    nrm = np.linalg.norm(A)
    return float(np.linalg.norm(A - A.conj().T) / (2 * nrm)) if nrm > 0 else 0.0


def assemble_operator(s: PolyhomSymbol, g: Grid, q: str = "weyl") -> HermitianOperator:
    """Dense Hermitian matrix of the quantized symbol, symmetrized as ``(A + A*)/2``."""
    A = assemble_raw(s, g, q)
    defect = symmetrization_defect(A)
    A += A.conj().T
    A *= 0.5
    meta: dict = {"symbol": s.name, "quantization": q, "symmetrization_defect": defect}
    if defect > DEFECT_WARN:
        msg = f"symmetrization defect {defect:.2e} exceeds {DEFECT_WARN:g}; symbol too rough for the grid"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        meta["warning"] = msg
    return HermitianOperator(A, "dense", g, s.N, q, meta)


# ----------------------------------------------------------------------------
# Schrodinger-type operators


def smooth_weight(r: np.ndarray, radius: float) -> np.ndarray:
    """C^1 step: 0 at r = 0, 1 for r >= radius."""
    u = np.clip(np.asarray(r, float) / radius, 0.0, 1.0)
    return u * u * (3 - 2 * u)


@dataclass(frozen=True)
class SchrodingerSpec:
    """``-div a2(x) grad - scale * h(x) (1+|x|^2)^(-1/2)``.

    ``a2`` and ``h`` are functions of the spatial direction ``x/|x|``; inside
    ``|x| <= smoothing_radius`` both are blended toward their sphere averages.
    """

    d: int
    a2: DirectionFunction
    h: DirectionFunction
    potential_scale: float = 1.0
    smoothing_radius: float = 1.0
    name: str = "schrodinger"

    def _blend(self, f: DirectionFunction, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x, axis=-1)
        omega = np.where(r[:, None] > 0, x / np.where(r > 0, r, 1.0)[:, None], f.default_direction())
        val = np.asarray(f(omega), float)
        mean = f.sphere_mean()
        w = smooth_weight(r, self.smoothing_radius)
        if val.ndim == 1:
            return w * val + (1 - w) * mean
        return w[:, None, None] * val + (1 - w)[:, None, None] * mean

    def coefficient(self, x: np.ndarray) -> np.ndarray:
        """``a2`` at points ``(P, d)``, shape ``(P, d, d)``."""
        return self._blend(self.a2, np.asarray(x, float))

    def potential(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        r2 = np.einsum("ij,ij->i", x, x)
        return -self.potential_scale * self._blend(self.h, x) / np.sqrt(1.0 + r2)

    def check_ellipticity(self, samples: int = 256) -> float:
        gamma0, omega = self.a2.ellipticity(samples)
        if gamma0 <= 0:
            raise SymbolError(f"a2 is not positive definite at direction {omega}")
        return gamma0


def _interior_nodes_1d(g: Grid) -> np.ndarray:
    return -g.L + g.spacing * np.arange(1, g.n)


def schrodinger_tridiagonal(spec: SchrodingerSpec, L: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the 1D Dirichlet operator on ``[-L, L]``.

    Unknowns at ``x_i = -L + i h``, ``i = 1..n-1``, ``h = 2L/n``; the coefficient
    is sampled at cell midpoints.
    """
    if spec.d != 1:
        raise SymbolError("tridiagonal path requires d = 1")
    h = 2 * L / n
    xm = (-L + h * (np.arange(n) + 0.5))[:, None]
    p = spec.coefficient(xm)[:, 0, 0]
    x = (-L + h * np.arange(1, n))[:, None]
    diag = (p[:-1] + p[1:]) / h**2 + spec.potential(x)
    off = -p[1:-1] / h**2
    return diag, off


def _embedding(n: int) -> sp.csr_matrix:
    """Interior ``n-1`` values into the closed lattice ``0..n`` (zero walls)."""
    return sp.eye(n + 1, n - 1, k=-1, format="csr")


def _difference(n: int, h: float, sign: int) -> sp.csr_matrix:
    """One-sided difference on the closed lattice, evaluated at every lattice node."""
    Dp = (sp.eye(n + 1, k=1) - sp.eye(n + 1)) / h
    Dm = (sp.eye(n + 1) - sp.eye(n + 1, k=-1)) / h
    return (Dp if sign > 0 else Dm).tocsr()


def schrodinger_sparse(spec: SchrodingerSpec, g: Grid) -> sp.csr_matrix:
    """Sparse matrix of the Dirichlet operator on the interior lattice ``(n-1)^d``.

    The quadratic form averages ``grad_s u . a2 grad_s u`` over all ``2^d``
    one-sided gradient choices ``s``; this keeps the form non-negative for
    matrix-valued ``a2`` without checkerboard null modes.
    """
    d, n, h = g.d, g.n, g.spacing
    E = _embedding(n)
    closed = -g.L + h * np.arange(n + 1)
    Xc = _lattice(closed, d)
    a = spec.coefficient(Xc)
    A = sp.csr_matrix(((n - 1) ** d, (n - 1) ** d))
    for signs in np.ndindex(*(2,) * d):
        grads = []
        for j in range(d):
            factors = [E] * d
            factors[j] = _difference(n, h, 1 if signs[j] == 0 else -1) @ E
            G = factors[0]
            for f in factors[1:]:
                G = sp.kron(G, f, format="csr")
            grads.append(G)
        for j in range(d):
            for k in range(d):
                c = a[:, j, k]
                if np.any(c != 0):
                    A = A + grads[j].T @ sp.diags(c) @ grads[k]
    A = A / 2**d
    xi = _lattice(closed[1:-1], d)
    return (A + sp.diags(spec.potential(xi))).tocsr()


def assemble_schrodinger(spec: SchrodingerSpec, g: Grid, storage: str | None = None) -> HermitianOperator:
    """Finite-difference Schrodinger operator with Dirichlet walls at ``±L``.

    1D returns tridiagonal band storage. For ``d >= 2`` ``storage`` selects
    ``'dense'`` (default when within the guard) or ``'banded'``.
    """
    if spec.d != g.d:
        raise SymbolError(f"spec dimension {spec.d} does not match grid dimension {g.d}")
    spec.check_ellipticity()
    meta = {"symbol": spec.name, "quantization": "fd", "interior_points": (g.n - 1) ** g.d}
    if g.d == 1:
        diag, off = schrodinger_tridiagonal(spec, g.L, g.n)
        band = np.zeros((2, diag.size))
        band[1] = diag
        band[0, 1:] = off
        return HermitianOperator(band, "banded", g, 1, "fd", meta)
    A = schrodinger_sparse(spec, g)
    M = A.shape[0]
    if storage is None:
        storage = "dense" if M <= DENSE_GUARD else "banded"
    if storage == "dense":
        if M > DENSE_GUARD:
            raise GridError(f"dense size {M} exceeds guard {DENSE_GUARD}; use storage='banded'")
        D = A.toarray()
        return HermitianOperator(0.5 * (D + D.T), "dense", g, 1, "fd", meta)
    u = int(np.max(np.abs(A.tocoo().col - A.tocoo().row)))
    band = np.zeros((u + 1, M))
    coo = sp.triu(A).tocoo()
    band[u + coo.row - coo.col, coo.col] = coo.data
    return HermitianOperator(band, "banded", g, 1, "fd", meta)


# ----------------------------------------------------------------------------
# binary export

MAGIC = b"SPTP"
VERSION = 1
HEADER = struct.Struct("<4sHHIdIBBII")
_STORAGE_TAG = {"dense": 0, "banded": 1}
_QUANT_TAG = {"weyl": 0, "left": 1, "fd": 2}


def write_operator(op: HermitianOperator, path) -> None:
    """Write header then little-endian complex64 payload.

    Header fields: magic, version, d, n, L, N, storage tag, quantization tag,
    matrix size M, bandwidth u. Dense payload is the ``M x M`` matrix row-major;
    banded payload is the ``(u+1) x M`` upper band row-major.
    """
    hdr = HEADER.pack(
        MAGIC, VERSION, op.grid.d, op.grid.n, op.grid.L, op.N,
        _STORAGE_TAG[op.storage], _QUANT_TAG[op.quantization], op.size, op.bandwidth,
    )
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.ascontiguousarray(op.matrix, dtype="<c8").tobytes())


def read_operator(path) -> HermitianOperator:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, n, L, N, st, qt, M, u = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    storage = {v: k for k, v in _STORAGE_TAG.items()}[st]
    quant = {v: k for k, v in _QUANT_TAG.items()}[qt]
    shape = (M, M) if storage == "dense" else (u + 1, M)
    data = np.frombuffer(raw, dtype="<c8", offset=HEADER.size, count=shape[0] * shape[1])
    mat = data.reshape(shape).astype(complex)
    return HermitianOperator(mat, storage, Grid(d, L, n), N, quant, {"source": str(path)})
