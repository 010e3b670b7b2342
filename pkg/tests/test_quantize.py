from __future__ import annotations

import numpy as np
import pytest

from zospec.asymptotics import DirectionFunction
from zospec.quantize import (
    GridError,
    HermitianOperator,
    SchrodingerSpec,
    assemble_operator,
    assemble_raw,
    assemble_schrodinger,
    make_grid,
    read_operator,
    symmetrization_defect,
    write_operator,
)
from zospec.spectra import eigenvalues
from zospec.symbolcore import PolyhomSymbol, PolynomialForm, SymbolComponent, SymbolError, convert_quantization


def scalar(order, f, x_dependent=True):
    return SymbolComponent(order, f, x_dependent=x_dependent)


def sym(d, *comps):
    return PolyhomSymbol(d, 1, tuple(comps))


def test_grid_1d_nodes_and_frequencies():
    g = make_grid(1, 10.0, 8)
    np.testing.assert_allclose(g.nodes[:, 0], np.arange(-10, 10, 2.5))
    np.testing.assert_allclose(g.frequencies[:, 0], np.pi * np.arange(-4, 4) / 10)


def test_grid_2d_counts():
    g = make_grid(2, 5.0, 16)
    assert g.nodes.shape == (256, 2)
    assert g.frequencies.shape == (256, 2)


@pytest.mark.parametrize("n", [7, 6])
def test_grid_rejects_bad_n(n):
    with pytest.raises(GridError):
        make_grid(1, 10.0, n)


def test_grid_size_guard():
    with pytest.raises(GridError, match="banded"):
        make_grid(2, 1.0, 200)


@pytest.mark.parametrize("q", ["weyl", "left"])
def test_constant_symbol_is_identity(q):
    s = sym(2, scalar(0, lambda x, xi: np.ones(x.shape[0]), False))
    A = assemble_operator(s, make_grid(2, 1.0, 8), q).matrix
    np.testing.assert_allclose(A, np.eye(64), atol=1e-13)


@pytest.mark.parametrize("q", ["weyl", "left"])
def test_multiplication_symbol_is_diagonal(q):
    g = make_grid(1, 3.0, 32)
    v = lambda x: np.exp(-x[:, 0] ** 2) + 0.5
    A = assemble_operator(sym(1, scalar(0, lambda x, xi: v(x))), g, q).matrix
    np.testing.assert_allclose(A, np.diag(v(g.nodes)), atol=1e-13)


def test_xi_squared_diagonalized_by_dft():
    g = make_grid(1, 2.0, 16)
    A = assemble_operator(sym(1, scalar(2, lambda x, xi: xi[:, 0] ** 2, False)), g).matrix
    F = np.fft.fft(np.eye(16), axis=0, norm="ortho")
    D = F @ A @ F.conj().T
    np.testing.assert_allclose(D, np.diag(g.fft_frequencies_1d() ** 2), atol=1e-10)


def test_left_to_weyl_conversion_matches_matrices():
    g = make_grid(1, 8.0, 256)
    left = PolyhomSymbol(1, 1, (SymbolComponent(1, None, False, PolynomialForm({((1,), (1,)): 1.0})),))
    weyl = convert_quantization(left, "left_to_weyl", -1)
    A_left = assemble_raw(left, g, "left")
    A_weyl = assemble_raw(weyl, g, "weyl")
    # compare on a vector supported far from the periodic seam of x
    u = np.exp(-g.nodes[:, 0] ** 2)
    np.testing.assert_allclose(A_left @ u, A_weyl @ u, atol=1e-8)


def test_weyl_defect_vanishes_with_refinement():
    # real even-in-xi symbol: the midpoint Weyl kernel is Hermitian up to rounding
    s = sym(1,
            scalar(0, lambda x, xi: 1 / (1 + x[:, 0] ** 2 * (1 + 0.5 * xi[:, 0] ** 2 / (1 + xi[:, 0] ** 2)))),
            scalar(-1, lambda x, xi: np.exp(-x[:, 0] ** 2) / np.sqrt(1 + xi[:, 0] ** 2)))
    for n in (64, 128):
        assert symmetrization_defect(assemble_raw(s, make_grid(1, 4.0, n), "weyl")) <= 1e-12
    # the left presentation is not Hermitian: its defect is a lower-order symbol, not a grid effect
    assert symmetrization_defect(assemble_raw(s, make_grid(1, 4.0, 64), "left")) > 1e-3


def test_commutator_shrinks_for_slower_symbols():
    g = make_grid(1, 8.0, 128)

    def commutator(scale):
        v = sym(1, scalar(0, lambda x, xi: np.exp(-(x[:, 0] / scale) ** 2)))
        w = sym(1, scalar(0, lambda x, xi: np.exp(-(xi[:, 0] / scale) ** 2), False))
        A, B = assemble_operator(v, g).matrix, assemble_operator(w, g).matrix
        return np.linalg.norm(A @ B - B @ A, 2)

    assert commutator(1.0) > 1.5 * commutator(2.0)


def test_commutator_vanishes_for_constant_factor():
    g = make_grid(1, 4.0, 32)
    A = assemble_operator(sym(1, scalar(0, lambda x, xi: np.ones(x.shape[0]) * 2.0)), g).matrix
    B = assemble_operator(sym(1, scalar(0, lambda x, xi: np.tanh(xi[:, 0]), False)), g).matrix
    np.testing.assert_allclose(A @ B, B @ A, atol=1e-12)


def test_flip_shifts_eigenvalues():
    s = sym(1, scalar(0, lambda x, xi: 1 / (1 + x[:, 0] ** 2)))
    op = assemble_operator(s, make_grid(1, 3.0, 32))
    np.testing.assert_allclose(np.sort(1 - eigenvalues(op)), eigenvalues(op.flipped(1.0)), atol=1e-13)


def test_rough_symbol_warns():
    s = sym(1, scalar(0, lambda x, xi: np.sign(x[:, 0]) * np.sign(xi[:, 0])))
    with pytest.warns(RuntimeWarning, match="defect"):
        op = assemble_operator(s, make_grid(1, 1.0, 16), "left")
    assert "warning" in op.meta


# Schrodinger operators ----------------------------------------------------------


def _spec(d, a=1.0, h=1.0, scale=1.0):
    a2 = DirectionFunction.constant(d, a * np.eye(d))
    return SchrodingerSpec(d, a2, DirectionFunction.constant(d, h), scale)


def test_dirichlet_box_spectrum():
    n, L = 1000, 1.0
    op = assemble_schrodinger(_spec(1, scale=0.0), make_grid(1, L, n, dense=False))
    ev = eigenvalues(op)[:10]
    hx = 2 * L / n
    k = np.arange(1, 11)
    exact = 4 / hx**2 * np.sin(k * np.pi / (2 * n)) ** 2
    np.testing.assert_allclose(ev, exact, rtol=1e-6)


def test_schrodinger_2d_nonnegative_without_potential():
    op = assemble_schrodinger(_spec(2, 1.5, 1.0, 0.0), make_grid(2, 3.0, 16))
    ev = eigenvalues(op)
    assert ev.min() >= -1e-12 * np.abs(ev).max()


def test_schrodinger_banded_matches_dense():
    spec = _spec(2)
    g = make_grid(2, 4.0, 12)
    a = eigenvalues(assemble_schrodinger(spec, g, "dense"))
    b = eigenvalues(assemble_schrodinger(spec, g, "banded"))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_schrodinger_rejects_nonelliptic():
    bad = DirectionFunction(1, lambda om: np.full((om.shape[0], 1, 1), -1.0), True)
    spec = SchrodingerSpec(1, bad, DirectionFunction.constant(1, 1.0))
    with pytest.raises((SymbolError, ValueError)):
        assemble_schrodinger(spec, make_grid(1, 2.0, 16, dense=False))


@pytest.mark.parametrize("storage", ["dense", "banded"])
def test_binary_round_trip(tmp_path, storage):
    if storage == "dense":
        s = sym(1, scalar(0, lambda x, xi: 1 / (1 + x[:, 0] ** 2)))
        op = assemble_operator(s, make_grid(1, 2.0, 16))
    else:
        op = assemble_schrodinger(_spec(1), make_grid(1, 5.0, 64, dense=False))
    path = tmp_path / "op.bin"
    write_operator(op, path)
    back = read_operator(path)
    assert back.storage == op.storage and back.quantization == op.quantization
    assert back.grid == op.grid
    np.testing.assert_allclose(back.matrix, op.matrix, rtol=1e-6, atol=1e-6)
    assert path.read_bytes()[:4] == b"SPTP"


def test_read_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError, match="magic"):
        read_operator(p)


def test_banded_to_dense_is_hermitian():
    op = assemble_schrodinger(_spec(2), make_grid(2, 3.0, 10), "banded")
    assert isinstance(op, HermitianOperator)
    A = op.to_dense()
    np.testing.assert_allclose(A, A.conj().T)
