import itertools

import numpy as np
import pytest

from gemmesh.errors import InsufficientSamplingError, UnderbandedError
from gemmesh.nn.kernels import (
    constraint_residual,
    fourier_features,
    kernel_basis,
    solve_kernel_basis,
)

ORDERS = [0, 1, 2]


def expected_neighbor_dim(m_in, m_out):
    if m_in == 0 and m_out == 0:
        return 1
    if m_in == 0 or m_out == 0:
        return 2
    return 4


def expected_self_dim(m_in, m_out):
    if m_in != m_out:
        return 0
    return 1 if m_in == 0 else 2


def projector(basis):
    flat = basis.reshape(len(basis), -1)
    return flat.T @ flat


@pytest.mark.parametrize("m_in,m_out", list(itertools.product(ORDERS, ORDERS)))
def test_basis_dimensions(m_in, m_out):
    basis = kernel_basis(m_in, m_out, m_in + m_out)
    assert basis.n_neighbor == expected_neighbor_dim(m_in, m_out)
    assert basis.n_self == expected_self_dim(m_in, m_out)


@pytest.mark.parametrize("m_in,m_out", list(itertools.product(ORDERS, ORDERS)))
def test_basis_satisfies_constraint_off_grid(m_in, m_out):
    basis = kernel_basis(m_in, m_out, m_in + m_out)
    rng = np.random.default_rng(m_in * 3 + m_out)
    theta = rng.uniform(0, 2 * np.pi, size=200)
    g = rng.uniform(0, 2 * np.pi, size=200)
    assert constraint_residual(basis, theta, g) < 1e-8


@pytest.mark.parametrize("m_in,m_out", [(0, 1), (1, 1), (2, 1), (1, 2)])
def test_basis_matches_doubled_sampling(m_in, m_out):
    order = m_in + m_out
    basis = solve_kernel_basis(m_in, m_out, order)
    dense = solve_kernel_basis(m_in, m_out, order, sample_count=8 * (order + 1))
    assert np.allclose(projector(basis.neighbor), projector(dense.neighbor), atol=1e-9)
    if basis.n_self:
        assert np.allclose(projector(basis.self_kernels), projector(dense.self_kernels), atol=1e-9)


def test_basis_is_orthonormal():
    basis = kernel_basis(1, 2, 3)
    flat = basis.neighbor.reshape(basis.n_neighbor, -1)
    assert np.allclose(flat @ flat.T, np.eye(basis.n_neighbor), atol=1e-10)


@pytest.mark.parametrize("n", [1, 2])
def test_scalar_to_vector_kernels_are_rotating_columns(n):
    basis = kernel_basis(0, n, n)
    theta = np.linspace(0.1, 6.0, 17)
    kernels = basis.evaluate(theta)[..., 0]
    columns = np.stack(
        [
            np.column_stack([np.cos(n * theta), np.sin(n * theta)]),
            np.column_stack([-np.sin(n * theta), np.cos(n * theta)]),
        ]
    )
    for b in range(basis.n_neighbor):
        target = kernels[:, b].reshape(-1)
        design = columns.reshape(2, -1).T
        coefficients, *_ = np.linalg.lstsq(design, target, rcond=None)
        assert np.allclose(design @ coefficients, target, atol=1e-10)


def test_scalar_kernel_is_constant():
    basis = kernel_basis(0, 0, 0)
    values = basis.evaluate(np.array([0.0, 1.0, 4.0]))
    assert np.allclose(values, values[0])


def test_fourier_features_are_orthonormal():
    theta = 2 * np.pi * np.arange(64) / 64
    phi = fourier_features(theta, 3)
    assert phi.shape == (64, 7)
    assert np.allclose(phi.T @ phi / 64, np.eye(7), atol=1e-12)


def test_underbanded_order():
    with pytest.raises(UnderbandedError):
        solve_kernel_basis(1, 2, fourier_order=2)


def test_insufficient_sampling():
    with pytest.raises(InsufficientSamplingError, match="below the minimum"):
        solve_kernel_basis(1, 1, fourier_order=2, sample_count=8)


def test_higher_fourier_order_adds_nothing_for_scalars():
    assert kernel_basis(0, 0, 3).n_neighbor == 1
