"""Numerical solution of the gauge-equivariance kernel constraint.

A neighbour kernel K(theta) maps an order-m_in input to an order-m_out output and is a
truncated Fourier series in the log-map angle. Gauge equivariance requires

    K(theta + g) = rho_out(g) K(theta) rho_in(g)^-1    for all g, theta

and the self kernel (theta-free) must commute the same way. The admissible kernels form the
null space of a linear system sampled on a grid, solved here by SVD.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from gemmesh.constants import KERNEL_SVD_TOL, TWO_PI
from gemmesh.errors import InsufficientSamplingError, UnderbandedError
from gemmesh.nn.irreps import IrrepSignature, irrep_dim, rep_matrix

# grid offsets keep the solver's samples off the symmetric angles
THETA_OFFSET = 0.3141
GROUP_OFFSET = 0.7071
SQRT2 = math.sqrt(2.0)


def fourier_features(theta, order: int):
    """Orthonormal real Fourier functions [1, sqrt2 cos t, sqrt2 sin t, ...] up to `order`.

    Works on numpy arrays and torch tensors alike; returns shape (..., 2*order + 1).
    """
    lib = torch if isinstance(theta, torch.Tensor) else np
    columns = [lib.ones_like(theta)]
    for k in range(1, order + 1):
        columns.append(SQRT2 * lib.cos(k * theta))
        columns.append(SQRT2 * lib.sin(k * theta))
    return lib.stack(columns, -1)


def _rep_stack(order: int, angles: np.ndarray) -> np.ndarray:
    signature = IrrepSignature(((order, 1),))
    return np.stack([rep_matrix(signature, a) for a in angles])


def _grid(samples: int, offset: float) -> np.ndarray:
    return TWO_PI * np.arange(samples) / samples + offset


def _canonical_basis(null: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(null) via Gram-Schmidt on its projector."""
    dim = len(null)
    if not dim:
        return null
    projector = null.T @ null
    basis = []
    for j in range(projector.shape[1]):
        v = projector[:, j].copy()
        for b in basis:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            v /= norm
            lead = np.flatnonzero(np.abs(v) > 1e-9)[0]
            basis.append(v if v[lead] > 0 else -v)
        if len(basis) == dim:
            break
    return np.array(basis)


def _null_space(system: np.ndarray) -> np.ndarray:
    _, singular, vh = np.linalg.svd(system, full_matrices=False)
    threshold = KERNEL_SVD_TOL * max(singular[0], 1.0)
    return vh[singular < threshold]


def _neighbor_system(m_in: int, m_out: int, order: int, samples: int) -> np.ndarray:
    theta, g = np.meshgrid(
        _grid(samples, THETA_OFFSET), _grid(samples, GROUP_OFFSET), indexing="ij"
    )
    theta, g = theta.ravel(), g.ravel()
    d_in, d_out = irrep_dim(m_in), irrep_dim(m_out)
    shifted = np.einsum(
        "sk,oO,iI->soikOI", fourier_features(theta + g, order), np.eye(d_out), np.eye(d_in)
    )
    conjugated = np.einsum(
        "soO,siI,sk->soikOI",
        _rep_stack(m_out, g),
        _rep_stack(m_in, g),
        fourier_features(theta, order),
    )
    k = 2 * order + 1
    return (shifted - conjugated).reshape(len(theta) * d_out * d_in, k * d_out * d_in)


def _self_system(m_in: int, m_out: int, samples: int) -> np.ndarray:
    g = _grid(samples, GROUP_OFFSET)
    d_in, d_out = irrep_dim(m_in), irrep_dim(m_out)
    identity = np.einsum("oO,iI->oiOI", np.eye(d_out), np.eye(d_in))
    conjugated = np.einsum("soO,siI->soiOI", _rep_stack(m_out, g), _rep_stack(m_in, g))
    return (identity[None] - conjugated).reshape(samples * d_out * d_in, d_out * d_in)


@dataclass(frozen=True, eq=False)
class KernelBasis:
    """Admissible kernels for one (m_in, m_out) pair.

    Attributes:
        neighbor (np.ndarray): (n_neighbor, 2L+1, d_out, d_in) Fourier coefficients.
        self_kernels (np.ndarray): (n_self, d_out, d_in) constant matrices.
    """

    m_in: int
    m_out: int
    fourier_order: int
    neighbor: np.ndarray
    self_kernels: np.ndarray

    @property
    def n_neighbor(self) -> int:
        return len(self.neighbor)

    @property
    def n_self(self) -> int:
        return len(self.self_kernels)

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        """Neighbour basis kernels at the given angles, shape (n, n_neighbor, d_out, d_in)."""
        phi = fourier_features(np.asarray(theta, dtype=np.float64), self.fourier_order)
        return np.einsum("nk,bkoi->nboi", phi, self.neighbor)


def solve_kernel_basis(
    m_in: int, m_out: int, fourier_order: int = None, sample_count: int = None
) -> KernelBasis:
    """Solve the kernel constraint for one irrep pair.

    Args:
        m_in (int): Input irrep order.
        m_out (int): Output irrep order.
        fourier_order (int, optional): Highest Fourier frequency L, defaults to m_in + m_out.
        sample_count (int, optional): Grid size S per axis, defaults to 4(L+1).

    Raises:
        UnderbandedError: L is below m_in + m_out.
        InsufficientSamplingError: S is below 4(L+1) or the null space changes at 2S.

    Returns:
        KernelBasis: Orthonormal neighbour and self bases.
    """
    order = m_in + m_out if fourier_order is None else fourier_order
    if order < m_in + m_out:
        raise UnderbandedError(f"Fourier order {order} cannot carry kernels {m_in}->{m_out}")
    samples = 4 * (order + 1) if sample_count is None else sample_count
    if samples < 4 * (order + 1):
        raise InsufficientSamplingError(
            f"{samples} samples per axis are below the minimum {4 * (order + 1)}"
        )

    neighbor = _null_space(_neighbor_system(m_in, m_out, order, samples))
    self_kernels = _null_space(_self_system(m_in, m_out, samples))
    refined_neighbor = _null_space(_neighbor_system(m_in, m_out, order, 2 * samples))
    refined_self = _null_space(_self_system(m_in, m_out, 2 * samples))
    if len(neighbor) != len(refined_neighbor) or len(self_kernels) != len(refined_self):
        raise InsufficientSamplingError(
            f"kernel space {m_in}->{m_out} changed from ({len(neighbor)}, {len(self_kernels)}) "
            f"to ({len(refined_neighbor)}, {len(refined_self)}) when doubling the samples"
        )

    d_in, d_out = irrep_dim(m_in), irrep_dim(m_out)
    neighbor = _canonical_basis(neighbor).reshape(-1, 2 * order + 1, d_out, d_in)
    self_kernels = _canonical_basis(self_kernels).reshape(-1, d_out, d_in)
    logging.debug(
        f"Kernel basis {m_in}->{m_out} (L={order}): "
        f"{len(neighbor)} neighbour, {len(self_kernels)} self"
    )
    return KernelBasis(m_in, m_out, order, neighbor, self_kernels)


@lru_cache(maxsize=None)
def kernel_basis(m_in: int, m_out: int, fourier_order: int) -> KernelBasis:
    """Cached solve_kernel_basis with the default sampling."""
    return solve_kernel_basis(m_in, m_out, fourier_order)


def constraint_residual(basis: KernelBasis, theta: np.ndarray, g: np.ndarray) -> float:
    """Largest constraint violation of any basis element over paired (theta, g) samples."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    rho_out, rho_in = _rep_stack(basis.m_out, g), _rep_stack(basis.m_in, g)
    residual = 0.0
    if basis.n_neighbor:
        shifted = basis.evaluate(theta + g)
        conjugated = np.einsum(
            "noO,nbOI,niI->nboi", rho_out, basis.evaluate(theta), rho_in
        )
        residual = max(residual, float(np.abs(shifted - conjugated).max()))
    if basis.n_self:
        conjugated = np.einsum("noO,bOI,niI->nboi", rho_out, basis.self_kernels, rho_in)
        residual = max(residual, float(np.abs(basis.self_kernels[None] - conjugated).max()))
    return residual
