"""Gauge-equivariant mesh convolution.

For every vertex p

    out(p) = K_self f(p) + 1/|N(p)| sum_q K(theta_pq) rho_in(g_{q->p}) f(q)

where K(theta) and K_self are linear combinations of the solved kernel bases for every
(input order, output order) pair, with one learnable coefficient per basis element, input
channel and output channel.
"""
import math
from typing import Optional

import numpy as np
import torch
from torch import nn

from gemmesh.errors import SignatureMismatchError
from gemmesh.geometry.gauge import GaugeAtlas
from gemmesh.nn.graph import DTYPE, LevelGraph, scatter_mean
from gemmesh.nn.irreps import IrrepField, IrrepSignature, irrep_dim, rotate_field
from gemmesh.nn.kernels import fourier_features, kernel_basis


def default_fourier_order(sig_in: IrrepSignature, sig_out: IrrepSignature) -> int:
    return sig_in.max_order + sig_out.max_order


def basis_tensors(m_in: int, m_out: int, fourier_order: int) -> tuple:
    basis = kernel_basis(m_in, m_out, fourier_order)
    return (
        torch.as_tensor(basis.neighbor, dtype=DTYPE),
        torch.as_tensor(basis.self_kernels, dtype=DTYPE),
    )


def gem_message_passing(
    x: torch.Tensor,
    sig_in: IrrepSignature,
    sig_out: IrrepSignature,
    level: LevelGraph,
    bases: dict,
    weights: dict,
    fourier_order: int,
    bias: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Raw tensor form of the convolution.

    Args:
        x (torch.Tensor): (n, sig_in.dim) input in each vertex's gauge.
        bases (dict): (m_in, m_out) -> (neighbour (nb, 2L+1, d_out, d_in), self (ns, d_out, d_in)).
        weights (dict): (m_in, m_out) -> {"neighbor": (nb, c_out, c_in), "self": (ns, c_out, c_in)}.
        bias (torch.Tensor, optional): (c_out,) added to the order-0 output channels.

    Returns:
        torch.Tensor: (n, sig_out.dim) output.
    """
    if x.ndim != 2 or x.shape[1] != sig_in.dim:
        raise SignatureMismatchError(
            f"input of width {x.shape[-1]} does not match signature {sig_in} ({sig_in.dim})"
        )
    n, n_pairs = x.shape[0], level.n_pairs
    phi = fourier_features(level.log_angle, fourier_order)
    transported = rotate_field(x[level.neighbors], sig_in, level.transport)

    edge_parts, self_parts = [], []
    for m_out, c_out, _, _ in sig_out.blocks():
        d_out = irrep_dim(m_out)
        edge = x.new_zeros(n_pairs, c_out, d_out)
        local = x.new_zeros(n, c_out, d_out)
        for m_in, c_in, start, stop in sig_in.blocks():
            d_in = irrep_dim(m_in)
            neighbor_basis, self_basis = bases[(m_in, m_out)]
            pair_weights = weights.get((m_in, m_out), {})
            if len(neighbor_basis):
                kernels = torch.einsum("ek,bkoi->eboi", phi, neighbor_basis)
                incoming = transported[:, start:stop].reshape(n_pairs, c_in, d_in)
                edge = edge + torch.einsum(
                    "eboi,eci,bdc->edo", kernels, incoming, pair_weights["neighbor"]
                )
            if len(self_basis):
                own = x[:, start:stop].reshape(n, c_in, d_in)
                local = local + torch.einsum(
                    "boi,vci,bdc->vdo", self_basis, own, pair_weights["self"]
                )
        edge_parts.append(edge.reshape(n_pairs, c_out * d_out))
        self_parts.append(local.reshape(n, c_out * d_out))

    messages = torch.cat(edge_parts, dim=1)
    out = scatter_mean(messages, level.centers, level.degree) + torch.cat(self_parts, dim=1)
    if bias is not None:
        c0 = sig_out.multiplicity(0)
        padding = bias.new_zeros(sig_out.dim - c0)
        out = out + torch.cat([bias, padding])
    return out


def gem_conv(
    field: IrrepField,
    atlas: GaugeAtlas,
    weights: dict,
    out_signature: IrrepSignature,
    fourier_order: Optional[int] = None,
    bias: Optional[torch.Tensor] = None,
) -> IrrepField:
    """Convolve an irrep field over the radius graph carried by `atlas`.

    Raises:
        SignatureMismatchError: the field does not match the atlas or the weights.
    """
    if field.n_vertices != atlas.graph.n_vertices:
        raise SignatureMismatchError(
            f"field on {field.n_vertices} vertices, atlas on {atlas.graph.n_vertices}"
        )
    order = fourier_order or default_fourier_order(field.signature, out_signature)
    bases = {
        (m_in, m_out): basis_tensors(m_in, m_out, order)
        for m_in in field.signature.orders
        for m_out in out_signature.orders
    }
    level = LevelGraph.from_graph(atlas.graph, atlas=atlas)
    values = gem_message_passing(
        field.values, field.signature, out_signature, level, bases, weights, order, bias
    )
    return IrrepField(out_signature, values)


class GemConv(nn.Module):
    """Learnable gauge-equivariant convolution between two irrep signatures."""

    def __init__(
        self,
        sig_in: IrrepSignature,
        sig_out: IrrepSignature,
        fourier_order: Optional[int] = None,
        bias: bool = True,
    ):
        super().__init__()
        self.sig_in = sig_in
        self.sig_out = sig_out
        self.fourier_order = fourier_order or default_fourier_order(sig_in, sig_out)
        self.params = nn.ParameterDict()
        self._pairs = []
        for m_in, c_in, _, _ in sig_in.blocks():
            for m_out, c_out, _, _ in sig_out.blocks():
                neighbor, local = basis_tensors(m_in, m_out, self.fourier_order)
                key = f"{m_in}_{m_out}"
                self.register_buffer(f"neighbor_basis_{key}", neighbor, persistent=False)
                self.register_buffer(f"self_basis_{key}", local, persistent=False)
                if len(neighbor):
                    self.params[f"neighbor_{key}"] = nn.Parameter(
                        torch.empty(len(neighbor), c_out, c_in, dtype=DTYPE)
                    )
                if len(local):
                    self.params[f"self_{key}"] = nn.Parameter(
                        torch.empty(len(local), c_out, c_in, dtype=DTYPE)
                    )
                self._pairs.append((m_in, m_out))
        c0 = sig_out.multiplicity(0)
        self.bias = nn.Parameter(torch.zeros(c0, dtype=DTYPE)) if bias and c0 else None
        self.reset_parameters()

    def fan_in(self, m_out: int) -> int:
        total = 0
        for name, param in self.params.items():
            if name.endswith(f"_{m_out}"):
                total += param.shape[0] * param.shape[2]
        return max(total, 1)

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        """Uniform in +-sqrt(3 / fan_in) over basis-coefficient space, zero bias."""
        with torch.no_grad():
            for name, param in self.params.items():
                bound = math.sqrt(3.0 / self.fan_in(int(name.rsplit("_", 1)[1])))
                param.uniform_(-bound, bound, generator=generator)
            if self.bias is not None:
                self.bias.zero_()

    def bases(self) -> dict:
        return {
            (m_in, m_out): (
                getattr(self, f"neighbor_basis_{m_in}_{m_out}"),
                getattr(self, f"self_basis_{m_in}_{m_out}"),
            )
            for m_in, m_out in self._pairs
        }

    def weights(self) -> dict:
        weights = {}
        for m_in, m_out in self._pairs:
            pair = {}
            for kind in ("neighbor", "self"):
                name = f"{kind}_{m_in}_{m_out}"
                if name in self.params:
                    pair[kind] = self.params[name]
            weights[(m_in, m_out)] = pair
        return weights

    def forward(self, x: torch.Tensor, level: LevelGraph) -> torch.Tensor:
        return gem_message_passing(
            x,
            self.sig_in,
            self.sig_out,
            level,
            self.bases(),
            self.weights(),
            self.fourier_order,
            self.bias,
        )

    def extra_repr(self) -> str:
        return f"{self.sig_in} -> {self.sig_out}, L={self.fourier_order}"


def scalar_weights(matrix: np.ndarray) -> dict:
    """Weights of an all-scalar GemConv equal to the plain matrix W (c_in, c_out).

    The (0, 0) neighbour basis is the single constant 1, so the coefficient tensor is W^T.
    """
    w = torch.as_tensor(np.asarray(matrix), dtype=DTYPE).T[None]
    return {(0, 0): {"neighbor": w, "self": torch.zeros_like(w)}}
