"""SO(2) irrep signatures, representation matrices and irrep-typed fields.

Layout convention: a field of signature ((m0, c0), (m1, c1), ...) stores, per vertex, the
c0 channels of order m0, then the c1 channels of order m1, and so on. An order-0 channel is
one real number, and an order-m channel (m >= 1) is an (x, y) pair rotating by m times the
angle.
"""
from dataclasses import dataclass

import numpy as np
import torch

from gemmesh.errors import SignatureMismatchError


def irrep_dim(order: int) -> int:
    return 1 if order == 0 else 2


@dataclass(frozen=True)
class IrrepSignature:
    irreps: tuple

    def __post_init__(self):
        irreps = tuple((int(m), int(c)) for m, c in self.irreps)
        object.__setattr__(self, "irreps", irreps)
        if not irreps:
            raise SignatureMismatchError("a signature needs at least one irrep")
        orders = [m for m, _ in irreps]
        if min(orders) < 0:
            raise SignatureMismatchError(f"irrep orders must be non-negative, got {orders}")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise SignatureMismatchError(f"irrep orders must strictly increase, got {orders}")
        if any(c <= 0 for _, c in irreps):
            raise SignatureMismatchError(f"multiplicities must be positive, got {irreps}")

    @classmethod
    def uniform(cls, max_order: int, multiplicity: int) -> "IrrepSignature":
        return cls(tuple((m, multiplicity) for m in range(max_order + 1)))

    @classmethod
    def scalars(cls, channels: int) -> "IrrepSignature":
        return cls(((0, channels),))

    @property
    def dim(self) -> int:
        return sum(c * irrep_dim(m) for m, c in self.irreps)

    @property
    def orders(self) -> tuple:
        return tuple(m for m, _ in self.irreps)

    @property
    def max_order(self) -> int:
        return self.irreps[-1][0]

    def multiplicity(self, order: int) -> int:
        return dict(self.irreps).get(order, 0)

    def blocks(self) -> list:
        """(order, multiplicity, start, stop) for each irrep block."""
        blocks, start = [], 0
        for m, c in self.irreps:
            stop = start + c * irrep_dim(m)
            blocks.append((m, c, start, stop))
            start = stop
        return blocks

    @property
    def is_regular(self) -> bool:
        """Orders 0..M all present with one shared multiplicity."""
        mults = {c for _, c in self.irreps}
        return self.orders == tuple(range(self.max_order + 1)) and len(mults) == 1

    def __add__(self, other: "IrrepSignature") -> "IrrepSignature":
        merged = dict(self.irreps)
        for m, c in other.irreps:
            merged[m] = merged.get(m, 0) + c
        return IrrepSignature(tuple(sorted(merged.items())))

    def __str__(self) -> str:
        return " + ".join(f"{c}x{m}" for m, c in self.irreps)


def rep_matrix(signature: IrrepSignature, angle: float) -> np.ndarray:
    """Block-diagonal orthogonal matrix rho(angle) for the signature."""
    matrix = np.zeros((signature.dim, signature.dim))
    for m, c, start, _ in signature.blocks():
        if m == 0:
            matrix[start : start + c, start : start + c] = np.eye(c)
            continue
        cos, sin = np.cos(m * angle), np.sin(m * angle)
        for k in range(c):
            i = start + 2 * k
            matrix[i : i + 2, i : i + 2] = [[cos, -sin], [sin, cos]]
    return matrix


def rotate_field(
    values: torch.Tensor, signature: IrrepSignature, angles: torch.Tensor
) -> torch.Tensor:
    """Apply rho(angles[v]) to row v of an (N, dim) tensor."""
    parts = []
    for m, c, start, stop in signature.blocks():
        block = values[:, start:stop]
        if m == 0:
            parts.append(block)
            continue
        pairs = block.reshape(-1, c, 2)
        cos = torch.cos(m * angles)[:, None]
        sin = torch.sin(m * angles)[:, None]
        x = cos * pairs[..., 0] - sin * pairs[..., 1]
        y = sin * pairs[..., 0] + cos * pairs[..., 1]
        parts.append(torch.stack([x, y], dim=-1).reshape(-1, 2 * c))
    return torch.cat(parts, dim=1)


def concat_fields(
    a: torch.Tensor, sig_a: IrrepSignature, b: torch.Tensor, sig_b: IrrepSignature
) -> torch.Tensor:
    """Concatenate two fields channel-wise into the layout of sig_a + sig_b."""
    blocks_a = {m: (start, stop) for m, _, start, stop in sig_a.blocks()}
    blocks_b = {m: (start, stop) for m, _, start, stop in sig_b.blocks()}
    parts = []
    for m in (sig_a + sig_b).orders:
        if m in blocks_a:
            parts.append(a[:, slice(*blocks_a[m])])
        if m in blocks_b:
            parts.append(b[:, slice(*blocks_b[m])])
    return torch.cat(parts, dim=1)


@dataclass
class IrrepField:
    """Per-vertex features tagged with an irrep signature, expressed in each vertex's gauge."""

    signature: IrrepSignature
    values: torch.Tensor

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.signature.dim:
            raise SignatureMismatchError(
                f"field of shape {tuple(self.values.shape)} does not match signature "
                f"{self.signature} of dimension {self.signature.dim}"
            )

    @property
    def n_vertices(self) -> int:
        return self.values.shape[0]

    def gauge_transformed(self, angles) -> "IrrepField":
        """Express the field in gauges rotated by `angles`, i.e. apply rho(-angle)."""
        angles = torch.as_tensor(angles, dtype=self.values.dtype)
        return IrrepField(self.signature, rotate_field(self.values, self.signature, -angles))
