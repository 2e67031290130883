"""Batch normalization that commutes with gauge rotations."""
from typing import Optional

import torch
from torch import nn

from gemmesh.constants import NORM_EPS
from gemmesh.nn.graph import DTYPE
from gemmesh.nn.irreps import IrrepField, IrrepSignature


def batch_statistics(x: torch.Tensor, signature: IrrepSignature) -> dict:
    """Per-order statistics over all rows: (mean, var) for m=0, mean norm for m>=1."""
    stats = {}
    for m, c, start, stop in signature.blocks():
        block = x[:, start:stop]
        if m == 0:
            stats[m] = (block.mean(0), block.var(0, unbiased=False))
        else:
            stats[m] = torch.linalg.vector_norm(block.reshape(-1, c, 2), dim=-1).mean(0)
    return stats


def normalize(
    x: torch.Tensor,
    signature: IrrepSignature,
    stats: dict,
    eps: float = NORM_EPS,
    scales: Optional[dict] = None,
    shift: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    parts = []
    for m, c, start, stop in signature.blocks():
        block = x[:, start:stop]
        if m == 0:
            mean, var = stats[0]
            out = (block - mean) / torch.sqrt(var + eps)
            if scales is not None:
                out = out * scales[0] + shift
        else:
            pairs = block.reshape(-1, c, 2) / (stats[m] + eps)[:, None]
            if scales is not None:
                pairs = pairs * scales[m][:, None]
            out = pairs.reshape(-1, 2 * c)
        parts.append(out)
    return torch.cat(parts, dim=1)


def equivariant_norm(
    field: IrrepField, batch_stats: Optional[dict] = None, eps: float = NORM_EPS
) -> IrrepField:
    """Normalize with the given statistics, or the field's own when none are given."""
    stats = batch_stats or batch_statistics(field.values, field.signature)
    return IrrepField(field.signature, normalize(field.values, field.signature, stats, eps))


class IrrepBatchNorm(nn.Module):
    """Standard batch norm on scalars; division by the batch-mean norm on m>=1 channels.

    Statistics are taken over every vertex of every mesh in the batch.
    """

    def __init__(self, signature: IrrepSignature, momentum: float = 0.1, eps: float = NORM_EPS):
        super().__init__()
        self.signature = signature
        self.momentum = momentum
        self.eps = eps
        self.scales = nn.ParameterDict()
        for m, c, _, _ in signature.blocks():
            self.scales[str(m)] = nn.Parameter(torch.ones(c, dtype=DTYPE))
            if m == 0:
                self.register_buffer("running_mean", torch.zeros(c, dtype=DTYPE))
                self.register_buffer("running_var", torch.ones(c, dtype=DTYPE))
            else:
                self.register_buffer(f"running_norm_{m}", torch.ones(c, dtype=DTYPE))
        c0 = signature.multiplicity(0)
        self.shift = nn.Parameter(torch.zeros(c0, dtype=DTYPE)) if c0 else None

    def _running(self) -> dict:
        stats = {}
        for m in self.signature.orders:
            if m == 0:
                stats[0] = (self.running_mean, self.running_var)
            else:
                stats[m] = getattr(self, f"running_norm_{m}")
        return stats

    def _update(self, stats: dict) -> None:
        with torch.no_grad():
            for m, value in stats.items():
                if m == 0:
                    self.running_mean.lerp_(value[0], self.momentum)
                    self.running_var.lerp_(value[1], self.momentum)
                else:
                    getattr(self, f"running_norm_{m}").lerp_(value, self.momentum)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.training:
            stats = batch_statistics(x, self.signature)
            self._update({m: _detach(v) for m, v in stats.items()})
        else:
            stats = self._running()
        scales = {m: self.scales[str(m)] for m in self.signature.orders}
        return normalize(x, self.signature, stats, self.eps, scales, self.shift)


def _detach(value):
    if isinstance(value, tuple):
        return tuple(v.detach() for v in value)
    return value.detach()
