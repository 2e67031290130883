"""Regular-representation ReLU for band-limited irrep fields."""
from typing import Optional

import numpy as np
import torch
from torch import nn

from gemmesh.constants import DEFAULT_NONLINEARITY_SAMPLES, TWO_PI
from gemmesh.errors import SignatureMismatchError, UnderbandedError
from gemmesh.nn.graph import DTYPE
from gemmesh.nn.irreps import IrrepField, IrrepSignature


def default_samples(max_order: int) -> int:
    return max(2 * max_order + 3, DEFAULT_NONLINEARITY_SAMPLES)


def synthesis_matrix(max_order: int, samples: int) -> np.ndarray:
    """(samples, 2M+1) values of [1, cos t, sin t, ..., cos Mt, sin Mt] on an equispaced grid."""
    t = TWO_PI * np.arange(samples) / samples
    columns = [np.ones(samples)]
    for m in range(1, max_order + 1):
        columns.extend([np.cos(m * t), np.sin(m * t)])
    return np.column_stack(columns)


class RegularNonlinearity(nn.Module):
    """Sample each channel's angular function, apply ReLU pointwise, project back.

    Requires orders 0..M with one shared multiplicity. A pure scalar signature is a plain ReLU.
    """

    def __init__(self, signature: IrrepSignature, samples: Optional[int] = None):
        super().__init__()
        if not signature.is_regular:
            raise SignatureMismatchError(
                f"signature {signature} is not band-limited regular "
                "(orders 0..M, equal multiplicities)"
            )
        self.signature = signature
        max_order = signature.max_order
        self.samples = default_samples(max_order) if samples is None else samples
        if self.samples < 2 * max_order + 1:
            raise UnderbandedError(
                f"{self.samples} samples cannot resolve order {max_order}, need {2 * max_order + 1}"
            )
        synthesis = synthesis_matrix(max_order, self.samples)
        self.register_buffer("synthesis", torch.as_tensor(synthesis, dtype=DTYPE), persistent=False)
        self.register_buffer(
            "analysis", torch.as_tensor(np.linalg.pinv(synthesis), dtype=DTYPE), persistent=False
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.signature.max_order == 0:
            return torch.relu(x)
        n = x.shape[0]
        coefficients = []
        for m, c, start, stop in self.signature.blocks():
            block = x[:, start:stop].reshape(n, c, 1 if m == 0 else 2)
            coefficients.append(block)
        coefficients = torch.cat(coefficients, dim=-1)
        samples = torch.relu(coefficients @ self.synthesis.T)
        projected = samples @ self.analysis.T
        parts = [projected[..., 0]]
        for m in range(1, self.signature.max_order + 1):
            parts.append(projected[..., 2 * m - 1 : 2 * m + 1].reshape(n, -1))
        return torch.cat(parts, dim=1)

    def extra_repr(self) -> str:
        return f"{self.signature}, samples={self.samples}"


def regular_nonlinearity(field: IrrepField, samples: Optional[int] = None) -> IrrepField:
    layer = RegularNonlinearity(field.signature, samples)
    return IrrepField(field.signature, layer(field.values))
