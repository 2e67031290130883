"""Gauge-free comparison layers: isotropic, attention-scaled and PointNet++-style."""
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
import torch
from torch import nn

from gemmesh.errors import EmptyNeighborhoodError, SignatureMismatchError
from gemmesh.geometry.mesh import NeighborGraph
from gemmesh.nn.graph import (
    DTYPE,
    LevelGraph,
    scatter_max,
    scatter_mean,
    scatter_softmax,
    scatter_sum,
)


@dataclass
class PlainField:
    """Untyped per-vertex channels."""

    values: torch.Tensor

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def _as_level(graph: Union[NeighborGraph, LevelGraph], positions=None) -> LevelGraph:
    if isinstance(graph, LevelGraph):
        return graph
    return LevelGraph.from_graph(graph, positions)


def _check_neighbourhoods(level: LevelGraph) -> None:
    empty = torch.nonzero(level.degree == 0)
    if len(empty):
        raise EmptyNeighborhoodError(f"vertex {int(empty[0, 0])} has no neighbours")


def _check_width(x: torch.Tensor, weight: torch.Tensor) -> None:
    if x.shape[1] != weight.shape[0]:
        raise SignatureMismatchError(
            f"field has {x.shape[1]} channels, weight expects {weight.shape[0]}"
        )


def isotropic_message(x: torch.Tensor, level: LevelGraph, weight: torch.Tensor) -> torch.Tensor:
    _check_width(x, weight)
    return scatter_mean(x[level.neighbors], level.centers, level.degree) @ weight


def attention_message(
    x: torch.Tensor, level: LevelGraph, weight: torch.Tensor, score: torch.Tensor
) -> torch.Tensor:
    """Neighbour mean reweighted by a softmax of (f(q) - f(p)) . w over each neighbourhood.

    The scalar score of a neighbour scales all of its channels.
    """
    _check_width(x, weight)
    _check_neighbourhoods(level)
    incoming = x[level.neighbors]
    scores = (incoming - x[level.centers]) @ score
    attention = scatter_softmax(scores, level.centers, level.n_vertices)
    weighted = scatter_sum(attention[:, None] * incoming, level.centers, level.n_vertices)
    return (weighted / level.degree[:, None]) @ weight


def pointnet_message_passing(
    x: torch.Tensor, level: LevelGraph, mlp: nn.Module
) -> torch.Tensor:
    _check_neighbourhoods(level)
    messages = mlp(torch.cat([x[level.neighbors], level.offsets], dim=1))
    return scatter_max(messages, level.centers, level.n_vertices)


def isotropic_conv(field: PlainField, graph, weight) -> PlainField:
    """out(p) = W^T mean_{q in N(p)} f(q)."""
    weight = torch.as_tensor(weight, dtype=field.values.dtype)
    return PlainField(isotropic_message(field.values, _as_level(graph), weight))


def attention_conv(field: PlainField, graph, weight, score) -> PlainField:
    weight = torch.as_tensor(weight, dtype=field.values.dtype)
    score = torch.as_tensor(score, dtype=field.values.dtype)
    return PlainField(attention_message(field.values, _as_level(graph), weight, score))


def attention_weights(field: PlainField, graph, score) -> torch.Tensor:
    """Per-pair softmax weights, summing to one over every neighbourhood."""
    level = _as_level(graph)
    x = field.values
    score = torch.as_tensor(score, dtype=x.dtype)
    scores = (x[level.neighbors] - x[level.centers]) @ score
    return scatter_softmax(scores, level.centers, level.n_vertices)


def pointnet_message(
    field: PlainField,
    graph,
    mlp: nn.Module,
    positions: Optional[np.ndarray] = None,
    normalize_radius: bool = False,
) -> PlainField:
    """Componentwise max over neighbours of mlp(f(q), x_q - x_p).

    Args:
        field (PlainField): Input channels.
        graph (NeighborGraph | LevelGraph): Neighbourhoods. A LevelGraph already carries
            offsets in units of its level radius and is used as is.
        mlp (nn.Module): Maps c_in + 3 channels to c_out.
        positions (np.ndarray, optional): Vertex positions, required for a NeighborGraph.
        normalize_radius (bool): Divide NeighborGraph offsets by the graph radius.

    Returns:
        PlainField: Max-aggregated messages.
    """
    level = _as_level(graph, positions)
    if isinstance(graph, NeighborGraph) and not normalize_radius:
        level = replace(level, offsets=level.offsets * graph.radius)
    return PlainField(pointnet_message_passing(field.values, level, mlp))


def _uniform_(param: torch.Tensor, fan_in: int, generator=None) -> None:
    bound = math.sqrt(3.0 / max(fan_in, 1))
    with torch.no_grad():
        param.uniform_(-bound, bound, generator=generator)


class IsotropicConv(nn.Module):
    def __init__(self, c_in: int, c_out: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(c_in, c_out, dtype=DTYPE))
        self.self_weight = nn.Parameter(torch.empty(c_in, c_out, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=DTYPE)) if bias else None
        self.reset_parameters()

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        # neighbour mean and self term share one fan-in
        fan_in = 2 * self.weight.shape[0]
        _uniform_(self.weight, fan_in, generator)
        _uniform_(self.self_weight, fan_in, generator)
        if self.bias is not None:
            with torch.no_grad():
                self.bias.zero_()

    def forward(self, x: torch.Tensor, level: LevelGraph) -> torch.Tensor:
        out = isotropic_message(x, level, self.weight) + x @ self.self_weight
        return out if self.bias is None else out + self.bias


class AttentionConv(IsotropicConv):
    def __init__(self, c_in: int, c_out: int, bias: bool = True):
        super().__init__(c_in, c_out, bias)
        self.score = nn.Parameter(torch.empty(c_in, dtype=DTYPE))
        self.reset_parameters()

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        super().reset_parameters(generator)
        if hasattr(self, "score"):
            _uniform_(self.score, self.score.shape[0], generator)

    def forward(self, x: torch.Tensor, level: LevelGraph) -> torch.Tensor:
        out = attention_message(x, level, self.weight, self.score) + x @ self.self_weight
        return out if self.bias is None else out + self.bias


class PointNetConv(nn.Module):
    """Set abstraction step: shared two-layer MLP on (feature, offset) then neighbour max.

    Offsets arrive in units of the level radius, as stored in LevelGraph.
    """

    def __init__(self, c_in: int, c_out: int, hidden: Optional[int] = None):
        super().__init__()
        hidden = hidden or c_out
        self.mlp = nn.Sequential(
            nn.Linear(c_in + 3, hidden, dtype=DTYPE),
            nn.ReLU(),
            nn.Linear(hidden, c_out, dtype=DTYPE),
        )

    def reset_parameters(self, generator: Optional[torch.Generator] = None) -> None:
        with torch.no_grad():
            for layer in self.mlp:
                if isinstance(layer, nn.Linear):
                    bound = math.sqrt(3.0 / layer.in_features)
                    layer.weight.uniform_(-bound, bound, generator=generator)
                    layer.bias.zero_()

    def forward(self, x: torch.Tensor, level: LevelGraph) -> torch.Tensor:
        return pointnet_message_passing(x, level, self.mlp)
