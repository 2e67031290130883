"""Torch-side graph containers shared by every layer kind, plus scatter reductions."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from gemmesh.geometry.gauge import GaugeAtlas
from gemmesh.geometry.mesh import NeighborGraph

DTYPE = torch.float64


def _tensor(array, dtype=DTYPE) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(array), dtype=dtype)


@dataclass
class LevelGraph:
    """Directed pairs (center p receives from neighbour q) of one hierarchy level.

    Attributes:
        centers, neighbors (torch.Tensor): (E,) vertex ids.
        degree (torch.Tensor): (n,) neighbour counts as floats.
        log_angle (torch.Tensor): (E,) theta_pq; zeros for gauge-free graphs.
        transport (torch.Tensor): (E,) g_{q->p}; zeros for gauge-free graphs.
        offsets (torch.Tensor): (E, 3) ambient chords x_q - x_p divided by the level radius.
    """

    centers: torch.Tensor
    neighbors: torch.Tensor
    degree: torch.Tensor
    log_angle: torch.Tensor
    transport: torch.Tensor
    offsets: torch.Tensor

    @property
    def n_vertices(self) -> int:
        return self.degree.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def from_arrays(cls, arrays: dict) -> "LevelGraph":
        return cls(
            centers=_tensor(arrays["centers"], torch.long),
            neighbors=_tensor(arrays["neighbors"], torch.long),
            degree=_tensor(np.bincount(arrays["centers"], minlength=arrays["n_vertices"])),
            log_angle=_tensor(arrays["log_angle"]),
            transport=_tensor(arrays["transport"]),
            offsets=_tensor(arrays["offsets"]),
        )

    @classmethod
    def from_graph(
        cls,
        graph: NeighborGraph,
        positions: Optional[np.ndarray] = None,
        atlas: Optional[GaugeAtlas] = None,
    ) -> "LevelGraph":
        return cls.from_arrays(level_arrays(graph, positions, atlas))

    @classmethod
    def collate(cls, graphs: list) -> "LevelGraph":
        shifts = np.cumsum([0] + [g.n_vertices for g in graphs[:-1]])
        return cls(
            centers=torch.cat([g.centers + int(s) for g, s in zip(graphs, shifts)]),
            neighbors=torch.cat([g.neighbors + int(s) for g, s in zip(graphs, shifts)]),
            degree=torch.cat([g.degree for g in graphs]),
            log_angle=torch.cat([g.log_angle for g in graphs]),
            transport=torch.cat([g.transport for g in graphs]),
            offsets=torch.cat([g.offsets for g in graphs]),
        )


def level_arrays(
    graph: NeighborGraph,
    positions: Optional[np.ndarray] = None,
    atlas: Optional[GaugeAtlas] = None,
) -> dict:
    """Numpy description of a level, the serializable counterpart of LevelGraph."""
    n_pairs = graph.n_pairs
    if positions is None:
        offsets = np.zeros((n_pairs, 3))
    else:
        offsets = (positions[graph.indices] - positions[graph.centers]) / graph.radius
    return {
        "n_vertices": graph.n_vertices,
        "radius": graph.radius,
        "centers": graph.centers,
        "neighbors": graph.indices,
        "log_angle": np.zeros(n_pairs) if atlas is None else atlas.log_angle,
        "transport": np.zeros(n_pairs) if atlas is None else atlas.transport_angle,
        "offsets": offsets,
    }


@dataclass
class LevelTransition:
    """Fine-to-coarse bookkeeping between two hierarchy levels."""

    parent: torch.Tensor
    transport: torch.Tensor
    cluster_size: torch.Tensor
    interp_index: torch.Tensor
    interp_weight: torch.Tensor

    @property
    def n_fine(self) -> int:
        return self.parent.shape[0]

    @property
    def n_coarse(self) -> int:
        return self.cluster_size.shape[0]

    @classmethod
    def from_arrays(cls, arrays: dict) -> "LevelTransition":
        return cls(
            parent=_tensor(arrays["parent"], torch.long),
            transport=_tensor(arrays["transport"]),
            cluster_size=_tensor(np.bincount(arrays["parent"], minlength=arrays["n_coarse"])),
            interp_index=_tensor(arrays["interp_index"], torch.long),
            interp_weight=_tensor(arrays["interp_weight"]),
        )

    @classmethod
    def collate(cls, transitions: list) -> "LevelTransition":
        shifts = np.cumsum([0] + [t.n_coarse for t in transitions[:-1]])
        return cls(
            parent=torch.cat([t.parent + int(s) for t, s in zip(transitions, shifts)]),
            transport=torch.cat([t.transport for t in transitions]),
            cluster_size=torch.cat([t.cluster_size for t in transitions]),
            interp_index=torch.cat(
                [t.interp_index + int(s) for t, s in zip(transitions, shifts)]
            ),
            interp_weight=torch.cat([t.interp_weight for t in transitions]),
        )


def scatter_sum(values: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    out = values.new_zeros((size,) + tuple(values.shape[1:]))
    return out.index_add(0, index, values)


def scatter_mean(
    values: torch.Tensor, index: torch.Tensor, counts: torch.Tensor
) -> torch.Tensor:
    summed = scatter_sum(values, index, counts.shape[0])
    return summed / counts.reshape((-1,) + (1,) * (values.ndim - 1))


def scatter_max(values: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    """Componentwise max over rows sharing an index; every index must occur."""
    expanded = index.reshape((-1,) + (1,) * (values.ndim - 1)).expand_as(values)
    out = values.new_full((size,) + tuple(values.shape[1:]), float("-inf"))
    return out.scatter_reduce(0, expanded, values, reduce="amax", include_self=False)


def scatter_softmax(scores: torch.Tensor, index: torch.Tensor, size: int) -> torch.Tensor:
    """Softmax of per-pair scores normalized over each index group."""
    shift = scatter_max(scores.detach(), index, size)
    weights = torch.exp(scores - shift[index])
    return weights / scatter_sum(weights, index, size)[index]
