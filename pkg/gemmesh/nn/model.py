"""Encoder-decoder mesh network shared by every convolution kind."""
import logging
from typing import Union

import numpy as np
import torch
from torch import nn

from gemmesh.config import ModelConfig, parse_model_config
from gemmesh.nn.baselines import AttentionConv, IsotropicConv, PointNetConv
from gemmesh.nn.conv import GemConv
from gemmesh.nn.features import ambient_width, frame_head, irrep_signature, output_signature
from gemmesh.nn.irreps import IrrepSignature, concat_fields
from gemmesh.nn.nonlinearity import RegularNonlinearity
from gemmesh.nn.norm import IrrepBatchNorm
from gemmesh.nn.pooling import (
    broadcast_unpool,
    interpolate_unpool,
    max_pool,
    mean_pool,
    transport_pool,
    transport_unpool,
)

PLAIN_CONVS = {"isotropic": IsotropicConv, "attention": AttentionConv, "pointnet": PointNetConv}


class LayerFactory:
    """Builds the layers of one convolution kind.

    Plain kinds use all-scalar signatures, so the assembly code is shared.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.kind = config.conv_kind

    @property
    def equivariant(self) -> bool:
        return self.kind == "gem"

    def hidden(self, width: int) -> IrrepSignature:
        if self.equivariant:
            return IrrepSignature.uniform(self.config.max_order, width)
        return IrrepSignature.scalars(width * (2 * self.config.max_order + 1))

    def input_signature(self) -> IrrepSignature:
        if self.equivariant:
            return irrep_signature(self.config.boundary_condition)
        return IrrepSignature.scalars(ambient_width(self.config.boundary_condition))

    def output_signature(self) -> IrrepSignature:
        vector = self.config.target == "wss"
        if self.equivariant:
            return output_signature(self.config.time_steps, vector)
        return IrrepSignature.scalars(self.config.time_steps * self.config.out_components)

    def conv(self, sig_in: IrrepSignature, sig_out: IrrepSignature) -> nn.Module:
        if self.equivariant:
            return GemConv(sig_in, sig_out, self.config.fourier_order)
        if self.kind == "pointnet":
            return PointNetConv(sig_in.dim, sig_out.dim, self.config.pointnet_hidden)
        return PLAIN_CONVS[self.kind](sig_in.dim, sig_out.dim)

    def norm(self, signature: IrrepSignature) -> nn.Module:
        return IrrepBatchNorm(signature)

    def activation(self, signature: IrrepSignature) -> nn.Module:
        if not self.config.nonlinearity:
            return nn.Identity()
        return RegularNonlinearity(signature, self.config.nonlinearity_samples)


class ResidualBlock(nn.Module):
    """x + norm(conv(act(norm(conv(x)))))."""

    def __init__(self, factory: LayerFactory, signature: IrrepSignature):
        super().__init__()
        self.conv1 = factory.conv(signature, signature)
        self.norm1 = factory.norm(signature)
        self.act = factory.activation(signature)
        self.conv2 = factory.conv(signature, signature)
        self.norm2 = factory.norm(signature)

    def forward(self, x, level):
        h = self.act(self.norm1(self.conv1(x, level)))
        return x + self.norm2(self.conv2(h, level))


class MeshUNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        factory = LayerFactory(config)
        self.factory = factory
        self.signatures = [factory.hidden(w) for w in config.widths[: config.levels]]
        self.in_signature = factory.input_signature()
        self.out_signature = factory.output_signature()
        sigs = self.signatures

        self.lift = factory.conv(self.in_signature, sigs[0])
        self.encoder = nn.ModuleList(
            nn.ModuleList(ResidualBlock(factory, sig) for _ in range(config.blocks_per_level))
            for sig in sigs
        )
        self.down = nn.ModuleList(factory.conv(a, b) for a, b in zip(sigs, sigs[1:]))
        self.up = nn.ModuleList(factory.conv(b + a, a) for a, b in zip(sigs, sigs[1:]))
        self.decoder = nn.ModuleList(
            nn.ModuleList(ResidualBlock(factory, sig) for _ in range(config.blocks_per_level))
            for sig in sigs[:-1]
        )
        self.head = factory.conv(sigs[0], self.out_signature)

    @property
    def levels(self) -> int:
        return self.config.levels

    def pool(self, x, level: int, transition):
        if self.factory.equivariant:
            return transport_pool(x, self.signatures[level], transition)
        if self.factory.kind == "pointnet":
            return max_pool(x, transition)
        return mean_pool(x, transition)

    def unpool(self, x, level: int, transition):
        """Bring features from level `level + 1` back to `level`."""
        if self.factory.equivariant:
            return transport_unpool(x, self.signatures[level + 1], transition)
        if self.factory.kind == "pointnet":
            return interpolate_unpool(x, transition)
        return broadcast_unpool(x, transition)

    def forward(self, batch) -> torch.Tensor:
        """Predict (N, T, C) ambient fields for a collated batch."""
        x = self.lift(batch.features, batch.levels[0])
        skips = []
        for i in range(self.levels):
            for block in self.encoder[i]:
                x = block(x, batch.levels[i])
            if i < self.levels - 1:
                skips.append(x)
                x = self.pool(x, i, batch.transitions[i])
                x = self.down[i](x, batch.levels[i + 1])
        for i in reversed(range(self.levels - 1)):
            x = self.unpool(x, i, batch.transitions[i])
            x = concat_fields(x, self.signatures[i + 1], skips[i], self.signatures[i])
            x = self.up[i](x, batch.levels[i])
            for block in self.decoder[i]:
                x = block(x, batch.levels[i])
        x = self.head(x, batch.levels[0])
        if self.factory.equivariant:
            return frame_head(x, self.out_signature, batch.frames, self.config.time_steps)
        return x.reshape(x.shape[0], self.config.time_steps, self.config.out_components)

    def receptive_field(self, levels: list, transitions: list, seed_vertex: int) -> np.ndarray:
        """Vertices of level 0 whose output depends on the input at `seed_vertex`.

        Mirrors forward() with boolean masks over the numpy level and transition arrays.
        """
        mask = np.zeros(levels[0]["n_vertices"], dtype=bool)
        mask[seed_vertex] = True

        def block(m, level):
            return expand_support(expand_support(m, level), level) | m

        mask = expand_support(mask, levels[0])
        skips = []
        for i in range(self.levels):
            for _ in self.encoder[i]:
                mask = block(mask, levels[i])
            if i < self.levels - 1:
                skips.append(mask)
                mask = pool_support(mask, transitions[i])
                mask = expand_support(mask, levels[i + 1])
        for i in reversed(range(self.levels - 1)):
            mask = unpool_support(mask, transitions[i], self.factory.kind == "pointnet")
            mask = expand_support(mask | skips[i], levels[i])
            for _ in self.decoder[i]:
                mask = block(mask, levels[i])
        return expand_support(mask, levels[0])


def expand_support(mask: np.ndarray, level: dict) -> np.ndarray:
    """One convolution: every vertex with a masked neighbour (or masked itself) joins."""
    grown = mask.copy()
    grown[level["centers"][mask[level["neighbors"]]]] = True
    return grown


def pool_support(mask: np.ndarray, transition: dict) -> np.ndarray:
    coarse = np.zeros(transition["n_coarse"], dtype=bool)
    coarse[transition["parent"][mask]] = True
    return coarse


def unpool_support(mask: np.ndarray, transition: dict, interpolate: bool = False) -> np.ndarray:
    if interpolate:
        return mask[transition["interp_index"]].any(axis=1)
    return mask[transition["parent"]]


def initialize(model: nn.Module, seed: int) -> None:
    """Re-draw every convolution's weights from one seeded generator, in module order."""
    generator = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (GemConv, IsotropicConv, PointNetConv)):
            module.reset_parameters(generator)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def build_model(config: Union[ModelConfig, dict]) -> MeshUNet:
    """Assemble and initialize the network described by `config`.

    Raises:
        ConfigInvalidError: The configuration does not validate.
    """
    config = parse_model_config(config)
    model = MeshUNet(config)
    initialize(model, config.seed)
    logging.info(
        f"Built {config.conv_kind} model with {config.levels} level(s), "
        f"{count_parameters(model):,} parameters"
    )
    return model
