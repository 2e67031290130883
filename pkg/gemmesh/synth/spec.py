"""Generative parameters sufficient to regenerate an artery mesh."""
from dataclasses import dataclass, field
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from gemmesh.constants import (
    BIFURCATION_TOLERANCE,
    DEFAULT_SEGMENTS,
    MAX_ANGLE,
    SINGLE_MAX_SEVERITY,
    SINGLE_MAX_STENOSES,
    SINGLE_RADIUS_RANGE,
)
from gemmesh.geometry.mesh import Mesh
from gemmesh.synth.loft import RingTable


class Stenosis(BaseModel):
    """Cosine-shaped narrowing centred at arc length `position` (mm) on the spline."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    position: float
    severity: float = Field(ge=0.0, le=SINGLE_MAX_SEVERITY)
    asymmetry: float = Field(0.5, ge=0.0, le=1.0)
    length: float = Field(gt=0.0)


class BranchRadii(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    pmv: float = Field(gt=0.0)
    dmv: float = Field(gt=0.0)
    sb: float = Field(gt=0.0)


class BifurcationAngles(BaseModel):
    """Degrees. beta: DMV to SB; beta_prime: bisector to SB; gamma: PMV entry tilt."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: float
    beta_prime: float
    gamma: float


class ArterySpec(BaseModel):
    """Everything needed to rebuild a synthetic artery deterministically.

    Single arteries carry one centerline in `control_points` and a base `radius`.
    Bifurcating arteries carry PMV+DMV points p1..p7 in `control_points`, the side
    branch p4, s5..s7 in `side_points`, and per-branch radii.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["single", "bifurcating"]
    seed: int
    attempt: int = Field(0, ge=0)
    segments: int = Field(DEFAULT_SEGMENTS, ge=6)
    spacing: Optional[float] = Field(None, gt=0.0)
    control_points: list[list[float]]
    side_points: Optional[list[list[float]]] = None
    radius: Optional[float] = Field(None, gt=0.0)
    radii: Optional[BranchRadii] = None
    stenoses: list[Stenosis] = Field(default_factory=list)
    angles: Optional[BifurcationAngles] = None
    law_residual: Optional[float] = None
    noise_seed: Optional[int] = None
    flow: float = Field(gt=0.0)
    time_steps: int = Field(1, ge=1)
    waveform: Literal["raised_cosine"] = "raised_cosine"

    @model_validator(mode="after")
    def check_kind(self) -> "ArterySpec":
        if self.segments % 2:
            raise ValueError(f"segments must be even, got {self.segments}")
        if self.kind == "single":
            low, high = SINGLE_RADIUS_RANGE
            if self.radius is None or not low <= self.radius <= high:
                raise ValueError(f"single arteries need a radius in [{low}, {high}] mm")
            if len(self.stenoses) > SINGLE_MAX_STENOSES:
                raise ValueError(
                    f"at most {SINGLE_MAX_STENOSES} stenoses, got {len(self.stenoses)}"
                )
        else:
            if self.radii is None or self.angles is None or self.side_points is None:
                raise ValueError("bifurcating arteries need radii, angles and side_points")
            if self.law_residual is not None and abs(self.law_residual) > BIFURCATION_TOLERANCE:
                raise ValueError(f"bifurcation law residual {self.law_residual} is out of bounds")
            a = self.angles
            if max(abs(a.beta), abs(a.beta_prime), abs(a.gamma)) >= MAX_ANGLE:
                raise ValueError("bifurcation angles must stay below 90 degrees")
        return self


@dataclass(frozen=True, eq=False)
class GeneratedArtery:
    """A generated mesh with its spec, ring table and (bifurcating only) proposal draws."""

    spec: ArterySpec
    mesh: Mesh
    rings: RingTable
    proposals: list = field(default_factory=list)
