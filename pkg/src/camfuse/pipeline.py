"""Upstream geometry and synthetic token generation.

Covers what sits in front of fusion without any neural weights: uniform
frame sampling with boundary drop, patch-grid token arithmetic, resize/pad
placement geometry, and seeded synthetic stand-ins for the two encoders.
Only geometry is computed here; no pixels are resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import FusionConfig, FusionInputs
from .tensor import TokenTensor

__all__ = [
    "SAMPLE_COUNT",
    "SamplingPlan",
    "plan_sampling",
    "PatchGeometry",
    "patch_tokens",
    "PreprocessSpec",
    "ResizePlacement",
    "PaddedPlacement",
    "preprocess_geometry",
    "synth_tokens",
]

# uniform probes per clip; first and last are dropped after sampling
SAMPLE_COUNT = 34


@dataclass(frozen=True)
class SamplingPlan:
    total_frames: int
    sampled_indices: tuple[int, ...]
    kept_indices: tuple[int, ...]


def plan_sampling(total_frames: int, sample_count: int = SAMPLE_COUNT) -> SamplingPlan:
    """Uniformly probe `sample_count` frame indices, then drop the first and
    last sampled frames.

    Probe k lands on floor(k * total_frames / sample_count). Short clips
    (total_frames < sample_count) repeat indices; repeats are collapsed, so
    the kept list degrades gracefully instead of failing.
    """
    if total_frames < 1:
        raise ValueError("cannot sample from an empty clip")
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    raw = [k * total_frames // sample_count for k in range(sample_count)]
    sampled = tuple(sorted(set(raw)))
    return SamplingPlan(total_frames, sampled, sampled[1:-1])


@dataclass(frozen=True)
class PatchGeometry:
    """Patch grid of one encoder over an image plane."""

    height: int
    width: int
    patch: int
    tokens: int

    def __post_init__(self):
        expected = (self.height // self.patch) * (self.width // self.patch)
        if self.tokens != expected:
            raise ValueError(f"token count {self.tokens} inconsistent with grid ({expected})")

    @classmethod
    def of(cls, height: int, width: int, patch: int) -> "PatchGeometry":
        return cls(height, width, patch, patch_tokens(height, width, patch))


def patch_tokens(height: int, width: int, patch: int) -> int:
    """Number of patch tokens: floor(H/p) * floor(W/p)."""
    if height < 1 or width < 1 or patch < 1:
        raise ValueError(f"dimensions must be positive, got {height}x{width} patch {patch}")
    return (height // patch) * (width // patch)


@dataclass(frozen=True)
class PreprocessSpec:
    """Target geometry for the two encoder inputs."""

    visual_size: tuple[int, int] = (448, 448)
    spatial_size: tuple[int, int] = (518, 518)
    pad_value: float = 0.0
    pad_layout: str = "centered"

    def __post_init__(self):
        if self.spatial_size[0] < self.visual_size[0] or self.spatial_size[1] < self.visual_size[1]:
            raise ValueError("spatial canvas must be at least as large as the visual target")
        if self.pad_layout != "centered":
            raise ValueError(f"unsupported pad layout {self.pad_layout!r}")


@dataclass(frozen=True)
class ResizePlacement:
    """Plain resize to a fixed target; aspect ratio is not preserved."""

    target_h: int
    target_w: int
    scale_y: float
    scale_x: float


@dataclass(frozen=True)
class PaddedPlacement:
    """Resized content centered on a constant-valued canvas."""

    canvas_h: int
    canvas_w: int
    content_h: int
    content_w: int
    offset_y: int
    offset_x: int
    pad_value: float


def preprocess_geometry(src_h: int, src_w: int,
                        spec: PreprocessSpec = PreprocessSpec()
                        ) -> tuple[ResizePlacement, PaddedPlacement]:
    """Placement geometry for a source image on both encoder inputs.

    The visual branch scales the source to its fixed target. The spatial
    branch takes the same resized content and centers it on a larger
    zero-valued canvas.
    """
    if src_h < 1 or src_w < 1:
        raise ValueError(f"source image has no area: {src_h}x{src_w}")
    vh, vw = spec.visual_size
    sh, sw = spec.spatial_size
    visual = ResizePlacement(vh, vw, vh / src_h, vw / src_w)
    spatial = PaddedPlacement(
        canvas_h=sh,
        canvas_w=sw,
        content_h=vh,
        content_w=vw,
        offset_y=(sh - vh) // 2,
        offset_x=(sw - vw) // 2,
        pad_value=spec.pad_value,
    )
    return visual, spatial


def synth_tokens(config: FusionConfig, seed: int,
                 distribution: str = "gaussian") -> FusionInputs:
    """Seeded synthetic token streams shaped per the config.

    `distribution` is "gaussian" (standard normal entries) or "unit_sphere"
    (each token row normalized to unit length). The register stream (four
    auxiliary tokens per frame) is always generated so the discard path in
    fusion is exercised.
    """
    if distribution not in ("gaussian", "unit_sphere"):
        raise ValueError(f"unknown distribution {distribution!r}")
    rng = np.random.default_rng(seed)

    def draw(tokens, width):
        data = rng.standard_normal((config.n_frames, tokens, width))
        if distribution == "unit_sphere":
            norms = np.linalg.norm(data, axis=-1, keepdims=True)
            data = data / norms
        return TokenTensor(data)

    return FusionInputs(
        visual=draw(config.m_visual, config.d_visual),
        spatial=draw(config.m_spatial, config.d_spatial),
        camera=draw(1, config.d_spatial),
        register=draw(4, config.d_spatial),
    )
