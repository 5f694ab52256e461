"""Feature embedder: three dilated 3x3 branches (ASPP) then two 3x3 convs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .errors import ShapeError

IN_CHANNELS = 5


@dataclass(frozen=True)
class FemConfig:
    """Channel layout. ``aspp_split`` must sum to ``c_m``."""

    c_m: int = 10
    c_1: int = 10
    c_2: int = 20
    dilations: tuple[int, ...] = (1, 2, 4)
    aspp_split: tuple[int, ...] = (4, 3, 3)
    padding_mode: str = "replicate"

    def __post_init__(self):
        if len(self.dilations) != len(self.aspp_split):
            raise ValueError("one channel count per dilation branch is required")
        if sum(self.aspp_split) != self.c_m:
            raise ValueError(f"ASPP split {self.aspp_split} does not sum to C_m={self.c_m}")

    def branch_specs(self) -> list[gc.ConvSpec]:
        return [gc.ConvSpec(IN_CHANNELS, c, dilation=d, padding_mode=self.padding_mode)
                for c, d in zip(self.aspp_split, self.dilations)]

    @property
    def conv1(self) -> gc.ConvSpec:
        return gc.ConvSpec(self.c_m, self.c_1, padding_mode=self.padding_mode)

    @property
    def conv2(self) -> gc.ConvSpec:
        return gc.ConvSpec(self.c_1, self.c_2, padding_mode=self.padding_mode)

    def layers(self) -> list[tuple[str, gc.ConvSpec]]:
        named = [(f"aspp{i}", s) for i, s in enumerate(self.branch_specs())]
        return named + [("conv1", self.conv1), ("conv2", self.conv2)]

    @property
    def num_params(self) -> int:
        return sum(spec.num_params for _, spec in self.layers())


def init_fem_params(config: FemConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    # uniform(+-sqrt(1/fan_in)), zero bias
    params = {}
    for name, spec in config.layers():
        bound = np.sqrt(1.0 / (spec.in_channels * spec.kernel_size**2))
        params[f"{name}.weight"] = rng.uniform(-bound, bound, size=spec.weight_shape)
        params[f"{name}.bias"] = np.zeros(spec.out_channels)
    return params


def fem_forward(x, params, config: FemConfig = FemConfig()):
    """Embed ``x`` ([5,H,W]) into ``Z`` ([C_2,H,W]). Returns ``(Z, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != IN_CHANNELS:
        raise ShapeError(f"FEM expects [{IN_CHANNELS},H,W] features, got {x.shape}")
    pre_m = np.concatenate([
        gc.conv2d_forward(x, spec, params[f"aspp{i}.weight"], params[f"aspp{i}.bias"])
        for i, spec in enumerate(config.branch_specs())
    ])
    xm = gc.relu(pre_m)
    pre_1 = gc.conv2d_forward(xm, config.conv1, params["conv1.weight"], params["conv1.bias"])
    h1 = gc.relu(pre_1)
    pre_2 = gc.conv2d_forward(h1, config.conv2, params["conv2.weight"], params["conv2.bias"])
    z = gc.relu(pre_2)
    cache = {"x": x, "pre_m": pre_m, "xm": xm, "pre_1": pre_1, "h1": h1, "pre_2": pre_2}
    return z, cache


def fem_backward(grad_z, cache, params, config: FemConfig = FemConfig()) -> dict[str, np.ndarray]:
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if grad_z.shape != cache["pre_2"].shape:
        raise ShapeError(f"grad_Z: expected {cache['pre_2'].shape}, got {grad_z.shape}")
    grads = {}
    g = gc.relu_backward(grad_z, cache["pre_2"])
    g, grads["conv2.weight"], grads["conv2.bias"] = gc.conv2d_backward(
        g, cache["h1"], config.conv2, params["conv2.weight"])
    g = gc.relu_backward(g, cache["pre_1"])
    g, grads["conv1.weight"], grads["conv1.bias"] = gc.conv2d_backward(
        g, cache["xm"], config.conv1, params["conv1.weight"])
    g = gc.relu_backward(g, cache["pre_m"])
    start = 0
    for i, spec in enumerate(config.branch_specs()):
        gb = g[start:start + spec.out_channels]
        start += spec.out_channels
        _, grads[f"aspp{i}.weight"], grads[f"aspp{i}.bias"] = gc.conv2d_backward(
            gb, cache["x"], spec, params[f"aspp{i}.weight"])
    return grads
