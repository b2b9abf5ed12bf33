"""Central finite-difference gradient checking.

This is the independent verification route: it only ever evaluates the
forward pass, so agreement with `fuse_backward` validates the analytic
gradients. Relative error per group is

    max_i |analytic_i - numeric_i| / max(|numeric_i|, floor)

with a small floor so near-zero entries are judged absolutely.
"""

from __future__ import annotations

import numpy as np

from .fusion import FusionConfig, FusionInputs, FusionWeights, fuse, fuse_backward, iter_params
from .tensor import TokenTensor

__all__ = ["finite_difference_grad", "max_relative_error", "check_fuse_gradients"]


def finite_difference_grad(loss, array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar `loss()` w.r.t. `array`.

    Perturbs `array` in place and restores every entry; `loss` must read the
    live array on each call.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = loss()
        flat[i] = orig - step
        fm = loss()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-3) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(n), floor)))


def check_fuse_gradients(inputs: FusionInputs, weights: FusionWeights, config: FusionConfig,
                         *, step: float = 1e-5, cotangent_seed: int = 0,
                         corruption: float = 0.0, floor: float = 1e-3) -> dict[str, float]:
    """Compare fuse_backward against central differences, group by group.

    Returns a dict mapping each input stream and parameter name to its max
    relative error. `corruption` adds a constant to every analytic gradient
    and exists purely as a negative control for the checker itself.
    """
    rng = np.random.default_rng(cotangent_seed)
    cot = TokenTensor(rng.standard_normal(inputs.visual.shape))

    input_grads, weight_grads = fuse_backward(inputs, weights, config, cot)

    def loss():
        return float(np.sum(cot.data * fuse(inputs, weights, config).data))

    groups: list[tuple[str, np.ndarray, np.ndarray]] = [
        ("input.visual", inputs.visual.data, input_grads.visual.data),
        ("input.spatial", inputs.spatial.data, input_grads.spatial.data),
        ("input.camera", inputs.camera.data, input_grads.camera.data),
    ]
    analytic_by_name = dict(iter_params(weight_grads))
    for name, array in iter_params(weights):
        groups.append((name, array, analytic_by_name[name]))

    results: dict[str, float] = {}
    for name, array, analytic in groups:
        numeric = finite_difference_grad(loss, array, step)
        results[name] = max_relative_error(analytic + corruption, numeric, floor)
    return results
