"""Central finite-difference verification of analytic gradients.

Checks run in float64.  Because several layers are only piecewise smooth
(LeakyReLU, ReLU, MaxPool), a coordinate whose +/-h evaluations straddle a
kink gives a meaningless difference quotient; such coordinates are detected
by comparing the h and h/2 estimates and skipped rather than failed.
Stochastic layers must be made repeatable by the caller (the helpers here
re-seed the forward rng before every evaluation, so dropout masks are
identical across perturbations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckFailure:
    tensor: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _sample_indices(rng, shape, n: int):
    size = int(np.prod(shape)) if shape else 1
    take = min(n, size)
    flat = rng.choice(size, size=take, replace=False)
    return [np.unravel_index(i, shape) if shape else () for i in flat]


def check_tensor_gradient(
    loss_fn,
    tensor: np.ndarray,
    analytic: np.ndarray,
    name: str = "tensor",
    n_coords: int = 6,
    h: float = 1e-6,
    tol: float = 1e-4,
    rng=None,
) -> list[GradCheckFailure]:
    """Compare sampled coordinates of ``analytic`` against central differences.

    ``loss_fn`` is a zero-argument callable returning the scalar loss; it must
    observe in-place modifications of ``tensor``.  Coordinates where the
    difference quotient is step-size-unstable (a kink within +/-h) are skipped.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    failures = []
    for idx in _sample_indices(rng, tensor.shape, n_coords):
        original = tensor[idx]
        step = h * max(1.0, abs(float(original)))

        def numeric(delta):
            tensor[idx] = original + delta
            plus = loss_fn()
            tensor[idx] = original - delta
            minus = loss_fn()
            tensor[idx] = original
            return (plus - minus) / (2.0 * delta)

        estimate = numeric(step)
        err = relative_error(float(analytic[idx]), estimate)
        if err >= tol:
            # kink detection: a smooth loss halves its truncation error when
            # the step halves; straddling a kink makes the estimate jump
            refined = numeric(step / 2.0)
            if relative_error(estimate, refined) > 1e-3:
                continue
            err = relative_error(float(analytic[idx]), refined)
            if err < tol:
                continue
            failures.append(GradCheckFailure(name, idx, float(analytic[idx]), refined, err))
    return failures


def check_layer_gradients(
    layer,
    x: np.ndarray,
    train: bool = True,
    n_coords: int = 6,
    h: float = 1e-6,
    tol: float = 1e-4,
    seed: int = 0,
) -> list[GradCheckFailure]:
    """Finite-difference check of one layer's input and parameter gradients.

    The layer output is scalarized with a fixed random projection.  Works on
    float64 layers/inputs.
    """
    rng = np.random.default_rng(seed)
    projection = None

    def loss_fn():
        nonlocal projection
        out = layer.forward(x, train=train, rng=np.random.default_rng(seed + 1))
        if projection is None:
            projection = np.random.default_rng(seed + 2).normal(size=out.shape)
        return float(np.sum(out * projection) + layer.reg_loss())

    loss_fn()  # fixes the projection and caches the unperturbed forward
    grad_in = layer.backward(projection)
    analytic_by_tensor = [("input", x, grad_in)]
    for key, param in layer.params.items():
        analytic_by_tensor.append((f"param:{key}", param, layer.grads[key]))

    failures = []
    for name, tensor, analytic in analytic_by_tensor:
        failures.extend(
            check_tensor_gradient(
                loss_fn, tensor, analytic, name=name, n_coords=n_coords, h=h, tol=tol, rng=rng
            )
        )
    return failures


def check_model_gradients(
    model,
    inputs: list[np.ndarray],
    targets: np.ndarray,
    weights: np.ndarray,
    n_coords: int = 5,
    h: float = 1e-6,
    tol: float = 1e-4,
    seed: int = 0,
) -> list[GradCheckFailure]:
    """Finite-difference check of a full model's parameter gradients.

    The loss is the weighted BCE of the sigmoid outputs plus the model's L2
    penalty, i.e. exactly the training objective.  The model should be built
    in float64.
    """
    from .losses import weighted_bce, weighted_bce_grad

    rng = np.random.default_rng(seed)

    def loss_fn():
        pred = model.forward(inputs, train=True, rng=np.random.default_rng(seed + 1))
        return weighted_bce(pred, targets, weights) + model.reg_loss()

    pred = model.forward(inputs, train=True, rng=np.random.default_rng(seed + 1))
    model.backward(weighted_bce_grad(pred, targets, weights))

    failures = []
    params = model.named_params()
    grads = model.named_grads()
    for name in sorted(params):
        failures.extend(
            check_tensor_gradient(
                loss_fn, params[name], grads[name], name=name,
                n_coords=n_coords, h=h, tol=tol, rng=rng,
            )
        )
    return failures
