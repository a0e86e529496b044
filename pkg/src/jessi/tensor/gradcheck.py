"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .engine import NonFiniteError, Parameter, backward, no_grad
from .rng import RngStream


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def gradient_check(build_loss, params, eps: float = 1e-5, n_coords: int = 100,
                   rng: RngStream | None = None, numeric_loss=None) -> float:
    """Compare analytic gradients against (f(θ+ε) - f(θ-ε)) / 2ε.

    ``build_loss`` rebuilds the scalar loss graph from the current parameter
    values. Coordinates are sampled uniformly over all entries of ``params``
    (every entry when there are at most ``n_coords``). Returns the largest
    relative error seen.

    ``numeric_loss``, when given, is the function differenced instead of
    ``build_loss``. Graphs through ``grad_reverse`` need it: their backward
    pass is by design not the derivative of their forward value.
    """
    params = [p for p in params if isinstance(p, Parameter)]
    for p in params:
        if p.dtype != np.float64:
            raise ValueError(f"gradient checks need float64 parameters, {p.name or p} is {p.dtype}")
    rng = rng or RngStream(0)
    for p in params:
        p.zero_grad()
    loss = build_loss()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite")
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    flat = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords))
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    numeric_loss = numeric_loss or build_loss

    def value() -> float:
        with no_grad():
            v = numeric_loss().data
        if not np.isfinite(v).all():
            raise NonFiniteError("loss is not finite under perturbation")
        return float(v)

    worst = 0.0
    for k in flat:
        i = int(np.searchsorted(offsets, k, side="right") - 1)
        j = int(k - offsets[i])
        view = params[i].data.reshape(-1)
        orig = view[j]
        view[j] = orig + eps
        up = value()
        view[j] = orig - eps
        down = value()
        view[j] = orig
        numeric = (up - down) / (2 * eps)
        worst = max(worst, relative_error(float(analytic[i].reshape(-1)[j]), numeric))
    return worst
