"""Central finite-difference oracle for tape gradients."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from src.algorithms.tensor import Tape, Tensor
from src.utils.validators import ConfigurationError

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[], Tensor],
    parameters: Sequence[Tensor],
    eps: float = 1e-5,
    samples_per_parameter: Optional[int] = 20,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare analytic gradients against central differences.

    ``f`` must be deterministic: it is evaluated once on a tape for the analytic
    gradient and twice per sampled coordinate without a tape.

    Args:
        f: Zero-argument function returning a scalar loss that reads ``parameters``
        parameters: Tensors to check; their ``data`` is perturbed in place and restored
        eps: Finite-difference step, in [1e-7, 1e-4]
        samples_per_parameter: Coordinates sampled per tensor (None checks all)
        rng: Generator used to choose coordinates

    Returns:
        Max over sampled coordinates of |analytic - numeric| / max(1, |analytic|)

    Raises:
        ConfigurationError: If eps is outside [1e-7, 1e-4]
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ConfigurationError(f"eps must be in [1e-7, 1e-4], got {eps}")
    rng = rng if rng is not None else np.random.default_rng(0)

    for p in parameters:
        p.grad = None
        # in-place perturbation below needs a flat view, not a copy
        p.data = np.ascontiguousarray(p.data)
    with Tape() as tape:
        loss = f()
    tape.backward(loss, parameters)

    worst = 0.0
    for p in parameters:
        analytic = p.grad.reshape(-1) if p.grad is not None else np.zeros(p.size)
        flat = p.data.reshape(-1)
        if samples_per_parameter is None or samples_per_parameter >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples_per_parameter, replace=False)
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            plus = f().item()
            flat[i] = original - eps
            minus = f().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
            if error > worst:
                worst = error
                logger.debug(
                    "grad_check %s[%d]: analytic=%g numeric=%g", p.name, i, analytic[i], numeric
                )
    return worst
