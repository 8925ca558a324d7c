"""AdamW with decoupled weight decay."""

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .tensor import Tensor


class AdamW:
    """theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * theta.

    The decay term uses the parameter value from before the step. Tensors
    whose gradient is None are treated as having a zero gradient.

    Example:
        >>> optimizer = AdamW(model.parameters(), learning_rate=1e-3)
        >>> optimizer.zero_grad()
        >>> # ... backward ...
        >>> optimizer.step()
    """

    def __init__(
        self,
        parameters: Sequence[Tensor],
        learning_rate: float = 1e-4,
        weight_decay: float = 5e-5,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.parameters: List[Tensor] = list(parameters)
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self._m: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.parameters}
        self._v: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.parameters}

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.grad = None

    def step(self) -> None:
        """Apply one update to every parameter in place."""
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for p in self.parameters:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[id(p)]
            v = self._v[id(p)]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            decay = self.learning_rate * self.weight_decay * p.data
            p.data -= self.learning_rate * update + decay
