import logging

import numpy as np

from modules.exceptions import ConfigError

logger = logging.getLogger(__name__)


class AdamW:
    """Adam with decoupled weight decay over a model's named weights.

        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g^2
        w = w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
    """

    def __init__(self, model, lr=0.01, weight_decay=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError(f"Invalid learning rate: {lr}", learning_rate=lr)
        if weight_decay < 0:
            raise ConfigError(f"Invalid weight decay: {weight_decay}", weight_decay=weight_decay)
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)", beta1=beta1, beta2=beta2)
        self.model = model
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, grads):
        """Apply one update; parameters without a gradient are left alone"""
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        # Sorted keys keep the update order fixed
        for key in sorted(grads):
            weights = self.model.parameters()[key]
            grad = np.asarray(grads[key], dtype=np.float64)
            if key not in self.m:
                self.m[key] = np.zeros_like(grad)
                self.v[key] = np.zeros_like(grad)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[key] / bias1
            v_hat = self.v[key] / bias2
            w = np.asarray(weights, dtype=np.float64)
            update = m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * w
            self.model.set_parameter(key, (w - self.lr * update).astype(weights.dtype))
