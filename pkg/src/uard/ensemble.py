"""Multi-head tabular Q-value ensemble.

Heads share one ``(state, action)`` index space and are stored as a single
``(n_heads, n_states, n_actions)`` array. Disagreement between heads is the
model (epistemic) uncertainty: the sample standard deviation across heads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import make_stream

__all__ = ["QEnsemble", "ValueEstimate"]


def head_spread(q: np.ndarray) -> np.ndarray:
    """Sample std (ddof=1) along axis 0, exactly zero when all rows agree.

    Values are shifted by the first row before the usual two-pass formula,
    so identical heads cancel without roundoff.
    """
    return (q - q[0]).std(axis=0, ddof=1)


@dataclass(frozen=True)
class ValueEstimate:
    mu: float
    sigma_m: float


class QEnsemble:
    """N independent tabular Q heads.

    Parameters
    ----------
    heads : ndarray of shape (n_heads, n_states, n_actions)
        Initial tables. Copied.
    learning_rate : float
        TD step size in (0, 1].
    discount_factor : float
        Bootstrap discount in [0, 1).
    """

    def __init__(self, heads, learning_rate: float = 0.1, discount_factor: float = 0.95):
        heads = np.array(heads, dtype=float)
        if heads.ndim != 3:
            raise ValueError(f"heads must be 3-D (n_heads, n_states, n_actions), got {heads.shape}")
        if heads.shape[0] < 2:
            raise ValueError(f"need at least 2 heads, got {heads.shape[0]}")
        if not 0.0 < learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {learning_rate}")
        if not 0.0 <= discount_factor < 1.0:
            raise ValueError(f"discount_factor must be in [0, 1), got {discount_factor}")
        self.heads = heads
        self.learning_rate = float(learning_rate)
        self.discount_factor = float(discount_factor)

    @classmethod
    def init(
        cls,
        n_heads: int,
        n_states: int,
        n_actions: int,
        init_scale: float = 0.01,
        seed: int = 0,
        learning_rate: float = 0.1,
        discount_factor: float = 0.95,
    ) -> "QEnsemble":
        """Draw every head uniformly from ``[-init_scale, init_scale]``.

        Head ``i`` uses its own stream keyed by ``(seed, "q-init", i)``.
        """
        if n_heads < 2:
            raise ValueError(f"need at least 2 heads, got {n_heads}")
        if init_scale < 0:
            raise ValueError(f"init_scale must be >= 0, got {init_scale}")
        heads = np.empty((n_heads, n_states, n_actions))
        for i in range(n_heads):
            rng = make_stream(seed, "q-init", i)
            heads[i] = rng.uniform(-init_scale, init_scale, size=(n_states, n_actions))
        return cls(heads, learning_rate, discount_factor)

    @property
    def n_heads(self) -> int:
        return self.heads.shape[0]

    @property
    def n_states(self) -> int:
        return self.heads.shape[1]

    @property
    def n_actions(self) -> int:
        return self.heads.shape[2]

    def copy(self) -> "QEnsemble":
        return QEnsemble(self.heads, self.learning_rate, self.discount_factor)

    def mean(self, s: int, a: int) -> float:
        return float(self.heads[:, s, a].mean())

    def sigma_m(self, s: int, a: int) -> float:
        return float(head_spread(self.heads[:, s, a]))

    def estimate(self, s: int, a: int) -> ValueEstimate:
        return ValueEstimate(self.mean(s, a), self.sigma_m(s, a))

    def state_stats(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-action ``(mu, sigma_m)`` vectors for state ``s``."""
        q = self.heads[:, s, :]
        return q.mean(axis=0), head_spread(q)

    def mean_table(self) -> np.ndarray:
        return self.heads.mean(axis=0)

    def sigma_table(self) -> np.ndarray:
        return head_spread(self.heads)

    def update(self, s: int, a: int, reward, s_next: int, terminal: bool) -> None:
        """One Q-learning step on every head.

        ``reward`` is a scalar shared by all heads or a length-``n_heads``
        vector giving each head its own target reward.
        """
        q = self.heads
        target = np.asarray(reward, dtype=float)
        if not terminal:
            target = target + self.discount_factor * q[:, s_next, :].max(axis=1)
        q[:, s, a] += self.learning_rate * (target - q[:, s, a])

    def to_csv(self, path: str | Path) -> None:
        """Dump ``state, action, head_0..head_{N-1}, mu, sigma_m`` rows."""
        mu = self.mean_table()
        sd = self.sigma_table()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["state", "action"] + [f"head_{i}" for i in range(self.n_heads)] + ["mu", "sigma_m"]
            )
            for s in range(self.n_states):
                for a in range(self.n_actions):
                    row = [s, a] + [f"{v:.6f}" for v in self.heads[:, s, a]]
                    writer.writerow(row + [f"{mu[s, a]:.6f}", f"{sd[s, a]:.6f}"])
