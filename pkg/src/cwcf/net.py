"""Dense Q-network with a dueling head, hand-written backprop and Adam.

The architecture is fixed: the observation (masked values concatenated with
the mask, width 2n) feeds three ReLU layers, then a scalar state-value head
and a per-action advantage head.  The two are combined as

    Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a')

so the advantages are identifiable.  Gradients are computed analytically for
the summed squared error against constant targets; no autodiff involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = "cwcf-checkpoint"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Wv", "bv", "Wa", "ba")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class QNetwork:
    """Three hidden ReLU layers plus dueling value/advantage heads."""

    def __init__(self, n_features: int, n_classes: int, hidden: int,
                 rng: np.random.Generator | None = None):
        self.n_features = n_features
        self.n_classes = n_classes
        self.hidden = hidden
        self.input_dim = 2 * n_features
        self.n_actions = n_features + n_classes
        if rng is None:
            rng = np.random.default_rng()
        d, h, a = self.input_dim, hidden, self.n_actions
        self.W1 = _glorot(rng, d, h)
        self.b1 = np.zeros(h)
        self.W2 = _glorot(rng, h, h)
        self.b2 = np.zeros(h)
        self.W3 = _glorot(rng, h, h)
        self.b3 = np.zeros(h)
        self.Wv = _glorot(rng, h, 1)
        self.bv = np.zeros(1)
        self.Wa = _glorot(rng, h, a)
        self.ba = np.zeros(a)

    # -- parameter access ----------------------------------------------------

    def params(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def set_params(self, values: list[np.ndarray]) -> None:
        for name, value in zip(PARAM_NAMES, values):
            current = getattr(self, name)
            if current.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{current.shape} vs {value.shape}")
            setattr(self, name, value.astype(np.float64).copy())

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def clone(self) -> "QNetwork":
        other = QNetwork.__new__(QNetwork)
        other.n_features = self.n_features
        other.n_classes = self.n_classes
        other.hidden = self.hidden
        other.input_dim = self.input_dim
        other.n_actions = self.n_actions
        for name in PARAM_NAMES:
            setattr(other, name, getattr(self, name).copy())
        return other

    # -- forward/backward ----------------------------------------------------

    def _check_width(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[1] != self.input_dim:
            raise ValueError(f"observation width {obs.shape[1]}, expected {self.input_dim}")
        return obs

    def forward(self, obs: np.ndarray) -> np.ndarray:
        q, _ = self.forward_cached(obs)
        return q

    def forward_cached(self, obs: np.ndarray):
        """Q-values plus the intermediates needed by :meth:`gradient`."""
        x = self._check_width(obs)
        z1 = x @ self.W1 + self.b1
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ self.W2 + self.b2
        h2 = np.maximum(z2, 0.0)
        z3 = h2 @ self.W3 + self.b3
        h3 = np.maximum(z3, 0.0)
        v = h3 @ self.Wv + self.bv                  # [B, 1]
        adv = h3 @ self.Wa + self.ba                # [B, A]
        q = v + adv - adv.mean(axis=1, keepdims=True)
        return q, (x, z1, h1, z2, h2, z3, h3)

    def value_advantage(self, obs: np.ndarray):
        x = self._check_width(obs)
        h = np.maximum(x @ self.W1 + self.b1, 0.0)
        h = np.maximum(h @ self.W2 + self.b2, 0.0)
        h = np.maximum(h @ self.W3 + self.b3, 0.0)
        return (h @ self.Wv + self.bv), (h @ self.Wa + self.ba)

    def gradient(self, obs: np.ndarray, targets: np.ndarray,
                 target_mask: np.ndarray) -> list[np.ndarray]:
        """Gradient of sum_{i,a in mask} (targets[i,a] - Q[i,a])^2 w.r.t. params.

        `targets` are treated as constants.  Entries outside `target_mask`
        contribute nothing, which is how the feature outputs are kept out of
        classifier pretraining.
        """
        q, cache = self.forward_cached(obs)
        dq = 2.0 * target_mask * (q - targets)              # [B, A]
        return self._backprop(cache, dq)

    def _backprop(self, cache, dq: np.ndarray) -> list[np.ndarray]:
        x, z1, h1, z2, h2, z3, h3 = cache
        dv = dq.sum(axis=1, keepdims=True)                  # [B, 1]
        dadv = dq - dq.sum(axis=1, keepdims=True) / self.n_actions
        dWv = h3.T @ dv
        dbv = dv.sum(axis=0)
        dWa = h3.T @ dadv
        dba = dadv.sum(axis=0)
        dh3 = dv @ self.Wv.T + dadv @ self.Wa.T
        dz3 = dh3 * (z3 > 0)
        dW3 = h2.T @ dz3
        db3 = dz3.sum(axis=0)
        dh2 = dz3 @ self.W3.T
        dz2 = dh2 * (z2 > 0)
        dW2 = h1.T @ dz2
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.W2.T
        dz1 = dh1 * (z1 > 0)
        dW1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        return [dW1, db1, dW2, db2, dW3, db3, dWv, dbv, dWa, dba]

    def gradient_for_actions(self, obs: np.ndarray, actions: np.ndarray,
                             q_targets: np.ndarray) -> list[np.ndarray]:
        """Gradient of sum_i (q_targets[i] - Q(s_i, a_i))^2, one action per row."""
        _, grads = self.loss_and_gradient_for_actions(obs, actions, q_targets)
        return grads

    def loss_and_gradient_for_actions(self, obs: np.ndarray, actions: np.ndarray,
                                      q_targets: np.ndarray):
        obs = self._check_width(obs)
        if len(actions) != obs.shape[0] or len(q_targets) != obs.shape[0]:
            raise ValueError("one action and one target per observation required")
        q, cache = self.forward_cached(obs)
        rows = np.arange(obs.shape[0])
        residual = q[rows, actions] - np.asarray(q_targets, dtype=np.float64)
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * residual
        return float(np.sum(residual * residual)), self._backprop(cache, dq)


def soft_update(target: QNetwork, online: QNetwork, rho: float) -> None:
    """Blend target parameters toward the online ones: phi <- (1-rho) phi + rho theta."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    for name in PARAM_NAMES:
        phi, theta = getattr(target, name), getattr(online, name)
        if phi.shape != theta.shape:
            raise ValueError(f"shape mismatch for {name}")
        phi *= 1.0 - rho
        phi += rho * theta


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


class AdamState:
    """Per-parameter Adam moments with bias correction."""

    def __init__(self, params: list[np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_and_step(adam: AdamState, net: QNetwork, grads: list[np.ndarray],
                  lr: float, max_norm: float = 1.0) -> float:
    """Rescale the gradient to `max_norm` if it is longer, then apply Adam.

    Returns the pre-clip gradient norm.  Non-finite gradients abort with a
    diagnostic naming the offending parameter and the optimizer step.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    for name, g in zip(PARAM_NAMES, grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient in {name} at optimizer step {adam.t + 1}")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    adam.step(net.params(), grads, lr)
    return norm


def lr_schedule(step: int, start: float, minimum: float, scale: float,
                period: int) -> float:
    """Exponential decay in fixed steps, clamped from below."""
    if period <= 0:
        raise ValueError("period must be positive")
    return max(minimum, start * scale ** (step // period))


# -- classifier-head fitting ---------------------------------------------------


def fit_classifier(net: QNetwork, features: np.ndarray, labels: np.ndarray,
                   mask_sampler, steps: int, rng: np.random.Generator,
                   lr: float = 1e-3, batch_size: int = 128) -> None:
    """Regress the classification outputs toward their terminal rewards.

    Each batch draws random samples and a mask per row from `mask_sampler`
    (called with the rng and the drawn row indices).  The target for the
    true class is 0 and -1 for every other class; feature-action outputs are
    excluded from the loss, so their weights only move through the shared
    trunk.
    """
    n = net.n_features
    adam = AdamState(net.params())
    class_targets = np.full((batch_size, net.n_actions), 0.0)
    class_mask = np.zeros((batch_size, net.n_actions))
    class_mask[:, n:] = 1.0
    for _ in range(steps):
        idx = rng.integers(0, len(features), size=batch_size)
        masks = mask_sampler(rng, idx)
        obs = np.concatenate([features[idx] * masks, masks], axis=1)
        class_targets[:, n:] = -1.0
        class_targets[np.arange(batch_size), n + labels[idx]] = 0.0
        grads = net.gradient(obs, class_targets, class_mask)
        clip_and_step(adam, net, grads, lr)


# -- checkpoints ---------------------------------------------------------------


@dataclass
class Checkpoint:
    n_features: int
    n_classes: int
    hidden: int
    theta: list[np.ndarray]
    phi: list[np.ndarray]
    adam_m: list[np.ndarray]
    adam_v: list[np.ndarray]
    adam_t: int
    step: int
    rng_state: dict | None = None
    meta: dict | None = None

    def build_net(self) -> QNetwork:
        net = QNetwork(self.n_features, self.n_classes, self.hidden,
                       np.random.default_rng(0))
        net.set_params(self.theta)
        return net

    def build_target(self) -> QNetwork:
        net = self.build_net()
        net.set_params(self.phi)
        return net


def save_checkpoint(path: str | Path, net: QNetwork, target: QNetwork | None = None,
                    adam: AdamState | None = None, step: int = 0,
                    rng: np.random.Generator | None = None,
                    meta: dict | None = None) -> None:
    target = target if target is not None else net
    adam = adam if adam is not None else AdamState(net.params())
    arrays: dict[str, np.ndarray] = {
        "magic": np.array(CHECKPOINT_MAGIC),
        "version": np.array(CHECKPOINT_VERSION),
        "n_features": np.array(net.n_features),
        "n_classes": np.array(net.n_classes),
        "hidden": np.array(net.hidden),
        "adam_t": np.array(adam.t),
        "step": np.array(step),
        "rng_state": np.array(json.dumps(rng.bit_generator.state) if rng else ""),
        "meta": np.array(json.dumps(meta or {})),
    }
    for name, p in zip(PARAM_NAMES, net.params()):
        arrays[f"theta_{name}"] = p
    for name, p in zip(PARAM_NAMES, target.params()):
        arrays[f"phi_{name}"] = p
    for name, m, v in zip(PARAM_NAMES, adam.m, adam.v):
        arrays[f"adam_m_{name}"] = m
        arrays[f"adam_v_{name}"] = v
    np.savez_compressed(path, **arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        if str(z["magic"]) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(z["version"]) > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {int(z['version'])}")
        rng_state = str(z["rng_state"])
        return Checkpoint(
            n_features=int(z["n_features"]),
            n_classes=int(z["n_classes"]),
            hidden=int(z["hidden"]),
            theta=[z[f"theta_{name}"] for name in PARAM_NAMES],
            phi=[z[f"phi_{name}"] for name in PARAM_NAMES],
            adam_m=[z[f"adam_m_{name}"] for name in PARAM_NAMES],
            adam_v=[z[f"adam_v_{name}"] for name in PARAM_NAMES],
            adam_t=int(z["adam_t"]),
            step=int(z["step"]),
            rng_state=json.loads(rng_state) if rng_state else None,
            meta=json.loads(str(z["meta"])),
        )
