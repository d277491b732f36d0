"""Loss, normalization, temporal targets, gradients, optimizer, metrics.

The analytic gradient runs reverse-mode through the whole model (including
the kernel parameters and the factored resolvents); the central
finite-difference routine is the independent oracle it is checked against.
Batch gradients use the mean-free sum convention: the gradient of the
summed per-sample relative-L2 loss.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import (
    EmptyDatasetError,
    NonFiniteGradientError,
    NonFiniteLossError,
    NonMonotoneTimesError,
    NonpositiveTauError,
)
from .kernels import PointCloud
from .model import ModelConfig, ParamVector, alpha_indices, forward, forward_graph

__all__ = [
    "NormStats",
    "zscore_fit",
    "zscore_apply",
    "zscore_invert",
    "relative_l2_loss",
    "temporal_target",
    "temporal_reconstruct",
    "all2all_pairs",
    "grad_fd",
    "grad_analytic",
    "loss_and_grad",
    "batch_loss",
    "OptimizerConfig",
    "OptimizerState",
    "optimizer_step",
    "median_rel_l1",
    "mse_mae",
    "rollout",
    "TrainConfig",
    "train_model",
    "evaluate",
    "ALPHA_CLAMP",
]

ZERO_TARGET_FLOOR = 1e-30
ALPHA_CLAMP = -1e-4  # kernel alphas stay in the stable negative regime


# -- normalization -----------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    mu: np.ndarray
    sigma: np.ndarray
    epsilon: float = 1e-10


def zscore_fit(fields) -> NormStats:
    """Per-channel mean/std over a training set (list of (n_i, C) arrays)."""
    arrays = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in fields]
    if not arrays or sum(a.shape[0] for a in arrays) == 0:
        raise EmptyDatasetError("cannot fit normalization on an empty set")
    stacked = np.concatenate(arrays, axis=0)
    return NormStats(mu=stacked.mean(axis=0), sigma=stacked.std(axis=0))


def zscore_apply(stats: NormStats, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mu) / (stats.sigma + stats.epsilon)


def zscore_invert(stats: NormStats, x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * (stats.sigma + stats.epsilon) + stats.mu


# -- loss --------------------------------------------------------------------


def relative_l2_loss(y: np.ndarray, y_hat: np.ndarray) -> float:
    """sqrt(sum ||y - y_hat||^2) / sqrt(sum ||y||^2); NaN sentinel when the
    target norm underflows."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    denom = math.sqrt(float((y**2).sum()))
    if denom < ZERO_TARGET_FLOOR:
        return float("nan")
    return math.sqrt(float(((y - y_hat) ** 2).sum())) / denom


def _loss_graph(pred: Tensor, target: np.ndarray) -> Tensor:
    denom = math.sqrt(float((target**2).sum()))
    if denom < ZERO_TARGET_FLOOR:
        raise NonFiniteLossError("zero-norm target in training batch")
    diff = pred - Tensor(target)
    return ((diff * diff).sum()).sqrt() * (1.0 / denom)


# -- temporal targets --------------------------------------------------------


def temporal_target(mode: str, u_now: np.ndarray, u_future: np.ndarray, tau: float) -> np.ndarray:
    u_now = np.asarray(u_now, dtype=np.float64)
    u_future = np.asarray(u_future, dtype=np.float64)
    if mode == "direct":
        return u_future.copy()
    if tau <= 0:
        raise NonpositiveTauError(f"tau must be positive, got {tau}")
    if mode == "residual":
        return u_future - u_now
    if mode == "derivative":
        return (u_future - u_now) / tau
    raise ValueError(f"unknown temporal mode {mode!r}")


def temporal_reconstruct(mode: str, u_now: np.ndarray, prediction: np.ndarray, tau: float) -> np.ndarray:
    u_now = np.asarray(u_now, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if mode == "direct":
        return prediction.copy()
    if tau <= 0:
        raise NonpositiveTauError(f"tau must be positive, got {tau}")
    if mode == "residual":
        return u_now + prediction
    if mode == "derivative":
        return u_now + tau * prediction
    raise ValueError(f"unknown temporal mode {mode!r}")


def all2all_pairs(times) -> list[tuple[int, int, float, float]]:
    """All (i, j) with t_j > t_i; each entry is (i, j, t_i, tau)."""
    times = np.asarray(times, dtype=np.float64)
    if times.size >= 2 and not np.all(np.diff(times) > 0):
        raise NonMonotoneTimesError("time stamps must be strictly increasing")
    out = []
    for i in range(times.size):
        for j in range(i + 1, times.size):
            out.append((i, j, float(times[i]), float(times[j] - times[i])))
    return out


# -- gradients ---------------------------------------------------------------


def grad_fd(loss_closure, params: np.ndarray, probe_eps: float = 1e-6) -> np.ndarray:
    """Central finite differences, eps scaled per coordinate."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for k in range(params.size):
        eps = probe_eps * (1.0 + abs(params[k]))
        plus = params.copy()
        plus[k] += eps
        minus = params.copy()
        minus[k] -= eps
        lp, lm = loss_closure(plus), loss_closure(minus)
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NonFiniteLossError(f"non-finite loss probing coordinate {k}")
        grad[k] = (lp - lm) / (2.0 * eps)
    return grad


def batch_loss(config: ModelConfig, pv: ParamVector, batch) -> float:
    """Summed per-sample relative-L2 loss (numpy path, no graph)."""
    total = 0.0
    for cloud, queries, target in batch:
        pred = forward(config, pv, cloud, queries)
        loss = relative_l2_loss(target, pred)
        if not np.isfinite(loss):
            raise NonFiniteLossError("non-finite sample loss")
        total += loss
    return total


def loss_and_grad(config: ModelConfig, pv: ParamVector, batch) -> tuple[float, np.ndarray]:
    if not batch:
        raise EmptyDatasetError("empty batch")
    params_t = Tensor(pv.values, requires_grad=True)
    total = None
    for cloud, queries, target in batch:
        pred = forward_graph(config, params_t, pv, cloud, queries)
        l = _loss_graph(pred, np.asarray(target, dtype=np.float64))
        total = l if total is None else total + l
    total.backward()
    loss = float(total.data)
    if not np.isfinite(loss):
        raise NonFiniteLossError("non-finite batch loss")
    return loss, params_t.grad.copy()


def grad_analytic(config: ModelConfig, pv: ParamVector, batch) -> np.ndarray:
    """Reverse-mode gradient of the summed relative-L2 batch loss."""
    return loss_and_grad(config, pv, batch)[1]


# -- optimizer ---------------------------------------------------------------


@dataclass
class OptimizerConfig:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    clip: float = 1.0
    total_steps: int = 1000


@dataclass
class OptimizerState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> "OptimizerState":
        return cls(step=0, m=np.zeros(n), v=np.zeros(n))


def _cosine_lr(cfg: OptimizerConfig, step: int) -> float:
    lr_min = cfg.lr0 / 100.0
    frac = min(step / max(cfg.total_steps, 1), 1.0)
    return lr_min + 0.5 * (cfg.lr0 - lr_min) * (1.0 + math.cos(math.pi * frac))


def optimizer_step(
    state: OptimizerState, params: np.ndarray, grad: np.ndarray, cfg: OptimizerConfig
) -> tuple[OptimizerState, np.ndarray, float]:
    """One AdamW step: global-norm clip, decoupled decay, cosine schedule.

    Returns (new state, new params, learning rate used).
    """
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("gradient contains non-finite entries")
    gnorm = float(np.linalg.norm(grad))
    if cfg.clip > 0 and gnorm > cfg.clip:
        grad = grad * (cfg.clip / gnorm)
    lr = _cosine_lr(cfg, state.step)
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * grad * grad
    t = state.step + 1
    mhat = m / (1 - cfg.beta1**t)
    vhat = v / (1 - cfg.beta2**t)
    new_params = params * (1 - lr * cfg.weight_decay) - lr * mhat / (np.sqrt(vhat) + cfg.eps)
    return OptimizerState(step=t, m=m, v=v), new_params, lr


# -- metrics -----------------------------------------------------------------


def median_rel_l1(preds, truths) -> float:
    """Median relative L1 error in percent.

    Per sample-component e = ||u - u_hat||_1 / ||u||_1; component-wise
    median (even counts average the two middle values), then mean over
    components, times 100. Zero-norm targets are excluded with a warning.
    """
    per_component: dict[int, list[float]] = {}
    excluded = 0
    for u_hat, u in zip(preds, truths):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        u_hat = np.atleast_2d(np.asarray(u_hat, dtype=np.float64))
        for c in range(u.shape[1]):
            denom = float(np.abs(u[:, c]).sum())
            if denom < ZERO_TARGET_FLOOR:
                excluded += 1
                continue
            per_component.setdefault(c, []).append(
                float(np.abs(u[:, c] - u_hat[:, c]).sum()) / denom
            )
    if excluded:
        warnings.warn(f"median_rel_l1: excluded {excluded} zero-norm sample-components")
    if not per_component:
        raise EmptyDatasetError("no valid sample-components")
    medians = [float(np.median(v)) for v in per_component.values()]
    return 100.0 * float(np.mean(medians))


def mse_mae(preds, truths) -> tuple[float, float]:
    diffs = [
        np.asarray(p, dtype=np.float64) - np.asarray(t, dtype=np.float64)
        for p, t in zip(preds, truths)
    ]
    flat = np.concatenate([d.ravel() for d in diffs])
    return float((flat**2).mean()), float(np.abs(flat).mean())


# -- rollout -----------------------------------------------------------------


def rollout(strategy: str, step_fn, u0: np.ndarray, times) -> list[tuple[float, np.ndarray]]:
    """Evolve a state to the final stamp.

    ``step_fn(u_now, t_i, tau) -> u(t_i + tau)`` wraps the trained model
    (including normalization and temporal-mode reconstruction). Direct jumps
    straight to the final time; autoregressive chains the smallest step.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2 or not np.all(np.diff(times) > 0):
        raise NonMonotoneTimesError("need at least two strictly increasing stamps")
    if strategy == "direct":
        t0, tf = float(times[0]), float(times[-1])
        return [(t0, np.asarray(u0).copy()), (tf, step_fn(u0, t0, tf - t0))]
    if strategy == "autoregressive":
        out = [(float(times[0]), np.asarray(u0).copy())]
        u = u0
        for i in range(times.size - 1):
            tau = float(times[i + 1] - times[i])
            u = step_fn(u, float(times[i]), tau)
            out.append((float(times[i + 1]), u))
        return out
    raise ValueError(f"unknown rollout strategy {strategy!r}")


# -- training loop -----------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 4
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    log_path: str | None = None


def _batches(n: int, batch_size: int, steps: int, seed: int):
    """Deterministic cycling order: seeded shuffle per epoch."""
    from .rng import Rng64

    rng = Rng64(seed ^ 0xB41C4E5)
    order: list[int] = []
    while len(order) < steps * batch_size:
        epoch = list(range(n))
        rng.shuffle(epoch)
        order.extend(epoch)
    for s in range(steps):
        yield order[s * batch_size : (s + 1) * batch_size]


def train_model(
    config: ModelConfig,
    pv: ParamVector,
    batch_pool,
    train_cfg: TrainConfig,
    state: OptimizerState | None = None,
    start_step: int = 0,
    stop_step: int | None = None,
):
    """Optimize ``pv`` in place over ``batch_pool`` (list of samples).

    Returns (pv, state, history). Aborts on non-finite loss, keeping the
    last good parameters. Kernel alphas are clamped to the stable negative
    regime after every step. Passing a saved optimizer ``state`` plus the
    matching ``start_step`` resumes a run; the deterministic batch order is
    replayed, so a resumed run is bit-identical to an uninterrupted one.
    """
    opt_cfg = train_cfg.optimizer
    opt_cfg.total_steps = train_cfg.steps
    if state is None:
        state = OptimizerState.fresh(pv.size)
    a_idx = alpha_indices(config, pv)
    history = []
    log_f = open(train_cfg.log_path, "a" if start_step else "w") if train_cfg.log_path else None
    try:
        for step, idxs in enumerate(
            _batches(len(batch_pool), train_cfg.batch_size, train_cfg.steps, train_cfg.seed)
        ):
            if step < start_step:
                continue
            if stop_step is not None and step >= stop_step:
                break
            batch = [batch_pool[i] for i in idxs]
            t0 = time.monotonic()
            try:
                loss_sum, grad = loss_and_grad(config, pv, batch)
            except NonFiniteLossError:
                warnings.warn(f"non-finite loss at step {step}; stopping early")
                break
            loss = loss_sum / len(batch)
            grad = grad / len(batch)
            state, new_values, lr = optimizer_step(state, pv.values, grad, opt_cfg)
            pv.values = new_values
            if a_idx.size:
                pv.values[a_idx] = np.minimum(pv.values[a_idx], ALPHA_CLAMP)
            rec = {
                "step": step,
                "lr": lr,
                "loss": loss,
                "grad_norm": float(np.linalg.norm(grad)),
                "wall_time_s": time.monotonic() - t0,
            }
            history.append(rec)
            if log_f:
                log_f.write(json.dumps(rec) + "\n")
    finally:
        if log_f:
            log_f.close()
    return pv, state, history


def evaluate(config: ModelConfig, pv: ParamVector, samples) -> dict:
    """Median relative L1 (%), MSE, MAE over (cloud, queries, target) samples."""
    preds, truths = [], []
    for cloud, queries, target in samples:
        preds.append(forward(config, pv, cloud, queries))
        truths.append(np.asarray(target, dtype=np.float64))
    return {
        "median_rel_l1_pct": median_rel_l1(preds, truths),
        "mse": mse_mae(preds, truths)[0],
        "mae": mse_mae(preds, truths)[1],
        "num_samples": len(preds),
    }
