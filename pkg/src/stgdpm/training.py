"""DDPM training loop: plain SGD, one-cycle learning rate, checkpointing.

Every source of randomness (initialization, shuffling, diffusion step draws,
noise draws) comes from a single seeded numpy generator, so a run is fully
reproducible given (dataset, config, seed). Checkpoints are canonical JSON
with base64-encoded float64 arrays; save -> load -> save is byte-identical.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch

from stgdpm.denoiser import DenoiserConfig, TrajUGnet, init_params
from stgdpm.diffusion import (
    DEFAULT_BETA_1,
    DEFAULT_BETA_K,
    DEFAULT_K,
    NoiseSchedule,
    make_noise_schedule,
)
from stgdpm.graph import DEFAULT_TAU, build_adjacency, normalize_adjacency

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    batch_size: int = 256
    epochs: int = 100
    lr_init: float = 0.05
    lr_peak: float = 0.2
    lr_final: float | None = None  # defaults to lr_init / 10
    warmup_frac: float = 0.3
    seed: int = 0
    k_steps: int = DEFAULT_K
    beta_1: float = DEFAULT_BETA_1
    beta_k: float = DEFAULT_BETA_K
    tau: float | None = DEFAULT_TAU
    max_steps: int | None = None
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr_init > self.lr_peak:
            raise ValueError("lr_init must not exceed lr_peak")

    @property
    def lr_end(self) -> float:
        return self.lr_init / 10.0 if self.lr_final is None else self.lr_final

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small-scale profile for laptops and tests."""
        base = dict(
            batch_size=16,
            epochs=50,
            lr_init=0.02,
            lr_peak=0.08,
            denoiser=DenoiserConfig(c=8, levels=2),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["denoiser"] = self.denoiser.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["denoiser"] = DenoiserConfig.from_dict(d["denoiser"])
        return cls(**d)


@dataclass
class Checkpoint:
    """Everything needed to resume or reuse a trained denoiser."""

    version: int
    params: dict  # name -> float64 ndarray
    config: TrainConfig
    step: int
    rng_state: dict
    config_hash: str = ""

    @property
    def schedule(self) -> NoiseSchedule:
        return make_noise_schedule(self.config.k_steps, self.config.beta_1, self.config.beta_k)


def one_cycle_lr(step, total_steps, lr_init=0.05, lr_peak=0.2, lr_final=None, warmup_frac=0.3):
    """Learning rate at a given batch step: linear warm-up, cosine decay."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not (0 <= step < total_steps):
        raise ValueError(f"step {step} outside 0..{total_steps - 1}")
    if lr_final is None:
        lr_final = lr_init / 10.0
    warm = warmup_frac * total_steps
    if warm > 0 and step <= warm:
        return lr_init + (lr_peak - lr_init) * step / warm
    denom = max(total_steps - 1 - warm, 1e-12)
    progress = min((step - warm) / denom, 1.0)
    return lr_final + (lr_peak - lr_final) * 0.5 * (1.0 + math.cos(math.pi * progress))


def training_loss(model, scene, a_hat, schedule, rng):
    """Denoising score-matching loss on one scene (one batch element).

    Draws k uniformly in 1..K and eps ~ N(0, I), forms the noisy future via
    the closed-form forward process, and returns the mean squared error
    between eps and the model's prediction as a torch scalar.
    """
    k = int(rng.integers(1, schedule.k_max + 1))
    y0 = torch.as_tensor(scene.y, dtype=torch.float64)
    eps = torch.as_tensor(rng.standard_normal(scene.y.shape), dtype=torch.float64)
    ab = schedule.alpha_bar_at(k)
    y_k = math.sqrt(ab) * y0 + math.sqrt(1.0 - ab) * eps
    x = torch.as_tensor(scene.x, dtype=torch.float64)
    a = torch.as_tensor(a_hat, dtype=torch.float64)
    eps_hat = model(y_k, k, x, a)
    if not torch.all(torch.isfinite(eps_hat)):
        raise FloatingPointError(f"non-finite denoiser output (k={k}, scene={scene.scene_id})")
    return torch.mean((eps - eps_hat) ** 2)


def _snapshot_params(model):
    return {name: p.detach().numpy().copy() for name, p in model.state_dict().items()}


def train(dataset, config, log_path=None):
    """Run the full training loop and return the final :class:`Checkpoint`.

    One SGD step per batch of scenes; the loss for a batch is the mean of
    the per-scene losses, each with its own (k, eps) draw. The one-cycle
    learning rate is evaluated at every batch. Emits one JSON line per
    epoch to ``log_path`` when given. A non-finite loss aborts and returns
    the last end-of-epoch checkpoint.
    """
    if not dataset.scenes:
        raise ValueError("empty dataset")
    t_obs = dataset.scenes[0].t_obs
    t_pred = dataset.scenes[0].t_pred
    for s in dataset.scenes:
        if s.t_obs != t_obs or s.t_pred != t_pred:
            raise ValueError("scenes disagree on T_obs/T_pred")
    den_cfg = dataclasses.replace(config.denoiser, t_obs=t_obs, t_pred=t_pred)
    config = dataclasses.replace(config, denoiser=den_cfg)

    torch.set_num_threads(1)
    rng = np.random.default_rng(config.seed)
    model = init_params(TrajUGnet(den_cfg), rng)
    schedule = make_noise_schedule(config.k_steps, config.beta_1, config.beta_k)
    a_hats = [
        normalize_adjacency(build_adjacency(s, tau=config.tau)).a_hat for s in dataset.scenes
    ]

    n = len(dataset.scenes)
    n_batches = math.ceil(n / config.batch_size)
    total_steps = config.epochs * n_batches
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)

    log_fh = open(log_path, "w") if log_path else None
    last_good = _snapshot_params(model)
    last_good_step = 0
    step = 0
    lr = config.lr_init
    try:
        for epoch in range(config.epochs):
            if step >= total_steps:
                break
            order = rng.permutation(n)
            losses = []
            aborted = False
            for b in range(n_batches):
                if step >= total_steps:
                    break
                idx = order[b * config.batch_size : (b + 1) * config.batch_size]
                loss = torch.stack(
                    [
                        training_loss(model, dataset.scenes[i], a_hats[i], schedule, rng)
                        for i in idx
                    ]
                ).mean()
                if not torch.isfinite(loss):
                    warnings.warn(f"non-finite loss at step {step}; reverting to last checkpoint")
                    aborted = True
                    break
                model.zero_grad()
                loss.backward()
                lr = one_cycle_lr(
                    step, total_steps, config.lr_init, config.lr_peak,
                    config.lr_end, config.warmup_frac,
                )
                with torch.no_grad():
                    for p in model.parameters():
                        if p.grad is not None:
                            p -= lr * p.grad
                losses.append(float(loss.detach()))
                step += 1
            if aborted:
                return Checkpoint(
                    version=CHECKPOINT_VERSION,
                    params=last_good,
                    config=config,
                    step=last_good_step,
                    rng_state=rng.bit_generator.state,
                )
            last_good = _snapshot_params(model)
            last_good_step = step
            if log_fh and losses:
                log_fh.write(
                    json.dumps(
                        {"epoch": epoch, "mean_loss": float(np.mean(losses)), "lr_last": lr}
                    )
                    + "\n"
                )
    finally:
        if log_fh:
            log_fh.close()

    return Checkpoint(
        version=CHECKPOINT_VERSION,
        params=_snapshot_params(model),
        config=config,
        step=step,
        rng_state=rng.bit_generator.state,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> TrajUGnet:
    model = TrajUGnet(ckpt.config.denoiser)
    state = {name: torch.as_tensor(arr, dtype=torch.float64) for name, arr in ckpt.params.items()}
    model.load_state_dict(state)
    return model


# ---------------------------------------------------------------------------
# Checkpoint (de)serialization


def _encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(d):
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").copy()
    return arr.reshape(d["shape"])


class CheckpointError(Exception):
    pass


def save_checkpoint(ckpt: Checkpoint, path):
    doc = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "config_hash": ckpt.config_hash,
        "rng_state": _jsonable_rng_state(ckpt.rng_state),
        "params": {name: _encode_array(arr) for name, arr in ckpt.params.items()},
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def _jsonable_rng_state(state):
    def conv(obj):
        if isinstance(obj, dict):
            return {k: conv(v) for k, v in obj.items()}
        if isinstance(obj, (np.integer,)):
            return int(obj)
        return obj

    return conv(state)


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {path}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError(f"corrupt checkpoint: {path}")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version mismatch: file has {doc['version']}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    try:
        params = {name: _decode_array(d) for name, d in doc["params"].items()}
        config = TrainConfig.from_dict(doc["config"])
        return Checkpoint(
            version=doc["version"],
            params=params,
            config=config,
            step=doc["step"],
            rng_state=doc["rng_state"],
            config_hash=doc.get("config_hash", ""),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint: {path}") from e


# ---------------------------------------------------------------------------
# Gradient checking support


def finite_difference_grads(loss_fn, model, h=1e-5):
    """Central finite differences of ``loss_fn(model)`` w.r.t. every parameter.

    Returns a dict name -> ndarray matching parameter shapes. ``loss_fn``
    must be deterministic (frozen k and eps draws).
    """
    grads = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = np.zeros(tuple(p.shape))
            flat = p.view(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                lp = float(loss_fn(model))
                flat[i] = orig - h
                lm = float(loss_fn(model))
                flat[i] = orig
                gflat[i] = (lp - lm) / (2 * h)
            grads[name] = g
    return grads
