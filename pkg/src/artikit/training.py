"""Training loop for the noise predictor, with checkpoints and logs.

Checkpoint container: a ``.npz`` archive holding one array per
parameter (key ``p.<name>``), optimizer moments (``m.<name>``,
``v.<name>``), normalization stats (``stats_mean``/``stats_scale``)
and a ``__meta__`` JSON string with the codec, denoiser and schedule
configs plus resume counters and the packed RNG state.  Everything is
stored as float64, so save -> load -> forward is bit-exact.

Training log: CSV with columns ``step,epoch,train_loss,val_loss``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import denoiser as dn
from .diffusion import NoiseSchedule, draw_training_batch, loss_weight, training_loss
from .graph import NormalizationStats


class TrainingDiverged(ValueError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    weighted_loss: bool = False
    grad_clip: float | None = 10.0
    checkpoint_interval: int = 0
    val_seed: int = 1234
    n_jobs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(eq=False)
class Checkpoint:
    """Everything needed to sample from (or keep training) a model."""

    denoiser_config: dn.DenoiserConfig
    schedule_config: dict
    params: dict[str, np.ndarray]
    codec_config: dict | None = None
    stats_mean: np.ndarray | None = None
    stats_scale: np.ndarray | None = None
    train_state: dict | None = None
    moments: dict[str, np.ndarray] = field(default_factory=dict)

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule.from_dict(self.schedule_config)

    def denoiser(self) -> dn.GraphDenoiser:
        return dn.GraphDenoiser(self.denoiser_config, self.params)

    def stats(self) -> NormalizationStats | None:
        if self.stats_mean is None:
            return None
        return NormalizationStats(mean=self.stats_mean, scale=self.stats_scale)


def save_checkpoint(ckpt: Checkpoint, path) -> str:
    """Write the checkpoint archive; returns the actual file path."""
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    meta = {
        "format": "artikit-checkpoint-1",
        "denoiser_config": ckpt.denoiser_config.to_dict(),
        "schedule_config": ckpt.schedule_config,
        "codec_config": ckpt.codec_config,
        "train_state": ckpt.train_state,
        # insertion order is kept so reloaded dicts iterate identically
        "param_names": list(ckpt.params),
    }
    arrays = {f"p.{k}": v for k, v in ckpt.params.items()}
    arrays.update({f"mom.{k}": v for k, v in ckpt.moments.items()})
    if ckpt.stats_mean is not None:
        arrays["stats_mean"] = ckpt.stats_mean
        arrays["stats_scale"] = ckpt.stats_scale
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = str(path)
    if not os.path.exists(path) and os.path.exists(path + ".npz"):
        path += ".npz"
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != "artikit-checkpoint-1":
            raise ValueError(f"{path} is not a recognized checkpoint file")
        params = {k: data[f"p.{k}"] for k in meta["param_names"]}
        moments = {
            k[len("mom."):]: data[k] for k in data.files if k.startswith("mom.")
        }
        stats_mean = data["stats_mean"] if "stats_mean" in data else None
        stats_scale = data["stats_scale"] if "stats_scale" in data else None
    return Checkpoint(
        denoiser_config=dn.DenoiserConfig.from_dict(meta["denoiser_config"]),
        schedule_config=meta["schedule_config"],
        params=params,
        codec_config=meta.get("codec_config"),
        stats_mean=stats_mean,
        stats_scale=stats_scale,
        train_state=meta.get("train_state"),
        moments=moments,
    )


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to the given global L2 norm; returns the
    pre-clip norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def evaluate_val(
    ckpt: Checkpoint,
    x_val: np.ndarray,
    seed: int = 1234,
    weighted: bool = False,
) -> float:
    """Mean noise-matching loss on a validation matrix.

    The step/noise draws come from a fixed seed so the value is
    comparable across epochs.
    """
    return _val_loss(
        ckpt.params, ckpt.denoiser_config, x_val, ckpt.schedule(), seed, weighted
    )


def _val_loss(params, config, x_val, schedule, seed, weighted) -> float:
    x_val = np.atleast_2d(np.asarray(x_val, dtype=float))
    if x_val.shape[0] == 0:
        raise ValueError("validation set is empty")
    rng = np.random.default_rng(seed)
    return training_loss(
        x_val, dn.GraphDenoiser(config, params), rng, schedule, weighted
    )


def _batch_loss_and_grads(params, config, x_t, t, eps, weights, n_jobs):
    if n_jobs in (None, 0, 1) or len(t) < 2:
        return dn.loss_and_grads(params, config, x_t, t, eps, weights)
    chunks = np.array_split(np.arange(len(t)), min(n_jobs, len(t)))
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(dn.loss_and_grads)(
            params, config, x_t[idx], t[idx],
            eps[idx], None if weights is None else weights[idx],
        )
        for idx in chunks
    )
    # deterministic reduction: fixed chunk order, weighted by chunk size
    loss = 0.0
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for idx, (chunk_loss, chunk_grads) in zip(chunks, results):
        w = len(idx) / len(t)
        loss += w * chunk_loss
        for k in grads:
            grads[k] += w * chunk_grads[k]
    return loss, grads


@dataclass(eq=False)
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    history: list[dict]


def train(
    x_train: np.ndarray,
    denoiser_config: dn.DenoiserConfig,
    schedule: NoiseSchedule,
    config: TrainConfig,
    x_val: np.ndarray | None = None,
    codec_config: dict | None = None,
    stats: NormalizationStats | None = None,
    log_path=None,
    checkpoint_path=None,
    resume: Checkpoint | None = None,
) -> TrainResult:
    """Optimize the denoiser on normalized flat vectors.

    Deterministic given ``config.seed`` in single-threaded mode; NaN or
    Inf loss aborts with ``TrainingDiverged``.  ``resume`` continues a
    checkpointed run up to ``config.epochs`` total epochs, reproducing
    the uninterrupted run exactly.  ``checkpoint_path`` enables
    periodic saves every ``config.checkpoint_interval`` epochs.
    """
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    if x_train.shape[0] == 0:
        raise ValueError("training set is empty")
    if x_train.shape[1] != denoiser_config.flat_dim:
        raise ValueError(
            f"training vectors have {x_train.shape[1]} channels, "
            f"denoiser expects {denoiser_config.flat_dim}"
        )
    rng = np.random.default_rng(config.seed)
    if resume is not None:
        params = {k: v.copy() for k, v in resume.params.items()}
        state = dn.AdamState.zeros(params)
        if resume.moments:
            state.m = {k: resume.moments[f"m.{k}"].copy() for k in params}
            state.v = {k: resume.moments[f"v.{k}"].copy() for k in params}
        rs = resume.train_state or {}
        state.step = rs.get("adam_step", 0)
        start_epoch = rs.get("epoch", 0)
        step = rs.get("step", 0)
        if "rng_state" in rs:
            rng.bit_generator.state = json.loads(rs["rng_state"])
    else:
        params = dn.init_params(denoiser_config)
        state = dn.AdamState.zeros(params)
        start_epoch = 0
        step = 0

    def snapshot(epoch: int) -> Checkpoint:
        return Checkpoint(
            denoiser_config=denoiser_config,
            schedule_config=schedule.to_dict(),
            params={k: v.copy() for k, v in params.items()},
            codec_config=codec_config,
            stats_mean=None if stats is None else stats.mean.copy(),
            stats_scale=None if stats is None else stats.scale.copy(),
            train_state={
                "epoch": epoch,
                "step": step,
                "adam_step": state.step,
                "rng_state": json.dumps(rng.bit_generator.state),
            },
            moments={
                **{f"m.{k}": v.copy() for k, v in state.m.items()},
                **{f"v.{k}": v.copy() for k, v in state.v.items()},
            },
        )

    history: list[dict] = []
    best: Checkpoint | None = None
    best_val = np.inf
    log_file = None
    log_writer = None
    if log_path is not None:
        fresh = not (os.path.exists(log_path) and os.path.getsize(log_path) > 0)
        log_file = open(log_path, "a", newline="")
        log_writer = csv.writer(log_file)
        if fresh:
            log_writer.writerow(["step", "epoch", "train_loss", "val_loss"])
    try:
        n = x_train.shape[0]
        for epoch in range(start_epoch, config.epochs):
            perm = rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, config.batch_size):
                idx = perm[lo : lo + config.batch_size]
                batch = x_train[idx]
                t, eps, x_t = draw_training_batch(batch, rng, schedule)
                weights = None
                if config.weighted_loss:
                    weights = np.array([loss_weight(int(ti), schedule) for ti in t])
                loss, grads = _batch_loss_and_grads(
                    params, denoiser_config, x_t, t, eps, weights, config.n_jobs
                )
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"training loss became non-finite at step {step}"
                    )
                if config.grad_clip:
                    clip_gradients(grads, config.grad_clip)
                dn.adam_step(params, grads, state, config.lr)
                epoch_loss += loss * len(idx)
                step += 1
            epoch_loss /= n
            val_loss = None
            if x_val is not None and len(x_val):
                val_loss = _val_loss(
                    params, denoiser_config, x_val, schedule,
                    config.val_seed, config.weighted_loss,
                )
            history.append(
                {
                    "step": step,
                    "epoch": epoch + 1,
                    "train_loss": epoch_loss,
                    "val_loss": val_loss,
                }
            )
            if log_writer is not None:
                log_writer.writerow(
                    [step, epoch + 1, f"{epoch_loss:.10g}",
                     "" if val_loss is None else f"{val_loss:.10g}"]
                )
                log_file.flush()
            score = epoch_loss if val_loss is None else val_loss
            if score < best_val:
                best_val = score
                best = snapshot(epoch + 1)
            if (
                checkpoint_path is not None
                and config.checkpoint_interval
                and (epoch + 1) % config.checkpoint_interval == 0
            ):
                save_checkpoint(snapshot(epoch + 1), checkpoint_path)
    finally:
        if log_file is not None:
            log_file.close()
    final = snapshot(config.epochs if config.epochs > start_epoch else start_epoch)
    if checkpoint_path is not None:
        save_checkpoint(final, checkpoint_path)
    return TrainResult(final=final, best=best if best is not None else final,
                       history=history)
