"""Desk-scale training: config file, smoothed cross-entropy, the loop.

The run recipe mirrors the reference large-scale setup (AdamW, cosine decay
with linear warmup, label smoothing, stochastic depth) at synthetic-data
scale.  Heavy augmentation (RandAugment / Mixup / CutMix / erasing) is data
plumbing and intentionally absent; see ``configs/paper.cfg`` for the
documented full-scale profile.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .checkpoint import save_checkpoint
from .data import SyntheticDataset, SyntheticSpec
from .mixer import ConfigError
from .model import ModelConfig, build_model, model_config
from .optim import AdamW, NumericsError, cosine_lr
from .tensor import Tensor, backward, exp, log, mul, sub, tsum


# -- loss / metrics -----------------------------------------------------------


def ce_label_smoothing(logits, targets, smoothing=0.0):
    """Mean cross-entropy against (1-eps)*onehot + eps/K targets.

    `logits` is (n, K, 1, 1); the log-softmax shift uses the detached row
    maximum, which leaves the gradient exact.
    """
    n, k = logits.shape[0], logits.shape[1]
    if k < 2:
        raise ValueError(f"cross-entropy needs >= 2 classes, got {k}")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ValueError(f"targets must be shape ({n},), got {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise IndexError(f"target labels must lie in [0, {k})")
    q = np.full((n, k, 1, 1), smoothing / k, dtype=logits.dtype)
    q[np.arange(n), targets, 0, 0] += 1.0 - smoothing
    shift = logits.data.max(axis=1, keepdims=True)
    shifted = sub(logits, Tensor(shift))
    logp = sub(shifted, log(tsum(exp(shifted), (1,))))
    return mul(tsum(mul(Tensor(q), logp)), -1.0 / n)


def accuracy(logits, targets):
    pred = np.argmax(logits.data if isinstance(logits, Tensor) else logits, axis=1).reshape(-1)
    return float((pred == np.asarray(targets)).mean())


# -- configuration ----------------------------------------------------------------


def _int_tuple(text):
    return tuple(int(v) for v in text.split(","))


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults; every field maps to one config-file key."""

    # [model]
    preset: str = "micro"
    norm: str = "mvn"
    drop_path_rate: float | None = None  # None -> preset default
    embed_dims: tuple[int, ...] | None = None
    depths: tuple[int, ...] | None = None
    # [train]
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 1e-3
    warmup_epochs: int = 2
    weight_decay: float = 0.05
    label_smoothing: float = 0.1
    seed: int = 0
    # [data]
    classes: int = 4
    image_size: int = 32
    train_size: int = 512
    val_size: int = 256
    noise: float = 0.05

    def __post_init__(self):
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            raise ConfigError(
                f"warmup_epochs ({self.warmup_epochs}) must be < epochs ({self.epochs})"
            )
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


_SCHEMA = {
    "model": {
        "preset": str,
        "norm": str,
        "drop_path_rate": float,
        "embed_dims": _int_tuple,
        "depths": _int_tuple,
    },
    "train": {
        "epochs": int,
        "batch_size": int,
        "base_lr": float,
        "warmup_epochs": int,
        "weight_decay": float,
        "label_smoothing": float,
        "seed": int,
    },
    "data": {
        "classes": int,
        "image_size": int,
        "train_size": int,
        "val_size": int,
        "noise": float,
    },
}


def parse_config_text(text):
    """Parse the flat key=value format with [section] headers; unknown keys are errors."""
    section = None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        try:
            values[key] = _SCHEMA[section][key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return TrainConfig(**values)


def parse_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def resolve_model_config(cfg):
    overrides = {"num_classes": cfg.classes, "block_norm": cfg.norm}
    if cfg.drop_path_rate is not None:
        overrides["drop_path_rate"] = cfg.drop_path_rate
    if cfg.embed_dims is not None:
        overrides["embed_dims"] = cfg.embed_dims
    if cfg.depths is not None:
        overrides["depths"] = cfg.depths
    return model_config(cfg.preset, **overrides)


def resolve_data_spec(cfg):
    return SyntheticSpec(
        classes=cfg.classes,
        image_size=cfg.image_size,
        noise=cfg.noise,
        seed=cfg.seed,
        train_size=cfg.train_size,
        val_size=cfg.val_size,
    )


# -- checkpoint metadata ----------------------------------------------------------


def model_meta(mc):
    meta = {
        "model.embed_dims": ",".join(str(d) for d in mc.embed_dims),
        "model.depths": ",".join(str(d) for d in mc.depths),
        "model.mlp_ratio": str(mc.mlp_ratio),
        "model.num_classes": str(mc.num_classes),
        "model.norm": mc.block_norm,
        "model.drop_path_rate": repr(mc.drop_path_rate),
    }
    if mc.ablation:
        meta["model.ablation"] = mc.ablation
    return meta


def model_from_meta(meta):
    return ModelConfig(
        embed_dims=_int_tuple(meta["model.embed_dims"]),
        depths=_int_tuple(meta["model.depths"]),
        mlp_ratio=int(meta["model.mlp_ratio"]),
        num_classes=int(meta["model.num_classes"]),
        block_norm=meta["model.norm"],
        drop_path_rate=float(meta["model.drop_path_rate"]),
        ablation=meta.get("model.ablation"),
    )


def data_meta(spec):
    return {
        "data.classes": str(spec.classes),
        "data.image_size": str(spec.image_size),
        "data.noise": repr(spec.noise),
        "data.seed": str(spec.seed),
        "data.train_size": str(spec.train_size),
        "data.val_size": str(spec.val_size),
    }


def data_from_meta(meta, overrides=None):
    fields = {
        "classes": int(meta.get("data.classes", 4)),
        "image_size": int(meta.get("data.image_size", 32)),
        "noise": float(meta.get("data.noise", 0.05)),
        "seed": int(meta.get("data.seed", 0)),
        "train_size": int(meta.get("data.train_size", 512)),
        "val_size": int(meta.get("data.val_size", 256)),
    }
    if overrides:
        fields.update(overrides)
    return SyntheticSpec(**fields)


def parse_data_overrides(text):
    """'classes=4,image_size=32' -> typed override dict for SyntheticSpec."""
    types = {
        "classes": int,
        "image_size": int,
        "noise": float,
        "seed": int,
        "train_size": int,
        "val_size": int,
    }
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in types:
            raise ConfigError(f"bad data spec item {item!r}; keys: {sorted(types)}")
        out[key] = types[key](value.strip())
    return out


# -- evaluation / training loop -------------------------------------------------------


def _batches(indices, batch_size):
    indices = np.asarray(indices)
    for start in range(0, len(indices), batch_size):
        yield indices[start : start + batch_size]


def evaluate(model, dataset, indices, batch_size=64):
    """Inference-mode accuracy over `indices` (frozen batch-norm statistics)."""
    correct = 0
    total = 0
    for chunk in _batches(indices, batch_size):
        images, labels = dataset.batch(chunk)
        logits = model.forward(images, training=False)
        pred = np.argmax(logits.data, axis=1).reshape(-1)
        correct += int((pred == labels).sum())
        total += len(chunk)
    return correct / total if total else 0.0


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float

    def csv_line(self):
        return (
            f"{self.epoch},{self.lr:.8g},{self.train_loss:.8g},"
            f"{self.train_acc:.8g},{self.val_acc:.8g}"
        )


METRICS_HEADER = "epoch,lr,train_loss,train_acc,val_acc"


def train_loop(model, dataset, cfg, out_dir):
    """Run the recipe; writes metrics.csv, last.ckpt, best.ckpt under out_dir.

    Deterministic in single-threaded mode: same config and seed give
    byte-identical metrics and checkpoints.  A non-finite loss or gradient
    aborts with the last epoch checkpoint retained on disk.
    """
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    last_path = os.path.join(out_dir, "last.ckpt")
    best_path = os.path.join(out_dir, "best.ckpt")

    opt = AdamW(
        list(model.named_parameters()), base_lr=cfg.base_lr, weight_decay=cfg.weight_decay
    )
    steps_per_epoch = max(1, math.ceil(cfg.train_size / cfg.batch_size))
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    shuffle_rng = np.random.default_rng((cfg.seed, 101))
    drop_rng = np.random.default_rng((cfg.seed, 202))

    meta = {**model_meta(model.cfg), **data_meta(dataset.spec), "train.seed": str(cfg.seed)}
    save_checkpoint(last_path, model, opt, {**meta, "train.epoch": "0"})
    save_checkpoint(best_path, model, opt, {**meta, "train.epoch": "0"})

    history = []
    best_val = -1.0
    step = 0
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        for epoch in range(1, cfg.epochs + 1):
            perm = shuffle_rng.permutation(np.asarray(dataset.train_indices))
            loss_sum = 0.0
            correct = 0
            seen = 0
            lr = 0.0
            for chunk in _batches(perm, cfg.batch_size):
                images, labels = dataset.batch(chunk)
                model.zero_grad()
                logits = model.forward(images, training=True, rng=drop_rng)
                loss = ce_label_smoothing(logits, labels, cfg.label_smoothing)
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise NumericsError(
                        f"non-finite loss at epoch {epoch}; last checkpoint kept at {last_path}"
                    )
                backward(loss)
                lr = cosine_lr(step, total_steps, warmup_steps, cfg.base_lr)
                opt.step(lr)
                step += 1
                loss_sum += loss_value * len(chunk)
                pred = np.argmax(logits.data, axis=1).reshape(-1)
                correct += int((pred == labels).sum())
                seen += len(chunk)
            val_acc = evaluate(model, dataset, dataset.val_indices, cfg.batch_size)
            row = EpochRow(epoch, lr, loss_sum / seen, correct / seen, val_acc)
            history.append(row)
            metrics.write(row.csv_line() + "\n")
            metrics.flush()
            save_checkpoint(last_path, model, opt, {**meta, "train.epoch": str(epoch)})
            if val_acc >= best_val:
                best_val = val_acc
                save_checkpoint(best_path, model, opt, {**meta, "train.epoch": str(epoch)})
    return history


def run_training(cfg, out_dir, build_seed=None):
    """Build model + dataset from a TrainConfig and train; returns history."""
    mc = resolve_model_config(cfg)
    model = build_model(mc, seed=cfg.seed if build_seed is None else build_seed)
    dataset = SyntheticDataset(resolve_data_spec(cfg))
    return train_loop(model, dataset, cfg, out_dir)
