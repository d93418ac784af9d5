"""Optimization loop: cross-entropy, AdamW with poly decay, periodic eval/checkpoints.

Runs are a single logical stream, fully deterministic per seed: batch order,
crops, and augmentations are all driven by one generator seeded from the
train config.  A non-finite loss aborts immediately with the offending batch
ids so the failure is reproducible.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import Sample, augment
from .errors import TrainingDiverged
from .metrics import BoundaryScore, MetricsReport, compute_metrics, confusion_matrix

logger = logging.getLogger(__name__)


def cross_entropy_loss(logits: torch.Tensor, target: torch.Tensor, ignore_index: int = 255) -> torch.Tensor:
    """Mean negative log-probability of the target class over non-ignored pixels."""
    valid = (target != ignore_index).sum()
    if valid == 0:
        logger.warning("loss over a batch with no scored pixels; defined as 0")
        return logits.sum() * 0.0
    return F.cross_entropy(logits, target, ignore_index=ignore_index)


def poly_lr(base_lr: float, iteration: int, total: int, power: float = 1.0) -> float:
    """Monotone non-increasing polynomial decay from base_lr to 0."""
    frac = min(iteration / max(total, 1), 1.0)
    return base_lr * (1.0 - frac) ** power


def smoothed(losses: list[float], window: int = 20) -> tuple[float, float]:
    """Mean of the first and last `window` entries of a loss curve."""
    w = min(window, len(losses))
    return float(np.mean(losses[:w])), float(np.mean(losses[-w:]))


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [0, 1]."""
    return torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1)


def _prepare(sample: Sample, crop: int, do_augment: bool, rng: np.random.Generator):
    s = sample
    if do_augment:
        s = augment(s, int(rng.integers(0, 2 ** 31)))
    h, w = s.mask.shape
    if h > crop or w > crop:
        y = int(rng.integers(0, h - crop + 1)) if h > crop else 0
        x = int(rng.integers(0, w - crop + 1)) if w > crop else 0
        s = Sample(s.image[y : y + crop, x : x + crop], s.mask[y : y + crop, x : x + crop], s.id)
    return image_to_tensor(s.image), torch.from_numpy(s.mask.astype(np.int64)), s.id


class BatchSampler:
    """Deterministic shuffled epochs over sample indices."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order: list[int] = []

    def next_batch(self) -> list[int]:
        out = []
        while len(out) < self.batch_size:
            if not self._order:
                self._order = list(self.rng.permutation(self.n))
            out.append(int(self._order.pop()))
        return out


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    val_history: list[tuple[int, MetricsReport]] = field(default_factory=list)
    checkpoint_paths: list[Path] = field(default_factory=list)
    final_state: dict | None = None
    wall_time_s: float = 0.0


def evaluate(model, dataset: list[Sample], num_classes: int, ignore_index: int = 255,
             batch_size: int = 2, device: str = "cpu") -> MetricsReport:
    """Confusion-matrix evaluation over a dataset, with the boundary supplement."""
    model.eval()
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    boundary = BoundaryScore(ignore_index=ignore_index)
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            chunk = dataset[start : start + batch_size]
            images = torch.stack([image_to_tensor(s.image) for s in chunk]).to(device)
            out = model(images)
            preds = out.class_map.cpu().numpy()
            for s, p in zip(chunk, preds):
                cm += confusion_matrix(p, s.mask, num_classes, ignore_index)
                boundary.update(p, s.mask)
    return compute_metrics(cm, boundary_f1=boundary.f1)


def train_loop(model, dataset: list[Sample], cfg: TrainConfig, num_classes: int,
               ignore_index: int = 255, val_dataset: list[Sample] | None = None,
               out_dir: str | Path | None = None, checkpoint_meta: dict | None = None,
               device: str = "cpu") -> TrainResult:
    """AdamW training with poly LR decay; returns the loss curve and checkpoints."""
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    sampler = BatchSampler(len(dataset), cfg.batch_size, rng)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = TrainResult()
    out_dir = Path(out_dir) if out_dir is not None else None
    started = time.perf_counter()

    model.train()
    for it in range(cfg.iterations):
        lr = poly_lr(cfg.lr, it, cfg.iterations, cfg.poly_power)
        for group in optimizer.param_groups:
            group["lr"] = lr
        idxs = sampler.next_batch()
        prepared = [_prepare(dataset[i], cfg.crop, cfg.augment, rng) for i in idxs]
        images = torch.stack([p[0] for p in prepared]).to(device)
        targets = torch.stack([p[1] for p in prepared]).to(device)
        batch_ids = [p[2] for p in prepared]

        optimizer.zero_grad()
        out = model(images)
        loss = cross_entropy_loss(out.logits.data, targets, ignore_index)
        if not torch.isfinite(loss):
            raise TrainingDiverged(it, batch_ids)
        loss.backward()
        optimizer.step()
        result.losses.append(float(loss.detach()))
        result.lrs.append(lr)

        step = it + 1
        if cfg.val_every and val_dataset is not None and step % cfg.val_every == 0:
            report = evaluate(model, val_dataset, num_classes, ignore_index, cfg.batch_size, device)
            result.val_history.append((step, report))
            model.train()
        if cfg.checkpoint_every and out_dir is not None and step % cfg.checkpoint_every == 0:
            result.checkpoint_paths.append(
                save_checkpoint(out_dir / f"ckpt_{step:06d}.tef", model.state_dict(),
                                {**(checkpoint_meta or {}), "iteration": step})
            )

    if val_dataset is not None and (not cfg.val_every or cfg.iterations % cfg.val_every):
        report = evaluate(model, val_dataset, num_classes, ignore_index, cfg.batch_size, device)
        result.val_history.append((cfg.iterations, report))
    if out_dir is not None:
        result.checkpoint_paths.append(
            save_checkpoint(out_dir / "ckpt_final.tef", model.state_dict(),
                            {**(checkpoint_meta or {}), "iteration": cfg.iterations})
        )
    result.final_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    result.wall_time_s = time.perf_counter() - started
    return result
