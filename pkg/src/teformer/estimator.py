"""Scikit-learn style facade: fit on image/mask arrays, predict label maps.

Wraps model construction and the training loop behind the usual
fit/predict/score surface so the segmenter composes with array-based
pipelines.  X is (N, H, W, 3) uint8 (or floats in [0, 1]); y is (N, H, W)
integer labels.  Sizes only need to divide 32: predict reflect-pads and crops
back.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .config import ModelConfig, TrainConfig, tiny_model
from .data import Sample
from .errors import ConfigurationError
from .metrics import confusion_matrix, compute_metrics
from .model import build_model
from .train import image_to_tensor, train_loop
from .validation import check_image_batch, check_mask_batch, pad_to_multiple

_PRESETS = {"tiny": tiny_model, "toy": ModelConfig}


class TEFormerSegmenter(BaseEstimator):
    """Trainable semantic segmenter with a fit/predict interface.

    Parameters
    ----------
    num_classes : number of label classes.
    preset : "tiny" or "toy" base architecture; see ModelConfig for details.
    iterations, lr, weight_decay, batch_size : optimization settings.
    ignore_index : label excluded from the loss and from scoring.
    seed : controls initialization, batch order, and augmentation.
    augment : apply flip/rotation augmentation during fit.
    """

    def __init__(self, num_classes: int = 5, preset: str = "tiny", iterations: int = 200,
                 lr: float = 6e-5, weight_decay: float = 0.01, batch_size: int = 2,
                 ignore_index: int = 255, seed: int = 0, augment: bool = True):
        self.num_classes = num_classes
        self.preset = preset
        self.iterations = iterations
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.ignore_index = ignore_index
        self.seed = seed
        self.augment = augment

    def _configs(self, crop: int) -> tuple[ModelConfig, TrainConfig]:
        if self.preset not in _PRESETS:
            raise ConfigurationError(f"unknown preset '{self.preset}' (known: {sorted(_PRESETS)})")
        model_cfg = dataclasses.replace(
            _PRESETS[self.preset](), num_classes=self.num_classes, seed=self.seed
        )
        train_cfg = TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size,
            iterations=self.iterations, crop=crop, augment=self.augment, seed=self.seed,
        )
        return model_cfg, train_cfg

    def fit(self, X, y):
        X = check_image_batch(X)
        y = check_mask_batch(y, self.num_classes, self.ignore_index)
        if X.shape[:3] != y.shape:
            raise ConfigurationError(f"X {X.shape[:3]} and y {y.shape} disagree")
        h, w = X.shape[1:3]
        if h % 32 or w % 32:
            raise ConfigurationError("training images must have sizes divisible by 32")
        samples = [Sample(img, mask, f"fit_{i:05d}") for i, (img, mask) in enumerate(zip(X, y))]
        model_cfg, train_cfg = self._configs(crop=max(h, w))
        self.model_ = build_model(model_cfg)
        self.result_ = train_loop(
            self.model_, samples, train_cfg, self.num_classes, self.ignore_index
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise ConfigurationError("estimator is not fitted; call fit first")

    def predict_proba(self, X) -> np.ndarray:
        """(N, num_classes, H, W) per-pixel class probabilities."""
        self._check_fitted()
        X = check_image_batch(X)
        self.model_.eval()
        outs = []
        with torch.no_grad():
            for image in X:
                padded, (h, w) = pad_to_multiple(image, 32)
                tensor = image_to_tensor(padded)[None]
                probs = self.model_(tensor).probabilities[0, :, :h, :w]
                outs.append(probs.numpy())
        return np.stack(outs)

    def predict(self, X) -> np.ndarray:
        """(N, H, W) predicted label maps."""
        return self.predict_proba(X).argmax(axis=1).astype(np.int64)

    def score(self, X, y) -> float:
        """Mean IoU of predictions against reference masks."""
        self._check_fitted()
        y = check_mask_batch(y, self.num_classes, self.ignore_index)
        preds = self.predict(X)
        cm = sum(
            confusion_matrix(p, t, self.num_classes, self.ignore_index)
            for p, t in zip(preds, y)
        )
        return compute_metrics(cm).miou
