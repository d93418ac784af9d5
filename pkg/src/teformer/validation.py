"""Input validation helpers for array-facing entry points."""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigurationError


def check_image_batch(X) -> np.ndarray:
    """Coerce to (N, H, W, 3) uint8; accepts uint8 or floats in [0, 1]."""
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ConfigurationError(f"images must be (N, H, W, 3), got {X.shape}")
    if X.dtype == np.uint8:
        return X
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ConfigurationError("images contain non-finite values")
    if X.min() < 0 or X.max() > 1.0 + 1e-6:
        raise ConfigurationError("float images must lie in [0, 1]")
    return np.clip(X * 255.0, 0, 255).astype(np.uint8)


def check_mask_batch(y, num_classes: int, ignore_index: int = 255) -> np.ndarray:
    """Coerce to (N, H, W) int64 with labels in [0, num_classes) or ignore_index."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.ndim != 3:
        raise ConfigurationError(f"masks must be (N, H, W), got {y.shape}")
    y = y.astype(np.int64)
    bad = (y < 0) | ((y >= num_classes) & (y != ignore_index))
    if bad.any():
        raise ConfigurationError(
            f"mask labels must lie in [0, {num_classes}) or equal ignore_index {ignore_index}"
        )
    return y


def check_finite(t: torch.Tensor, what: str = "tensor") -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise ConfigurationError(f"{what} contains non-finite entries")
    return t


def pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad an (H, W, C) image so both sizes divide `multiple`."""
    h, w = image.shape[:2]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph or pw:
        image = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return image, (h, w)
