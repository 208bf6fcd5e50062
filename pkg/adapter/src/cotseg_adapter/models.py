"""Opt-in model mode: wrap a real promptable segmentation model.

A wrapper is named on the command line as "package.module:factory"; the
factory returns an object with capabilities() -> dict and
segment(image_rgb, meta_query) -> float score array in [0, 1]. Nothing
here touches a GPU; heavyweight wrappers live in their own packages.
"""

from __future__ import annotations

import importlib
from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class ModelWrapper(Protocol):
    def capabilities(self) -> dict: ...

    def segment(self, image: np.ndarray, meta_query: dict) -> np.ndarray: ...


def load_wrapper(spec: str) -> ModelWrapper:
    module_name, _, attr = spec.partition(":")
    module = importlib.import_module(module_name)
    factory = getattr(module, attr or "create")
    wrapper = factory()
    if not isinstance(wrapper, ModelWrapper):
        raise TypeError(f"{spec} did not produce a model wrapper (needs capabilities() and segment())")
    return wrapper


class ModelBackend:
    def __init__(self, wrapper: ModelWrapper):
        self._wrapper = wrapper

    def capabilities(self) -> dict:
        return dict(self._wrapper.capabilities())

    def segment(self, image: np.ndarray, meta_query: dict) -> np.ndarray:
        scores = np.asarray(self._wrapper.segment(image, meta_query), dtype=np.float64)
        if scores.shape != image.shape[:2]:
            raise ValueError(f"wrapper returned {scores.shape}, image is {image.shape[:2]}")
        return np.clip(scores, 0.0, 1.0)
