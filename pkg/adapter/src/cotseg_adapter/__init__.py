"""Segmenter sidecar: serves GET /capabilities and POST /segment over
the shared wire protocol, with a deterministic fixture-backed stub mode
and opt-in wrappers for real models."""

from .service import create_app

__version__ = "0.1.0"

__all__ = ["create_app"]
