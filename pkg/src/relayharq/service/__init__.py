"""HTTP service exposing the package over FastAPI."""

from .app import app

__all__ = ["app"]
