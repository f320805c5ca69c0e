"""HTTP service exposing the reconstruction stages."""

from .app import app

__all__ = ["app"]
