"""HTTP service wrapping the core allocation and simulation library."""

from .app import create_app

__all__ = ["create_app"]
