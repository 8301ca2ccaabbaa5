"""texgen-service: HTTP generation service for edge/image-conditioned
texture views, with a deterministic procedural fallback and a compact
trainable diffusion stack."""

from .app import create_app

__all__ = ["create_app"]
__version__ = "0.1.0"
