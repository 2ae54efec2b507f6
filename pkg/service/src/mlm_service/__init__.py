"""Masked-LM inference service speaking the fewtype provider protocol."""

from .app import MaskedLMBackend, RequestError, ServiceConfig, create_app

__version__ = "0.1.0"

__all__ = ["MaskedLMBackend", "RequestError", "ServiceConfig", "create_app"]
