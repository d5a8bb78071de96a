"""Masked-LM serving behind the fill-mask wire protocol."""

__version__ = "0.1.0"

from .app import create_app
from .model import ServedModel, batch_fill
