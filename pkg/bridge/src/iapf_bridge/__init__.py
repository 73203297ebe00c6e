"""Model server speaking the iapf wire protocol on stdio, plus fixture recording."""
from .config import BridgeConfig

__version__ = "0.1.0"

__all__ = ["BridgeConfig"]
