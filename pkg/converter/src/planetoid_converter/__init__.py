from .core import ConversionError, convert

__all__ = ["convert", "ConversionError"]
