"""Single-image deraining with a dual-transmission (streak + vapor) rain model."""

__version__ = "0.1.0"
