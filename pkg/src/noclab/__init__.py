"""noclab: desk-scale classifier heads, preconditioned training regimes,
and optical-flow feature fusion on synthetic data."""

from . import autodiff, datapipe, evaluate, harness, nets, optim
from .errors import (
    ArchMismatch,
    ConfigError,
    InvalidPlan,
    InvalidValue,
    NoclabError,
    NoTrace,
    SizeMismatch,
)

__version__ = "0.1.0"
