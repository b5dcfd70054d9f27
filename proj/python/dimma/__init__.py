"""Python bindings for the dimma C++ core."""

import torch  # noqa: F401  loads libtorch before the extension

from ._core import *  # noqa: F401,F403
from ._core import DimmaError

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
