"""Pick the compiled forest kernels when available, else the numpy fallback.

Set ``SPATIALCP_BACKEND=python`` to force the fallback.
"""
import logging
import os

logger = logging.getLogger(__name__)

_forced = os.environ.get("SPATIALCP_BACKEND", "").strip().lower()

if _forced == "python":
    from . import _fallback as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        if _forced == "cython":
            raise
        from . import _fallback as kernels
        BACKEND = "python"
        logger.info("compiled kernels unavailable, using the numpy fallback")

__all__ = ["kernels", "BACKEND"]
