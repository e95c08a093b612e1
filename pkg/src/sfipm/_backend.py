"""Select the compiled kernels when available, the pure-Python ones otherwise.

Set ``SFIPM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("SFIPM_PURE_PYTHON"):
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        kernels = _fallback

NAME = kernels.NAME
