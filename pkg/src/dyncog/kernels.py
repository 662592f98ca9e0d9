"""Hot-loop kernels, compiled when possible.

The Cython extension ``dyncog._ckernels`` is used if it was built; otherwise
the numpy fallback in ``dyncog._pykernels`` is loaded. Set
``DYNCOG_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the active
implementation.
"""

import os

from . import _pykernels

if os.environ.get("DYNCOG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

block_match = _impl.block_match
best_split = _impl.best_split
candidate_offsets = _pykernels.candidate_offsets

__all__ = ["BACKEND", "block_match", "best_split", "candidate_offsets"]
