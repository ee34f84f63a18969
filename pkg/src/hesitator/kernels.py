"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``HESITATOR_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the tests that check both backends agree).
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("HESITATOR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

wadd_scores = _impl.wadd_scores
dominance_profile = _impl.dominance_profile
signed_rank_null = _impl.signed_rank_null
sq_distances = _impl.sq_distances

__all__ = [
    "BACKEND",
    "wadd_scores",
    "dominance_profile",
    "signed_rank_null",
    "sq_distances",
]
