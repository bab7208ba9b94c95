"""Kernel dispatch: compiled extension if importable, pure Python otherwise.

Set ``NEWTON_SOLITON_PURE=1`` to force the fallback.
"""

import os

if os.environ.get("NEWTON_SOLITON_PURE"):
    from ._fallback import apply_phase, pair_interaction, radial_shoot

    BACKEND = "python"
else:
    try:
        from ._kernels import apply_phase, pair_interaction, radial_shoot

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import apply_phase, pair_interaction, radial_shoot

        BACKEND = "python"

__all__ = ["BACKEND", "apply_phase", "pair_interaction", "radial_shoot"]
