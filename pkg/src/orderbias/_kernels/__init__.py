"""Kernel selection: compiled PAVA when built, pure-Python otherwise.

Set ``ORDERBIAS_PURE=1`` in the environment to force the pure-Python kernel
(used by the benchmark and by tests that exercise both paths).
"""

from __future__ import annotations

import os

from . import pure

if os.environ.get("ORDERBIAS_PURE") == "1":
    _impl = pure
    HAVE_COMPILED = False
else:
    try:
        from . import _pavac as _impl  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        _impl = pure
        HAVE_COMPILED = False

pava = _impl.pava


def backend() -> str:
    """Name of the active kernel backend."""
    return "compiled" if HAVE_COMPILED else "pure"
