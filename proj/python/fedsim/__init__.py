"""Python bindings for the fedsim simulation engine.

The compiled module normally sits next to this file (installed wheels). For
in-tree test runs, FEDSIM_CORE_DIR points at the build directory that holds
the extension.
"""

import os
import sys

try:
    from fedsim._core import *  # noqa: F401,F403
    from fedsim import _core as _core  # noqa: F401
except ImportError:
    _dir = os.environ.get("FEDSIM_CORE_DIR")
    if not _dir:
        raise
    sys.path.insert(0, _dir)
    try:
        from _core import *  # noqa: F401,F403
        import _core as _core  # noqa: F401
    finally:
        sys.path.pop(0)
