"""Kernel backend selection.

The compiled extension is preferred when available; set SAVID_KERNEL=python
to force the numpy fallback. Both backends are bit-identical in float64.
"""

import os

from . import _numpy_impl

_impl = _numpy_impl
if os.environ.get("SAVID_KERNEL", "").lower() != "python":
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        pass

BACKEND: str = _impl.BACKEND
kgf_project_window3x3 = _impl.kgf_project_window3x3
fps = _impl.fps

# always importable by benchmarks/tests regardless of selection
python_impl = _numpy_impl
try:
    from . import _native as native_impl
except ImportError:
    native_impl = None
