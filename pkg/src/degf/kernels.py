"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-Python mirror takes over transparently. Set DEGF_PURE_PYTHON=1 to
force the pure backend (used by the benchmark and the bit-equality
tests). ``BACKEND`` names whichever implementation is active.
"""

import os

if os.environ.get("DEGF_PURE_PYTHON"):
    from degf import _kernels_py as _impl
else:
    try:
        from degf import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from degf import _kernels_py as _impl

BACKEND: str = _impl.BACKEND_NAME

softmax_into = _impl.softmax
kl_div = _impl.kl_div
js_div = _impl.js_div


def available_backends():
    """Names of the kernel implementations importable in this build."""
    names = ["python"]
    try:
        from degf import _kernels  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
