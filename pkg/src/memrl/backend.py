"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
used otherwise, or when MEMRL_KERNELS=py is set. Either backend satisfies the
same interface (affine_fwd/bwd, gru_cell_fwd/bwd); ops resolve ``impl`` at
call time so tests and benchmarks can switch backends at runtime.
"""

import os

from . import _kernels_py

impl = _kernels_py
name = "python"


def _try_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


def use(which):
    """Select a backend: 'compiled' or 'python'. Returns the active name."""
    global impl, name
    if which == "python":
        impl, name = _kernels_py, "python"
    elif which == "compiled":
        ck = _try_compiled()
        if ck is None:
            raise RuntimeError("compiled kernels are not available")
        impl, name = ck, "compiled"
    else:
        raise ValueError(f"unknown backend {which!r}")
    return name


def available():
    backends = ["python"]
    if _try_compiled() is not None:
        backends.insert(0, "compiled")
    return backends


if os.environ.get("MEMRL_KERNELS", "").lower() not in ("py", "python", "numpy"):
    _ck = _try_compiled()
    if _ck is not None:
        impl, name = _ck, "compiled"
