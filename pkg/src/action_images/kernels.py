"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_pykernels`` are used. Set ``ACTION_IMAGES_PURE_PYTHON=1``
to force the fallback.
"""

from contextlib import contextmanager
import os
import sys

from . import _pykernels

_ckernels = None
if not os.environ.get("ACTION_IMAGES_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None

_impl = _ckernels if _ckernels is not None else _pykernels

BACKEND = "cython" if _ckernels is not None else "numpy"

KERNELS = ("gaussian_map", "gaussian_map_gripper", "centroid", "bilinear", "bicubic", "low_response", "zero_below")

gaussian_map = _impl.gaussian_map
gaussian_map_gripper = _impl.gaussian_map_gripper
centroid = _impl.centroid
bilinear = _impl.bilinear
bicubic = _impl.bicubic
low_response = _impl.low_response
zero_below = _impl.zero_below


def available_backends():
    """Return ``{name: module}`` for every importable kernel backend."""
    out = {"numpy": _pykernels}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out


@contextmanager
def use_backend(name):
    """Temporarily route every kernel through backend ``name`` (for benchmarks and tests)."""
    global BACKEND
    impl = available_backends()[name]
    mod = sys.modules[__name__]
    saved = {k: getattr(mod, k) for k in KERNELS}, BACKEND
    try:
        for k in KERNELS:
            setattr(mod, k, getattr(impl, k))
        BACKEND = name
        yield impl
    finally:
        for k, f in saved[0].items():
            setattr(mod, k, f)
        BACKEND = saved[1]
