"""Backend selection for the hot loops (Ferguson grid, GRU time scans).

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``COLDHARDY_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fergpy, _grupy

BACKEND = "python"
simulate = _fergpy.simulate
grid_sse = _fergpy.grid_sse
gru_scan_forward = _grupy.scan_forward
gru_scan_backward = _grupy.scan_backward

if not os.environ.get("COLDHARDY_PURE_PYTHON"):
    try:
        from ._ext import _fergkernel, _grukernel
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        simulate = _fergkernel.simulate
        grid_sse = _fergkernel.grid_sse
        gru_scan_forward = _grukernel.scan_forward
        gru_scan_backward = _grukernel.scan_backward


def get_backend(name):
    """Return ``(simulate, grid_sse)`` for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _fergpy.simulate, _fergpy.grid_sse
    if name == "cython":
        from ._ext import _fergkernel
        return _fergkernel.simulate, _fergkernel.grid_sse
    raise ValueError(f"unknown backend {name!r}")


def get_gru_backend(name):
    """Return ``(scan_forward, scan_backward)`` for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _grupy.scan_forward, _grupy.scan_backward
    if name == "cython":
        from ._ext import _grukernel
        return _grukernel.scan_forward, _grukernel.scan_backward
    raise ValueError(f"unknown backend {name!r}")


def use(name):
    """Switch every hot loop to one backend for the rest of the process."""
    global BACKEND, simulate, grid_sse, gru_scan_forward, gru_scan_backward
    simulate, grid_sse = get_backend(name)
    gru_scan_forward, gru_scan_backward = get_gru_backend(name)
    BACKEND = name
