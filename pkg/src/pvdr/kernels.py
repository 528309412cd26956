"""Kernel backend selection.

The compiled extension is used when it was built and ``PVDR_PURE`` is unset;
otherwise the numpy implementations take over. ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and not os.environ.get("PVDR_PURE"):
    _active = compiled_kernels
    BACKEND = "compiled"
else:
    _active = _pykernels
    BACKEND = "python"

sweep_batch = _active.sweep_batch
dp_schedule = _active.dp_schedule
enumerate_best = _active.enumerate_best
ssp_flow = getattr(_active, "ssp_flow", _pykernels.ssp_flow)


def available_backends():
    out = {"python": _pykernels}
    if compiled_kernels is not None:
        out["compiled"] = compiled_kernels
    return out

