"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``SCLIFD_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active implementation and
is recorded in every run manifest, since the two backends agree only to
floating-point rounding.
"""
import os

from sclifd import _pykernels

try:
    from sclifd import _ckernels
except ImportError:  # extension not built
    _ckernels = None

if _ckernels is not None and os.environ.get("SCLIFD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    _impl = _ckernels
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"

scl_loss_grad = _impl.scl_loss_grad
kd_loss_grad = _impl.kd_loss_grad
similarity_softmax = _impl.similarity_softmax
herding_order = _impl.herding_order
majority_counts = _impl.majority_counts


def available_backends():
    """Mapping of backend name to kernel module, for tests and benchmarks."""
    out = {"python": _pykernels}
    if _ckernels is not None:
        out["cython"] = _ckernels
    return out
