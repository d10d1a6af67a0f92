import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sclifd import kernels  # noqa: E402

KERNEL_NAMES = ("scl_loss_grad", "kd_loss_grad", "similarity_softmax", "herding_order", "majority_counts")


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = kernels.available_backends()[request.param]
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
