import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from s2pnilm import kernels  # noqa: E402
from s2pnilm import neuralnet as nn  # noqa: E402


@pytest.fixture(params=sorted(kernels.BACKENDS))
def kernel_backend(request):
    """Run the test once per available conv backend."""
    previous = kernels.backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def tiny_arch(filters=(4, 4), kernels_=(5, 3), hidden=16):
    specs = []
    for f, k in zip(filters, kernels_):
        specs += [nn.LayerSpec.conv1d(f, k), nn.LayerSpec.relu()]
    specs.append(nn.LayerSpec.flatten())
    if hidden:
        specs += [nn.LayerSpec.dense(hidden), nn.LayerSpec.relu()]
    specs.append(nn.LayerSpec.dense(1))
    return specs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
