"""Shared test fixtures."""

from __future__ import annotations

import pytest

from ssikit import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the jit kernels once up front so timed tests measure the
    # algorithms rather than one-time compilation.
    _kernels.warmup()
