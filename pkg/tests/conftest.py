import warnings

import pytest


@pytest.fixture(autouse=True)
def _quiet_numba_threading_warning():
    # the TBB version probe warns on some hosts; harmless for these tests
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*TBB.*")
        yield
