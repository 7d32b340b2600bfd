import numpy as np
import pytest

from proud.backend import HEParams, make_backend


@pytest.fixture(scope="session")
def ckks_params():
    """Default full-size parameter set (ring 8192, one multiply level)."""
    return HEParams.ckks()


@pytest.fixture(scope="session")
def ckks_small():
    """Tiny ring for fast protocol-level tests (32 slots, order <= 5)."""
    return HEParams.ckks(ring_dim=64)


@pytest.fixture
def clear_params():
    return HEParams.clear(slot_count=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def backend_pair(params, seed=0):
    """Fresh backend plus keypair — tests that count ops want clean state."""
    be = make_backend(params, seed=seed)
    pk, sk = be.keygen()
    return be, pk, sk
