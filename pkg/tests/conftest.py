import numpy as np
import pytest

from terranav import network as N


@pytest.fixture(scope="session")
def small_spec():
    return N.NetworkSpec(output_classes=10)


@pytest.fixture(scope="session")
def checkpoint_path(small_spec, tmp_path_factory):
    """A seeded (untrained) extractor checkpoint file shared across tests."""
    params = N.build_network(small_spec, seed=7)
    mean = np.array([0.45, 0.45, 0.45])
    path = tmp_path_factory.mktemp("ckpt") / "net.ckpt"
    N.save_checkpoint(params, mean, str(path), small_spec)
    return str(path)


@pytest.fixture(scope="session")
def frozen_checkpoint(checkpoint_path):
    return N.load_checkpoint(checkpoint_path)


def finite_difference(fn, x, step=1e-4):
    """Central finite-difference gradient of scalar fn at x (elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += step
        xm = x.copy()
        xm[idx] -= step
        grad[idx] = (fn(xp) - fn(xm)) / (2 * step)
        it.iternext()
    return grad


def rel_error(a, b, eps=1e-4):
    denom = np.maximum(np.abs(a) + np.abs(b), eps)
    return np.max(np.abs(a - b) / denom)
