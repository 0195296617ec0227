import numpy as np
import pytest

from siam.tensor import Tape, set_default_dtype


@pytest.fixture(autouse=True)
def _float64_default():
    """Numeric tests run in float64 unless they opt out."""
    set_default_dtype("float64")
    yield
    set_default_dtype("float32")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_gradient(f, tensors, h=1e-5, sample=None, seed=0):
    """Central finite differences of scalar f(*tensors) wrt each tensor.

    Independent of the autodiff path: perturbs raw entries and re-runs the
    forward. Returns a list of gradient arrays. `sample` limits the number
    of probed entries per tensor (None = all); unprobed entries are nan.
    """
    out = []
    pick_rng = np.random.default_rng(seed)
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.full(flat.shape, np.nan)
        if sample is None or sample >= flat.size:
            idxs = range(flat.size)
        else:
            idxs = pick_rng.choice(flat.size, sample, replace=False)
        for i in idxs:
            old = flat[i]
            flat[i] = old + h
            fp = f().item()
            flat[i] = old - h
            fm = f().item()
            flat[i] = old
            g[i] = (fp - fm) / (2.0 * h)
        out.append(g.reshape(t.data.shape))
    return out


def max_rel_err(analytic, fds):
    """Worst relative error over probed entries."""
    worst = 0.0
    for a, fd in zip(analytic, fds):
        mask = np.isfinite(fd)
        if not mask.any():
            continue
        a_ = np.asarray(a)[mask]
        f_ = fd[mask]
        denom = np.maximum(np.maximum(np.abs(a_), np.abs(f_)), 1e-8)
        worst = max(worst, float((np.abs(a_ - f_) / denom).max()))
    return worst


def analytic_gradients(f, tensors):
    with Tape() as tape:
        loss = f()
        return tape.gradient(loss, list(tensors))
