import numpy as np
import pytest

from mtseq import tensor as T


def central_difference(loss_fn, params, h=1e-6):
    """Finite-difference gradient oracle, independent of the autodiff tape.

    ``loss_fn`` recomputes the scalar loss from the tensors' current data;
    each entry is perturbed in place by +/- h.
    """
    out = {}
    for key, t in params.items():
        grad = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        out[key] = grad
    return out


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def assert_gradients_match(loss_fn, params, tol=1e-4, h=1e-6, fd_floor=1e-9):
    """Compare tape gradients against the central-difference oracle.

    ``loss_fn`` returns a scalar Tensor rebuilt from the params' current
    data.  Runs in whatever dtype the params were built with; callers use
    float64.  Checks every parameter entry at the stated tolerance.

    Central differences at step h on an O(1) float64 loss cannot resolve
    derivatives below roughly eps/h ~ 1e-9; when both sides sit under that
    floor they agree the gradient is numerically zero and the relative
    comparison is skipped.
    """
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    numeric = central_difference(lambda: loss_fn().item(), params, h=h)
    worst = 0.0
    for key, t in params.items():
        got = np.zeros_like(t.data) if t.grad is None else t.grad
        want = numeric[key]
        for i in range(got.size):
            a, b = got.reshape(-1)[i], want.reshape(-1)[i]
            if abs(a) < fd_floor and abs(b) < fd_floor:
                continue
            err = relative_error(a, b)
            worst = max(worst, err)
            assert err <= tol, (
                f"gradient mismatch for {key}[{i}]: tape={a!r} fd={b!r} rel={err:.3g}"
            )
    return worst


@pytest.fixture
def f64():
    with T.use_dtype(np.float64):
        yield
