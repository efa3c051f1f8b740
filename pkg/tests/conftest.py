"""Shared fixtures and the finite-difference gradient checker."""

from __future__ import annotations

import numpy as np
import pytest

from coar_zsl.autodiff import Tensor
from coar_zsl.dataset import SynthSpec, generate_synthetic


def gradcheck(f, arrays, h=1e-5, floor=1e-7):
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps Tensors (one per input array) to a scalar Tensor.  Entries
    where both gradients are below ``floor`` count as agreeing (dead relu
    paths produce exact zeros on both sides, up to FD noise).
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64).copy(), requires_grad=True)
               for a in arrays]
    f(*tensors).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad
                for t in tensors]
    work = [t.data.copy() for t in tensors]

    def value():
        return float(f(*[Tensor(w) for w in work]).data)

    worst = 0.0
    for which, w in enumerate(work):
        flat = w.reshape(-1)
        an_flat = analytic[which].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            scale = max(abs(an_flat[i]), abs(fd))
            if scale < floor:
                continue
            worst = max(worst, abs(an_flat[i] - fd) / scale)
    return worst


def gradcheck_params(loss_fn, params: dict, h=1e-5, floor=1e-7):
    """Like gradcheck but perturbs every entry of a parameter dict.

    ``loss_fn(params) -> Tensor`` must rebuild its graph on each call.
    """
    for p in params.values():
        p.grad = None
    loss_fn(params).backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        an_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn(params).data)
            flat[i] = orig - h
            fm = float(loss_fn(params).data)
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            scale = max(abs(an_flat[i]), abs(fd))
            if scale < floor:
                continue
            worst = max(worst, abs(an_flat[i] - fd) / scale)
    return worst


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small but non-trivial synthetic dataset shared across tests."""
    return generate_synthetic(SynthSpec(
        n_seen=6, n_unseen=2, num_attributes=6, images_per_class=5,
        image_size=32, noise_std=0.02, seed=11))
