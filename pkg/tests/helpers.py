"""Shared test utilities: gradient checking and small model fixtures."""

import numpy as np
import pytest

from evidfuse import autodiff as ad
from evidfuse.autodiff import Tape
from evidfuse.masses import Frame
from evidfuse.model import SourceSpec, init_model


def tiny_fusion_setup(seed=0, n=40, d_struct=4, d_text=3, prototypes=3,
                      separation=2.0, encoder_kind="mlp", hidden=8):
    """A small two-source model plus the data it was initialized on.

    Both sources carry class signal along their first axis so short
    training runs make visible progress.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    shift = (labels * 2 - 1)[:, None] * separation / 2.0
    x_struct = rng.normal(size=(n, d_struct))
    x_struct[:, :1] += shift
    x_text = rng.normal(size=(n, d_text))
    x_text[:, :1] += shift
    specs = [
        SourceSpec("struct", encoder_kind, aux_weight=2.0),
        SourceSpec("notes", "text-head", aux_weight=1.0),
    ]
    overrides = {
        "struct": {"hidden_dim": hidden, "output_dim": hidden},
        "notes": {"hidden_dim": hidden, "output_dim": hidden},
    }
    model = init_model(Frame.of_size(2), specs, [x_struct, x_text], labels,
                       seed=seed, prototypes=prototypes, encoder_overrides=overrides)
    return model, [x_struct, x_text], labels


def finite_difference_gradients(f, arrays, step=1e-6):
    """Central differences of a scalar function over a list of arrays."""
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        flat = g.reshape(-1)
        for i in range(base.size):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k].reshape(-1)[i] += step
            minus[k].reshape(-1)[i] -= step
            flat[i] = (float(f(*plus)) - float(f(*minus))) / (2.0 * step)
        grads.append(g)
    return grads


def check_gradients(f, arrays, tol=1e-6, step=1e-6):
    """Tape gradients of f(*arrays) must match central differences.

    f is evaluated both on leaf tensors and on the plain arrays, so the
    two dispatch paths are also checked for value agreement.
    """
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    out = f(*leaves)
    assert isinstance(out, ad.Tensor)
    tape.backward(out)
    numeric = finite_difference_gradients(f, arrays, step=step)
    for leaf, fd in zip(leaves, numeric):
        got = leaf.grad if leaf.grad is not None else np.zeros_like(fd)
        np.testing.assert_allclose(got, fd, rtol=tol, atol=tol)
    assert float(f(*arrays)) == pytest.approx(float(out.value), abs=1e-14)
