"""Shared fixtures and the finite-difference harness used across tests.

The harness flattens a model's parameters into one vector and adapts each
per-sample loss to the (loss, flat gradient) signature the checker expects.
Random configurations are redrawn when they are numerically unsuitable for
central differences in double precision: a loss sitting on a hinge kink or
pooling tie, or a gradient coordinate inside the band (1e-12, 1e-6) where
the finite-difference signal drops below float64 rounding noise. Real
gradient bugs produce wrongly scaled coordinates and still fail loudly.
"""

import numpy as np
import pytest

from embkit.corpus import CorpusStream, Vocabulary, build_vocabulary
from embkit.optim import Param


def arrays_of(params):
    return {k: (p.value if isinstance(p, Param) else p) for k, p in params.items()}


def pack(arrs):
    return np.concatenate([np.asarray(a).ravel() for a in arrs.values()])


def unpack(theta, arrs):
    pos = 0
    for a in arrs.values():
        a[...] = theta[pos:pos + a.size].reshape(a.shape)
        pos += a.size


def flat_checker(params, loss_fn):
    """Build f(theta) -> (loss, flat grad) over the given parameter dict.

    `loss_fn` must return (loss, grads) with grads keyed like params.
    """
    arrs = arrays_of(params)
    names = list(arrs)

    def f(theta):
        unpack(theta, arrs)
        loss, grads = loss_fn()
        flat = np.concatenate([np.asarray(grads[k]).ravel() for k in names])
        return loss, flat

    return f, pack(arrs)


def in_noise_band(flat_grad, hi=1e-6):
    """True when some coordinate is nonzero but too small for central
    differences to resolve. Exactly-zero coordinates are safe: the bumped
    value never enters the computation, so both loss evaluations are
    bitwise identical. Tiny nonzero residues come from float cancellation,
    and the same cancellation makes the finite difference pure noise."""
    mag = np.abs(flat_grad)
    return bool(np.any((mag > 0.0) & (mag < hi)))


def densify_row_grads(shape, grads):
    """Convert _e_rows/_e_ids sparse gradients into a dense 'e' entry."""
    out = {k: v for k, v in grads.items() if not k.startswith("_")}
    e = np.zeros(shape)
    np.add.at(e, grads["_e_ids"], grads["_e_rows"])
    out["e"] = e
    return out


@pytest.fixture
def small_vocab():
    tokens = [f"w{i}" for i in range(6)]
    return Vocabulary(tokens, [8, 5, 4, 3, 2, 2])


@pytest.fixture
def toy_corpus():
    rng = np.random.default_rng(123)
    zipf = np.array([1.0 / (r + 1) for r in range(8)])
    zipf /= zipf.sum()
    docs = [[f"w{rng.choice(8, p=zipf)}" for _ in range(40)] for _ in range(60)]
    return CorpusStream(docs)


@pytest.fixture
def toy_vocab(toy_corpus):
    return build_vocabulary(toy_corpus.all_tokens(), min_count=1)
