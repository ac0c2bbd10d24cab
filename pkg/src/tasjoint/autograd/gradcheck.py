"""Central finite-difference gradient checks."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad, precision


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``, maximised."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck(fn, inputs, seed=0, step=1e-5, wrt=None):
    """Compare backprop against central differences for ``fn(*tensors)``.

    The output is reduced with a fixed random projection so that every
    output element contributes.  ``wrt`` picks which inputs to check
    (default: all).  Returns the max relative error over checked inputs.
    """
    with precision("float64"):
        arrays = [np.array(a, dtype=np.float64) for a in inputs]
        wrt = range(len(arrays)) if wrt is None else wrt
        rng = np.random.default_rng(seed)

        with no_grad():
            probe = fn(*[Tensor(a) for a in arrays])
        proj = rng.standard_normal(probe.shape)

        def scalar(arrs):
            with no_grad():
                out = fn(*[Tensor(a) for a in arrs])
            return float(np.sum(out.data * proj))

        tensors = [Tensor(a.copy(), requires_grad=(i in wrt)) for i, a in enumerate(arrays)]
        out = fn(*tensors)
        (out * Tensor(proj)).sum().backward()

        worst = 0.0
        for i in wrt:
            analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(arrays[i])
            numeric = np.zeros_like(arrays[i])
            flat = arrays[i].reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                fp = scalar(arrays)
                flat[j] = orig - step
                fm = scalar(arrays)
                flat[j] = orig
                numeric.reshape(-1)[j] = (fp - fm) / (2 * step)
            worst = max(worst, relative_error(analytic, numeric))
        return worst
