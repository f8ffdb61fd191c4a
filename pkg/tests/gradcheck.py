"""Central-difference check of the funnel's hand-written gradients."""

import numpy as np

from vrident.classifier.funnel import init_params, loss_and_grads


def funnel_gradient_errors(widths=(8, 4), n_classes=3, frames=5, n_in=6, batch=4,
                           n_coords=100, eps=1e-5, seed=0):
    """Relative errors |analytic - numeric| / max(|analytic| + |numeric|, 1e-8)."""
    rng = np.random.default_rng(seed)
    params = init_params(n_in, n_classes, widths, seed, dtype="float64")
    # perturb biases so no gradient entry is structurally zero
    for k in params:
        params[k] = params[k] + 0.1 * rng.normal(size=params[k].shape)
    X = rng.normal(size=(batch, frames, n_in))
    y = rng.integers(0, n_classes, size=batch)
    _, grads = loss_and_grads(params, X, y, len(widths))

    names = sorted(params)
    sizes = np.array([params[k].size for k in names])
    flat = rng.choice(sizes.sum(), size=n_coords, replace=False)
    bounds = np.cumsum(sizes)
    errors = []
    for f in flat:
        j = int(np.searchsorted(bounds, f, side="right"))
        name = names[j]
        pos = np.unravel_index(f - (bounds[j] - sizes[j]), params[name].shape)
        old = params[name][pos]
        params[name][pos] = old + eps
        lp, _ = loss_and_grads(params, X, y, len(widths), head_only=True)
        params[name][pos] = old - eps
        lm, _ = loss_and_grads(params, X, y, len(widths), head_only=True)
        params[name][pos] = old
        num = (lp - lm) / (2 * eps)
        ana = grads[name][pos]
        errors.append(abs(ana - num) / max(abs(ana) + abs(num), 1e-8))
    return np.array(errors)
