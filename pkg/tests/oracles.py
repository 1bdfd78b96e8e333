"""Independent reference computations used by the tests."""
import numpy as np


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f`` at array ``x`` (x is restored afterwards)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)), np.max(np.abs(b))))


def check_param_grads(loss_fn, params, h=1e-5, max_entries=None, rng=None):
    """Relative error between backprop and central differences over ``params``.

    ``loss_fn()`` must rebuild the graph from the current parameter values.
    With ``max_entries`` only that many randomly chosen entries per
    parameter are probed. The error is measured against the largest
    gradient entry across all probed parameters, so a parameter whose
    gradient is identically zero is judged on the same scale as the rest.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    got, want = [], []
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            want.append((up - down) / (2 * h))
        got.extend(ga.reshape(-1)[idx])
    return rel_err(got, want)


def jitter(params, rng, scale=0.05):
    """Move parameters off the zero-bias initialization, where ReLU inputs can sit exactly on the kink."""
    for p in params:
        p.data += scale * rng.normal(size=p.shape)
