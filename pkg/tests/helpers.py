"""Finite-difference oracles shared by the gradient tests."""

import numpy as np

STEP = 1e-5


def numeric_grad(f, x, step=STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        fp = f()
        x[i] = orig - step
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return g


def rel_error(a, b):
    """||a - b|| / (||a|| + ||b||), 0 when both vanish."""
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def check_layer(layer, x, rng, training=False):
    """Max relative error over input and parameter gradients of ``sum(R * layer(x))``."""
    out = layer.forward(x, training, rng)
    R = rng.normal(size=out.shape)

    def loss():
        return float(np.sum(R * layer.forward(x, training, rng)))

    layer.zero_grad()
    layer.forward(x, training, rng)
    dx = layer.backward(R)
    errs = {"input": rel_error(dx, numeric_grad(loss, x))}
    for name, value, grad in list(layer.parameters()):
        analytic = grad.copy()
        errs[name] = rel_error(analytic, numeric_grad(loss, value))
    return errs


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
