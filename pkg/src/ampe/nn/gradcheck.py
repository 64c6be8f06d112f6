"""Finite-difference verification of analytic gradients.

Central differences with parameter mutation in place; the analytic side
goes through forward/backward, the numeric side through two extra
forwards per probed entry. For large networks a deterministic random
subset of entries is probed per parameter.
"""

import numpy as np

from .graph import backward, forward


def grad_check(net, inputs, loss_fn, delta=1e-5, max_entries=200, seed=0, check_inputs=False):
    """Return the worst relative error between analytic and numeric gradients.

    loss_fn(out) must return (scalar_loss, dloss_dout). Relative error is
    |ad - fd| / max(|ad|, |fd|, 1e-6) per probed entry; the max over all
    probes is returned.

    delta may be one step width or a sequence; with several widths each
    probed entry keeps its best agreement. No single width suits every
    entry of a deep net — a relu kink inside the stencil spoils wide steps
    while round-off spoils narrow ones — but a genuine gradient bug is a
    width-independent bias and disagrees at every delta.
    """
    deltas = tuple(np.atleast_1d(delta).astype(float).tolist())
    rng = np.random.default_rng(seed)
    out, cache = forward(net, inputs)
    _, dout = loss_fn(out)
    grads, input_grads = backward(net, cache, dout)

    def loss_at():
        y, _ = forward(net, inputs)
        return loss_fn(y)[0]

    def probe(flat, idx, ad, value_fn):
        orig = flat[idx]
        best = np.inf
        for d in deltas:
            flat[idx] = orig + d
            lp = value_fn()
            flat[idx] = orig - d
            lm = value_fn()
            flat[idx] = orig
            fd = (lp - lm) / (2 * d)
            best = min(best, abs(ad - fd) / max(abs(ad), abs(fd), 1e-6))
        return best

    worst = 0.0
    for path in sorted(net.param_shapes):
        arr = net.params[path]
        g = grads.get(path)
        if g is None:
            raise AssertionError(f"no gradient produced for {path}")
        n = arr.size
        idxs = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in idxs:
            worst = max(worst, probe(flat, idx, gflat[idx], loss_at))

    if check_inputs:
        named = inputs if isinstance(inputs, dict) else {next(iter(net.input_channels)): inputs}
        for iname in sorted(named):
            arr = np.asarray(named[iname], dtype=net.dtype)
            named[iname] = arr
            g = input_grads[iname]
            n = arr.size
            idxs = np.arange(n) if n <= max_entries else rng.choice(n, size=max_entries, replace=False)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)

            def input_loss():
                return loss_fn(forward(net, named if isinstance(inputs, dict) else arr)[0])[0]

            for idx in idxs:
                worst = max(worst, probe(flat, idx, gflat[idx], input_loss))
    return worst
