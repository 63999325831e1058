"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from .autograd import Tensor, decision_signature


def finite_diff_gradcheck(
    loss_fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    eps: float = 1e-5,
    coords_per_param: int = 6,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must rebuild the forward pass from the current parameter
    values (double precision, dropout disabled).  For up to
    ``coords_per_param`` sampled coordinates of every parameter the relative
    error |g_an - g_fd| / max(1e-8, |g_an| + |g_fd|) is computed; the
    maximum over all probes is returned.

    Probes where the +eps and -eps evaluations land on different sides of a
    relu or max-pool decision boundary are discarded: the loss is not
    differentiable across such a kink, so the central difference there
    measures the jump in slope, not the gradient.
    """
    rng = rng or np.random.default_rng(0)
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    for p in params.values():
        p.grad = None

    def probe(value: float):
        with decision_signature() as sig:
            out = float(loss_fn().data)
        return out, sig.digest

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=coords_per_param, replace=False)
        ga_flat = analytic[name].reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, sig_p = probe(flat[idx])
            flat[idx] = orig - eps
            lm, sig_m = probe(flat[idx])
            flat[idx] = orig
            if sig_p != sig_m:
                continue
            g_fd = (lp - lm) / (2.0 * eps)
            g_an = ga_flat[idx]
            err = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
            worst = max(worst, err)
    return worst
