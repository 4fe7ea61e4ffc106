"""NumPy fallback for the simulation kernels.

Operation order matches the compiled twin in ``_kernels.pyx`` exactly
(and that extension is built with -ffp-contract=off), so both backends
produce bit-identical output for the same noise arrays.
"""

import numpy as np

BACKEND = "python"


def fill_paths(w, kappa0, kappa_prev0, mu, zeta, lam, sigma, rho, sqrt1mr2, out):
    """Run the recursion for a block of paths, storing every time slice.

    w        : (n, H, C+1) standard normal factors; column 0 is the common factor
    kappa0   : (C,) shared initial value
    out      : (n, H+1, C) preallocated output, written in place
    """
    n, H = w.shape[0], w.shape[1]
    C = kappa0.shape[0]
    out[:, 0, :] = kappa0
    prev = np.broadcast_to(kappa_prev0, (n, C))
    for t in range(H):
        k = out[:, t, :]
        z = rho * w[:, t, :1] + sqrt1mr2 * w[:, t, 1:]
        m = k.min(axis=1, keepdims=True)
        out[:, t + 1, :] = k + mu + zeta * (k - prev) + sigma * z + lam * (m - k)
        prev = k
    return out


def extremal_stats(w, kappa0, kappa_prev0, mu, zeta, lam, sigma, rho, sqrt1mr2, burn_in, mid, out_stats):
    """Run the recursion for a block of paths, accumulating extremal summaries.

    Stores per path (columns of ``out_stats``):
      0: m at t = burn_in          3: sum of (M_t - m_t) for burn_in < t <= mid
      1: m at t = mid              4: sum of (M_t - m_t) for mid < t <= H
      2: m at t = H (final)
    """
    n, H = w.shape[0], w.shape[1]
    C = kappa0.shape[0]
    k = np.broadcast_to(kappa0, (n, C)).copy()
    prev = np.broadcast_to(kappa_prev0, (n, C)).copy()
    m = k.min(axis=1)
    sp1 = np.zeros(n)
    sp2 = np.zeros(n)
    if burn_in == 0:
        out_stats[:, 0] = m
    if mid == 0:
        out_stats[:, 1] = m
    for t in range(1, H + 1):
        z = rho * w[:, t - 1, :1] + sqrt1mr2 * w[:, t - 1, 1:]
        k_next = k + mu + zeta * (k - prev) + sigma * z + lam * (m[:, None] - k)
        prev = k
        k = k_next
        m = k.min(axis=1)
        if t > burn_in:
            spread = k.max(axis=1) - m
            if t <= mid:
                sp1 += spread
            else:
                sp2 += spread
        if t == burn_in:
            out_stats[:, 0] = m
        if t == mid:
            out_stats[:, 1] = m
    out_stats[:, 2] = m
    out_stats[:, 3] = sp1
    out_stats[:, 4] = sp2
    return out_stats
