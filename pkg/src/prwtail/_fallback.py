"""Pure numpy path kernels.

Both functions perform exactly the floating point operations of the compiled
versions, in the same order, so the two backends agree bit for bit.
"""
import numpy as np


def sup_advance(log_a, log_b, log_pi, log_m, steps, log_tau, cap):
    """Advance running suprema of ``Pi_{k-1} B_k`` (log domain) over a block of draws.

    Row ``i`` consumes columns until ``log Pi <= log_tau`` or ``cap`` steps.
    ``log_pi``, ``log_m`` and ``steps`` are updated in place; returns the rows
    that stopped inside this block.
    """
    n, k = log_a.shape
    alive = np.ones(n, dtype=bool)
    for j in range(k):
        term = log_pi + log_b[:, j]
        np.copyto(log_m, term, where=alive & (term > log_m))
        np.copyto(log_pi, log_pi + log_a[:, j], where=alive)
        steps += alive
        alive &= (log_pi > log_tau) & (steps < cap)
    return ~alive


def walk_advance(z, s, s_stop):
    """Extend random walks by a block of increments, stopping after the first level above ``s_stop``.

    Returns the visited positions (NaN after a path's stop) and the rows
    that stopped; ``s`` is updated in place to each path's last position.
    """
    n, k = z.shape
    ext = np.empty((n, k + 1))
    ext[:, 0] = s
    ext[:, 1:] = z
    cum = np.add.accumulate(ext, axis=1)[:, 1:]
    over = cum > s_stop
    done = over.any(axis=1)
    last = np.where(done, over.argmax(axis=1), k - 1)
    pos = np.where(np.arange(k)[None, :] <= last[:, None], cum, np.nan)
    s[:] = cum[np.arange(n), last]
    return pos, done
