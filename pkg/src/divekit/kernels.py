"""Hot numeric inner loops, compiled with numba when available.

Every kernel has two implementations with identical semantics: a numba
``@njit`` version and a pure-numpy fallback.  The backend is picked once at
import time; set ``DIVEKIT_NUMBA=0`` in the environment to force the numpy
path (useful for debugging and for the benchmark in ``benchmarks/``).
"""

import os

import numpy as np

_flag = os.environ.get("DIVEKIT_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "off", "false", "no")

if NUMBA_REQUESTED:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# sparse row activities (COO layout)
# ---------------------------------------------------------------------------

def _row_activities_np(rows, cols, vals, x, m):
    if len(rows) == 0:
        return np.zeros(m)
    return np.bincount(rows, weights=vals * x[cols], minlength=m)


def _row_activities_loop(rows, cols, vals, x, m):
    out = np.zeros(m)
    for k in range(rows.shape[0]):
        out[rows[k]] += vals[k] * x[cols[k]]
    return out


# ---------------------------------------------------------------------------
# bounded-variable ratio test
#
# The entering variable moves by a step t >= 0; ``rate`` holds dx_B/dt for
# each basic variable.  A basic variable blocks when it reaches the relevant
# entry of (lo_b, up_b); infinite bounds never block.  Ties are broken by the
# smallest variable index (Bland-compatible, deterministic).  Slightly
# negative ratios from variables already at (or numerically past) a bound are
# clamped to zero rather than rejected.
# ---------------------------------------------------------------------------

def _ratio_test_loop(rate, x_b, lo_b, up_b, var_idx, tol):
    best_t = np.inf
    best_pos = -1
    best_var = -1
    hit_upper = False
    for i in range(rate.shape[0]):
        d = rate[i]
        if d > tol:
            ub = up_b[i]
            if np.isinf(ub):
                continue
            r = (ub - x_b[i]) / d
            up = True
        elif d < -tol:
            lb = lo_b[i]
            if np.isinf(lb):
                continue
            r = (lb - x_b[i]) / d
            up = False
        else:
            continue
        if r < 0.0:
            r = 0.0
        if r < best_t - 1e-12 or (r <= best_t + 1e-12 and (best_pos < 0 or var_idx[i] < best_var)):
            best_t = r
            best_pos = i
            best_var = var_idx[i]
            hit_upper = up
    return best_t, best_pos, hit_upper


def _ratio_test_np(rate, x_b, lo_b, up_b, var_idx, tol):
    # vectorised variant of the loop above
    m = rate.shape[0]
    ratios = np.full(m, np.inf)
    upmask = rate > tol
    dnmask = rate < -tol
    with np.errstate(invalid="ignore"):
        ratios[upmask] = (up_b[upmask] - x_b[upmask]) / rate[upmask]
        ratios[dnmask] = (lo_b[dnmask] - x_b[dnmask]) / rate[dnmask]
    ratios[np.isnan(ratios)] = np.inf  # inf - inf at an infinite bound
    np.maximum(ratios, 0.0, out=ratios)
    finite = np.isfinite(ratios)
    if not finite.any():
        return np.inf, -1, False
    best_t = ratios[finite].min()
    near = np.flatnonzero(finite & (ratios <= best_t + 1e-12))
    pos = near[np.argmin(var_idx[near])]
    return ratios[pos], int(pos), bool(rate[pos] > tol)


# ---------------------------------------------------------------------------
# product-form eta updates for the basis factorisation
#
# etas[k] is the ftran'd entering column of pivot k, pivot row eta_rows[k].
# ``apply_etas`` maps B0^-1 v -> B^-1 v; ``apply_etas_t`` is the transposed
# sweep used before the backward LU solve.  Both mutate ``z`` in place.
# ---------------------------------------------------------------------------

def _apply_etas_loop(z, eta_rows, etas, n_eta):
    for k in range(n_eta):
        r = eta_rows[k]
        a = z[r] / etas[k, r]
        if a != 0.0:
            for i in range(z.shape[0]):
                z[i] -= a * etas[k, i]
        z[r] = a
    return z


def _apply_etas_np(z, eta_rows, etas, n_eta):
    for k in range(n_eta):
        r = eta_rows[k]
        a = z[r] / etas[k, r]
        if a != 0.0:
            z -= a * etas[k]
        z[r] = a
    return z


def _apply_etas_t_loop(z, eta_rows, etas, n_eta):
    for k in range(n_eta - 1, -1, -1):
        r = eta_rows[k]
        dot = 0.0
        for i in range(z.shape[0]):
            dot += etas[k, i] * z[i]
        z[r] = z[r] + (z[r] - dot) / etas[k, r]
    return z


def _apply_etas_t_np(z, eta_rows, etas, n_eta):
    for k in range(n_eta - 1, -1, -1):
        r = eta_rows[k]
        dot = float(etas[k] @ z)
        z[r] = z[r] + (z[r] - dot) / etas[k, r]
    return z


# ---------------------------------------------------------------------------
# bipartite message passing: out[dst[e]] += coef[e] * h[src[e]]
# ---------------------------------------------------------------------------

def _scatter_messages_loop(dst, src, coef, h, out):
    hd = h.shape[1]
    for e in range(dst.shape[0]):
        d = dst[e]
        s = src[e]
        c = coef[e]
        for j in range(hd):
            out[d, j] += c * h[s, j]
    return out


def _scatter_messages_np(dst, src, coef, h, out):
    np.add.at(out, dst, coef[:, None] * h[src])
    return out


if USING_NUMBA:
    row_activities = njit(cache=True)(_row_activities_loop)
    ratio_test = njit(cache=True)(_ratio_test_loop)
    apply_etas = njit(cache=True)(_apply_etas_loop)
    apply_etas_t = njit(cache=True)(_apply_etas_t_loop)
    scatter_messages = njit(cache=True)(_scatter_messages_loop)
else:
    row_activities = _row_activities_np
    ratio_test = _ratio_test_np
    apply_etas = _apply_etas_np
    apply_etas_t = _apply_etas_t_np
    scatter_messages = _scatter_messages_np

# numpy reference implementations, exported for parity tests and benchmarks
NUMPY_IMPLS = {
    "row_activities": _row_activities_np,
    "ratio_test": _ratio_test_np,
    "apply_etas": _apply_etas_np,
    "apply_etas_t": _apply_etas_t_np,
    "scatter_messages": _scatter_messages_np,
}
ACTIVE_IMPLS = {
    "row_activities": row_activities,
    "ratio_test": ratio_test,
    "apply_etas": apply_etas,
    "apply_etas_t": apply_etas_t,
    "scatter_messages": scatter_messages,
}
