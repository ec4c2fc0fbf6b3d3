"""Small damped Newton solver for the 2D root problems in this package.

Both the reservoir-phase embedding and the trap-parameter inversion reduce to
smooth equations in two unknowns (two equations, or three for the degenerate
embeddings solved in the least-squares sense).  The Jacobian is estimated by
central differences and the step is backtracked until the residual norm
decreases, which is robust enough for the systems encountered here.
"""

import numpy as np

FD_STEP = 1e-7
MAX_ITERATIONS = 60
MAX_BACKTRACKS = 25


def _jacobian(fun, x, f0, h):
    jac = np.empty((len(f0), 2))
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        jac[:, j] = (np.asarray(fun(x + dx)) - np.asarray(fun(x - dx))) / (2.0 * h)
    return jac


def damped_newton(fun, x0, *, tol=1e-13, max_iter=MAX_ITERATIONS,
                  fd_step=FD_STEP):
    """Solve fun(x) = 0 for x in R^2; returns (x, converged).

    fun may return more than two residuals; the step is then the
    Gauss-Newton least-squares step.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = np.asarray(fun(x), dtype=float)
    norm = np.max(np.abs(f))
    for _ in range(max_iter):
        if norm < tol:
            return x, True
        jac = _jacobian(fun, x, f, fd_step)
        # least squares instead of solve: some embeddings have a whole curve
        # of roots and the Jacobian on it is singular by construction
        delta = np.linalg.lstsq(jac, -f, rcond=None)[0]
        if not np.all(np.isfinite(delta)):
            return x, False
        lam = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = x + lam * delta
            f_trial = np.asarray(fun(trial), dtype=float)
            norm_trial = np.max(np.abs(f_trial))
            if norm_trial < norm:
                x, f, norm = trial, f_trial, norm_trial
                break
            lam *= 0.5
        else:
            return x, norm < tol
    return x, norm < tol


def multistart_newton(fun, starts, accept=None, *, tol=1e-13,
                      residual_limit=1e-12):
    """Run damped_newton from each start in order; return the first solution.

    `accept` optionally filters converged roots.  Returns None when no start
    yields a root with residual below `residual_limit`.
    """
    for x0 in starts:
        x, ok = damped_newton(fun, x0, tol=tol)
        if not ok:
            continue
        if np.max(np.abs(np.asarray(fun(x), dtype=float))) > residual_limit:
            continue
        if accept is not None and not accept(x):
            continue
        return x
    return None
