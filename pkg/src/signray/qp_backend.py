"""Backend selection for the hard-margin dual coordinate-ascent kernel.

The compiled extension is preferred when it built; the numpy fallback is
operation-for-operation identical (same sweep order, same update and
residual arithmetic) so either lane yields the same solution.  Set
SIGNRAY_PURE_PYTHON=1 before import to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np


def _py_dual_coordinate_ascent(gram, alpha, margins, kkt_tol, max_sweeps):
    """Gauss-Seidel sweeps over the dual variables, in place.

    gram[i, j] = y_i * y_j * <u_i, u_j>; margins tracks gram @ alpha.
    Returns (sweeps_run, kkt_residual).
    """
    n = gram.shape[0]
    resid = np.inf
    for sweep in range(1, max_sweeps + 1):
        for q in range(n):
            delta = (1.0 - margins[q]) / gram[q, q]
            updated = alpha[q] + delta
            if updated < 0.0:
                updated = 0.0
            step = updated - alpha[q]
            if step != 0.0:
                alpha[q] = updated
                margins += step * gram[q]
        viol = 1.0 - margins
        resid = float(np.max(np.where(alpha > 0.0, np.abs(viol), np.maximum(viol, 0.0))))
        if resid <= kkt_tol:
            return sweep, resid
    return max_sweeps, float(resid)


compiled_dual_coordinate_ascent = None
if not os.environ.get("SIGNRAY_PURE_PYTHON"):
    try:
        from ._qp_impl import dual_coordinate_ascent as compiled_dual_coordinate_ascent
    except ImportError:
        compiled_dual_coordinate_ascent = None

if compiled_dual_coordinate_ascent is not None:
    dual_coordinate_ascent = compiled_dual_coordinate_ascent
    BACKEND = "compiled"
else:
    dual_coordinate_ascent = _py_dual_coordinate_ascent
    BACKEND = "python"
