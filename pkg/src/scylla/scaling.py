"""Diagonal (Ruiz) equilibration of a StandardForm.

The scaled problem works in ``x' = x / col_scale``:

    A' = diag(row_scale) A diag(col_scale),   b' = row_scale * b,
    c' = col_scale * c,   l' = l / col_scale,   u' = u / col_scale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from scylla.model import SparseMatrix, StandardForm


@dataclass(frozen=True)
class ScaledProblem:
    sf: StandardForm
    row_scale: np.ndarray
    col_scale: np.ndarray

    def scale_objective(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float) * self.col_scale

    def scale_rhs(self, b) -> np.ndarray:
        return np.asarray(b, dtype=float) * self.row_scale

    def scale_primal(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) / self.col_scale

    def unscale_primal(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.col_scale

    def unscale_dual(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.row_scale

    def with_rhs(self, b) -> "ScaledProblem":
        """Same scaling, new unscaled right-hand side."""
        return replace(self, sf=replace(self.sf, b=self.scale_rhs(b)))


def identity_scaling(sf: StandardForm) -> ScaledProblem:
    return ScaledProblem(sf, np.ones(sf.m), np.ones(sf.n))


def ruiz_scale(sf: StandardForm, sweeps: int = 10) -> ScaledProblem:
    """Alternately divide rows and columns by the square root of their
    largest absolute entry, ``sweeps`` times."""
    m, n = sf.m, sf.n
    M = sf.A.to_scipy().astype(float)
    row_scale = np.ones(m)
    col_scale = np.ones(n)
    for _ in range(sweeps):
        if M.nnz == 0:
            break
        absM = abs(M)
        rmax = np.asarray(absM.max(axis=1).todense()).ravel()
        cmax = np.asarray(absM.max(axis=0).todense()).ravel()
        r = np.where(rmax > 0, 1.0 / np.sqrt(np.where(rmax > 0, rmax, 1.0)), 1.0)
        s = np.where(cmax > 0, 1.0 / np.sqrt(np.where(cmax > 0, cmax, 1.0)), 1.0)
        M = sp.diags(r) @ M @ sp.diags(s)
        row_scale *= r
        col_scale *= s
    scaled = replace(
        sf,
        A=SparseMatrix.from_scipy(M),
        b=sf.b * row_scale,
        c=sf.c * col_scale,
        lower=sf.lower / col_scale,
        upper=sf.upper / col_scale,
    )
    return ScaledProblem(scaled, row_scale, col_scale)
