"""Skew-symmetric staggered-grid operators for the spatial part ``A``.

Interior node values (homogeneous Dirichlet) are paired with cell values.
``grad`` takes forward differences from nodes to cells and ``div`` is defined
as ``-grad.T``, which makes the block operator exactly skew.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "SkewOperator",
    "gradient_matrix",
    "build_grad_div_1d",
    "build_elasticity_1d",
    "zero_operator",
    "skewness_defect",
    "parse_spatial",
]


@dataclass(frozen=True)
class SkewOperator:
    entries: np.ndarray = field(repr=False)
    block_dims: tuple[int, int]

    def __post_init__(self) -> None:
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"operator must be square, got shape {a.shape}")
        d1, d2 = self.block_dims
        if d1 + d2 != a.shape[0]:
            raise DimensionError(f"block_dims {self.block_dims} do not sum to {a.shape[0]}")
        scale = np.abs(a).max() if a.size else 0.0
        if np.abs(a + a.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("operator is not skew-symmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "block_dims", (int(d1), int(d2)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def upper_block(self) -> np.ndarray:
        d1 = self.block_dims[0]
        return self.entries[:d1, d1:]

    @property
    def lower_block(self) -> np.ndarray:
        d1 = self.block_dims[0]
        return self.entries[d1:, :d1]


def gradient_matrix(n_cells: int, h: float) -> np.ndarray:
    """Forward differences from ``n_cells - 1`` interior nodes to ``n_cells`` cells."""
    if n_cells < 2:
        raise ValueError(f"n_cells must be >= 2, got {n_cells}")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    g = np.zeros((n_cells, n_cells - 1))
    idx = np.arange(n_cells - 1)
    g[idx, idx] = 1.0 / h
    g[idx + 1, idx] = -1.0 / h
    return g


def _assemble(upper: np.ndarray, lower: np.ndarray) -> SkewOperator:
    d1, d2 = upper.shape
    a = np.zeros((d1 + d2, d1 + d2))
    a[:d1, d1:] = upper
    a[d1:, :d1] = lower
    return SkewOperator(a, (d1, d2))


def build_grad_div_1d(n_cells: int, h: float) -> SkewOperator:
    """``[[0, div], [grad, 0]]`` on ``(n_cells-1) + n_cells`` unknowns."""
    grad = gradient_matrix(n_cells, h)
    return _assemble(-grad.T, grad)


def build_elasticity_1d(n_cells: int, h: float) -> SkewOperator:
    """``[[0, -Div], [-Grad, 0]]``: the grad/div operator with both blocks negated."""
    grad = gradient_matrix(n_cells, h)
    return _assemble(grad.T, -grad)


def zero_operator(dim: int) -> SkewOperator:
    return SkewOperator(np.zeros((dim, dim)), (dim, 0))


def skewness_defect(a) -> float:
    """``max |A + A^T|``."""
    m = a.entries if isinstance(a, SkewOperator) else np.asarray(a)
    return float(np.abs(m + m.T).max(initial=0.0))


def parse_spatial(spec: str) -> SkewOperator:
    """Parse ``grad1d:<n>:<h>``, ``elastic1d:<n>:<h>`` or ``zero:<d>``."""
    parts = spec.strip().split(":")
    kind = parts[0]
    try:
        if kind in ("grad1d", "elastic1d") and len(parts) == 3:
            n, h = int(parts[1]), float(parts[2])
            return build_grad_div_1d(n, h) if kind == "grad1d" else build_elasticity_1d(n, h)
        if kind == "zero" and len(parts) == 2:
            return zero_operator(int(parts[1]))
    except ValueError as exc:
        raise ValueError(f"bad spatial spec {spec!r}: {exc}") from None
    raise ValueError(f"bad spatial spec {spec!r}; expected grad1d:<n>:<h>, elastic1d:<n>:<h> or zero:<d>")
