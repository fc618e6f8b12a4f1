"""Dense multi-way arrays and the soft-PARAFAC algebra used by back-fitting.

Conventions
-----------
* Modes and slice indices are 0-based.
* The canonical flat layout is first-mode-fastest (Fortran order). Every
  ``vec`` in this package, including CSV serialization, uses it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Shapes of two tensor operands do not agree."""


@dataclass(frozen=True, eq=False)
class Tensor:
    """Immutable dense tensor.

    Parameters
    ----------
    data : array_like
        Array of order ``M >= 1``. A read-only copy is stored.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim < 1:
            raise DimensionError("tensor order must be >= 1")
        if any(s < 1 for s in arr.shape):
            raise DimensionError(f"mode sizes must be >= 1, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, flat: Sequence[float], shape: Sequence[int]) -> "Tensor":
        flat = np.asarray(flat, dtype=float)
        shape = tuple(int(s) for s in shape)
        if flat.size != int(np.prod(shape)):
            raise DimensionError(
                f"{flat.size} values cannot fill shape {shape}"
            )
        return cls(flat.reshape(shape, order="F"))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def flat(self) -> np.ndarray:
        """Entries in canonical (first-mode-fastest) order."""
        return self.data.ravel(order="F")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def to_csv(self, path) -> None:
        write_tensor_csv(self, path)

    @classmethod
    def from_csv(cls, path) -> "Tensor":
        return read_tensor_csv(path)


@dataclass(frozen=True, eq=False)
class FactorSet:
    """Soft-PARAFAC factors stored as one array of shape ``(D, M, p_1, ..., p_M)``.

    ``factors[d, m]`` is the full-size factor tensor for component ``d`` and
    mode ``m``.
    """

    factors: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=float)
        if f.ndim < 4:
            raise DimensionError("FactorSet needs D, M axes and M >= 2 tensor modes")
        if f.shape[1] != f.ndim - 2:
            raise DimensionError(
                f"M axis has length {f.shape[1]} but factors have order {f.ndim - 2}"
            )
        object.__setattr__(self, "factors", f)

    @classmethod
    def from_tensors(cls, tensors: Sequence[Sequence[Tensor]]) -> "FactorSet":
        return cls(np.array([[np.asarray(t) for t in row] for row in tensors]))

    @property
    def rank(self) -> int:
        return self.factors.shape[0]

    @property
    def n_modes(self) -> int:
        return self.factors.shape[1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.factors.shape[2:]


def _arr(t) -> np.ndarray:
    return t.data if isinstance(t, Tensor) else np.asarray(t, dtype=float)


def _check_index(shape, m: int, j: int) -> None:
    if not 0 <= m < len(shape):
        raise IndexError(f"mode {m} out of range for order {len(shape)}")
    if not 0 <= j < shape[m]:
        raise IndexError(f"slice {j} out of range for mode {m} of size {shape[m]}")


def inner_product(a, b) -> float:
    """Sum of elementwise products of two same-shaped tensors."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def component_products(f: FactorSet) -> np.ndarray:
    """Per-component Hadamard products, shape ``(D, p_1, ..., p_M)``."""
    return np.prod(f.factors, axis=1)


def hadamard_compose(f: FactorSet) -> Tensor:
    """Coefficient tensor ``sum_d B_1^(d) o ... o B_M^(d)``."""
    return Tensor(component_products(f).sum(axis=0))


def mode_slice_vec(t, m: int, j: int) -> np.ndarray:
    """Vectorized slice ``j`` along mode ``m`` (length ``prod_{l != m} p_l``)."""
    a = _arr(t)
    _check_index(a.shape, m, j)
    return np.take(a, j, axis=m).ravel(order="F")


def set_mode_slice_vec(t, m: int, j: int, values) -> Tensor:
    """Copy of ``t`` with slice ``j`` along mode ``m`` replaced by ``values``."""
    a = np.array(_arr(t), dtype=float, copy=True)
    _check_index(a.shape, m, j)
    sub_shape = a.shape[:m] + a.shape[m + 1:]
    values = np.asarray(values, dtype=float)
    if values.size != int(np.prod(sub_shape)):
        raise DimensionError(f"slice needs {int(np.prod(sub_shape))} values, got {values.size}")
    idx = [slice(None)] * a.ndim
    idx[m] = j
    a[tuple(idx)] = values.reshape(sub_shape, order="F")
    return Tensor(a)


def parafac_mean(gammas: Sequence[np.ndarray]) -> np.ndarray:
    """Rank-1 location ``gamma_1 (x) ... (x) gamma_M`` of one component.

    For a single mode ``m`` the prior location of factor ``B_m`` is
    ``gamma_m`` laid along mode ``m`` and repeated over all other modes;
    the Hadamard product of those locations is this outer product.
    """
    out = np.asarray(gammas[0], dtype=float)
    for g in gammas[1:]:
        out = np.multiply.outer(out, np.asarray(g, dtype=float))
    return out


def factor_location(gamma: np.ndarray, m: int, shape: Sequence[int]) -> np.ndarray:
    """Full-size prior location of factor ``B_m``: ``gamma`` along mode ``m``."""
    view = [1] * len(shape)
    view[m] = len(gamma)
    return np.broadcast_to(np.reshape(gamma, view), tuple(shape)).copy()


def backfit_terms(f: FactorSet, X, d: int, m: int, j: int):
    """Back-fitting decomposition of ``<B, X>`` around slice ``(d, m, j)``.

    Returns
    -------
    psi : ndarray
        ``vec((prod_{m' != m} B_{m'}^(d) o X)_{slice j})``.
    r_slice : float
        Contribution of component ``d`` outside slice ``j``.
    r_comp : float
        Contribution of every other component.

    With ``beta = mode_slice_vec(f.factors[d, m], m, j)`` the identity
    ``<hadamard_compose(f), X> == beta @ psi + r_slice + r_comp`` holds.
    """
    X = _arr(X)
    if X.shape != f.shape:
        raise DimensionError(f"covariate shape {X.shape} != factor shape {f.shape}")
    if not 0 <= d < f.rank:
        raise IndexError(f"component {d} out of range for rank {f.rank}")
    _check_index(f.shape, m, j)
    facs = f.factors
    others = np.prod(np.delete(facs[d], m, axis=0), axis=0)
    psi = mode_slice_vec(others * X, m, j)
    comp = others * facs[d, m]
    mask = np.ones(f.shape[m], dtype=bool)
    mask[j] = False
    r_slice = float(np.sum(np.compress(mask, comp * X, axis=m)))
    r_comp = 0.0
    if f.rank > 1:
        rest = np.prod(np.delete(facs, d, axis=0), axis=1).sum(axis=0)
        r_comp = inner_product(rest, X)
    return psi, r_slice, r_comp


def write_tensor_csv(t, path) -> None:
    """Write ``# shape: p1,...,pM`` then one entry per line at 17 significant digits."""
    a = _arr(t)
    lines = ["# shape: " + ",".join(str(s) for s in a.shape)]
    lines.extend(f"{v:.17g}" for v in a.ravel(order="F"))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_shape_header(line: str) -> tuple[int, ...]:
    line = line.strip()
    if not line.startswith("#") or "shape:" not in line:
        raise DimensionError(f"missing shape header, got {line[:40]!r}")
    body = line.split("shape:", 1)[1]
    try:
        shape = tuple(int(s) for s in body.split(",") if s.strip())
    except ValueError as exc:
        raise DimensionError(f"malformed shape header {line!r}") from exc
    if not shape or any(s < 1 for s in shape):
        raise DimensionError(f"malformed shape header {line!r}")
    return shape


def read_tensor_csv(path) -> Tensor:
    with open(path) as fh:
        shape = parse_shape_header(fh.readline())
        values = [float(line) for line in fh if line.strip()]
    return Tensor.from_flat(values, shape)
