"""A small modeling layer that compiles to :class:`SdpProblem`.

Expressions are affine maps of a real decision vector, stored as a sparse
complex coefficient matrix acting on the row-major vec of the expression plus
a constant. Hermitian matrix variables are parametrized by d² reals (diagonal,
real and imaginary parts of the upper triangle), so the decision vector is
always real and complex constraints are embedded at compile time.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Number
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .. import qmat
from .problem import PsdBlock, SdpProblem, SdpSolution, SolverError, embed_index_maps, unembed_hermitian

HERM_STRUCT_TOL = 1e-9


def _pad(coef: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    if coef.shape[1] == ncols:
        return coef
    return sp.csr_matrix((coef.data, coef.indices, coef.indptr), shape=(coef.shape[0], ncols))


class Affine:
    __array_priority__ = 100

    def __init__(self, shape, coef, const):
        self.shape = tuple(shape)
        self.coef = sp.csr_matrix(coef, dtype=complex)
        self.const = np.asarray(const, dtype=complex).ravel()
        size = int(np.prod(self.shape)) if self.shape else 1
        if self.coef.shape[0] != size or self.const.size != size:
            raise ValueError("affine expression has inconsistent sizes")

    # -- construction helpers ---------------------------------------------
    @classmethod
    def constant(cls, value, ncols: int = 0) -> "Affine":
        v = np.asarray(value, dtype=complex)
        return cls(v.shape, sp.csr_matrix((v.size, ncols), dtype=complex), v.ravel())

    @property
    def size(self) -> int:
        return self.const.size

    @property
    def ncols(self) -> int:
        return self.coef.shape[1]

    def _rows(self, idx: np.ndarray, shape) -> "Affine":
        idx = np.asarray(idx, dtype=int).ravel()
        return Affine(shape, self.coef[idx], self.const[idx])

    def _left(self, mat: sp.spmatrix, shape) -> "Affine":
        mat = sp.csr_matrix(mat, dtype=complex)
        return Affine(shape, mat @ self.coef, mat @ self.const)

    def apply(self, mat, shape) -> "Affine":
        """Linear map on the row-major vec: result vec = mat @ vec(self)."""
        return self._left(mat, shape)

    def is_real(self) -> bool:
        return (self.coef.nnz == 0 or not np.any(self.coef.data.imag)) and not np.any(self.const.imag)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Affine):
            a, b = self, other
            if a.shape != b.shape:
                if a.shape == ():
                    a = a * np.ones(b.shape)
                elif b.shape == ():
                    b = b * np.ones(a.shape)
                else:
                    raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
            n = max(a.ncols, b.ncols)
            return Affine(a.shape, _pad(a.coef, n) + _pad(b.coef, n), a.const + b.const)
        other = np.asarray(other, dtype=complex)
        if other.shape not in ((), self.shape):
            if self.shape == ():
                return (self * np.ones(other.shape)) + other
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return Affine(self.shape, self.coef, self.const + np.broadcast_to(other, self.shape).ravel())

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.shape, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise TypeError("product of two affine expressions is not affine")
        if isinstance(other, Number) or np.ndim(other) == 0:
            return Affine(self.shape, self.coef * complex(other), self.const * complex(other))
        other = np.asarray(other, dtype=complex)
        if self.shape == ():
            vec = sp.csr_matrix(other.reshape(-1, 1))
            return Affine(other.shape, vec @ self.coef, other.ravel() * self.const[0])
        if other.shape == self.shape:
            w = other.ravel()
            return Affine(self.shape, sp.diags(w) @ self.coef, w * self.const)
        raise ValueError(f"cannot multiply shape {self.shape} by {other.shape}")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / complex(other))

    def __matmul__(self, other):
        other = np.asarray(other, dtype=complex)
        if len(self.shape) != 2:
            if len(self.shape) == 1 and other.ndim == 1:
                return self._left(sp.csr_matrix(other.reshape(1, -1)), ())
            raise ValueError("matmul needs a matrix expression")
        r, c = self.shape
        if other.ndim == 1:
            other = other.reshape(-1, 1)
            out = self @ other
            return out.reshape((r,))
        return self._left(sp.kron(sp.identity(r), sp.csr_matrix(other.T)), (r, other.shape[1]))

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=complex)
        if len(self.shape) == 1 and other.ndim == 1:
            return self._left(sp.csr_matrix(other.reshape(1, -1)), ())
        if len(self.shape) != 2:
            raise ValueError("matmul needs a matrix expression")
        r, c = self.shape
        return self._left(sp.kron(sp.csr_matrix(other), sp.identity(c)), (other.shape[0], c))

    # -- structure ---------------------------------------------------------
    def __getitem__(self, key) -> "Affine":
        idx = np.arange(self.size).reshape(self.shape)[key]
        return self._rows(idx, np.shape(idx))

    def reshape(self, shape) -> "Affine":
        return Affine(shape, self.coef, self.const)

    @property
    def T(self) -> "Affine":
        if len(self.shape) != 2:
            return self
        idx = np.arange(self.size).reshape(self.shape).T
        return self._rows(idx, idx.shape)

    def conj(self) -> "Affine":
        return Affine(self.shape, self.coef.conj(), self.const.conj())

    @property
    def H(self) -> "Affine":
        return self.T.conj()

    def real(self) -> "Affine":
        return Affine(self.shape, sp.csr_matrix(self.coef.real), self.const.real)

    def imag(self) -> "Affine":
        return Affine(self.shape, sp.csr_matrix(self.coef.imag), self.const.imag)

    def sum(self) -> "Affine":
        return self._left(sp.csr_matrix(np.ones((1, self.size))), ())

    def trace(self) -> "Affine":
        r, c = self.shape
        d = min(r, c)
        return self._rows(np.arange(d) * c + np.arange(d), (d,)).sum()

    def ptranspose(self, dims: Sequence[int], subsystems) -> "Affine":
        D = self.shape[0]
        idx = qmat.partial_transpose(np.arange(D * D).reshape(D, D), dims, subsystems)
        return self._rows(idx, self.shape)

    def ptrace(self, dims: Sequence[int], keep) -> "Affine":
        return self._left(_ptrace_matrix(tuple(dims), keep), _ptrace_shape(dims, keep))


def _ptrace_shape(dims, keep):
    keep = [keep] if isinstance(keep, (int, np.integer)) else list(keep)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return (dk, dk)


def _ptrace_matrix(dims: tuple, keep) -> sp.csr_matrix:
    """Sparse 0/1 matrix mapping vec(M) to vec(partial_trace(M))."""
    D = int(np.prod(dims))
    n = len(dims)
    keep = sorted([keep] if isinstance(keep, (int, np.integer)) else list(keep))
    traced = [s for s in range(n) if s not in keep]
    rows_mi = np.array(np.unravel_index(np.arange(D), dims))  # (n, D)
    R, C = np.meshgrid(np.arange(D), np.arange(D), indexing="ij")
    R, C = R.ravel(), C.ravel()
    ok = np.ones(R.size, dtype=bool)
    for t in traced:
        ok &= rows_mi[t][R] == rows_mi[t][C]
    kd = [dims[k] for k in keep]
    dk = int(np.prod(kd)) if keep else 1
    if keep:
        rk = np.ravel_multi_index(tuple(rows_mi[k][R[ok]] for k in keep), kd)
        ck = np.ravel_multi_index(tuple(rows_mi[k][C[ok]] for k in keep), kd)
    else:
        rk = ck = np.zeros(int(ok.sum()), dtype=int)
    out_rows = rk * dk + ck
    in_cols = R[ok] * D + C[ok]
    return sp.csr_matrix((np.ones(out_rows.size), (out_rows, in_cols)), shape=(dk * dk, D * D))


def kron(a, b) -> Affine:
    """Kronecker product where exactly one factor is a constant matrix."""
    if isinstance(a, Affine) and isinstance(b, Affine):
        raise TypeError("kron of two affine expressions is not affine")
    if isinstance(a, Affine):
        expr, const, expr_left = a, np.asarray(b, dtype=complex), True
    else:
        expr, const, expr_left = b, np.asarray(a, dtype=complex), False
    if len(expr.shape) != 2 or const.ndim != 2:
        raise ValueError("kron needs matrices")
    (x1, x2), (c1, c2) = expr.shape, const.shape
    cvec = sp.csr_matrix(const.reshape(-1, 1))
    if expr_left:
        coef = sp.kron(expr.coef, cvec, format="csr")
        cst = np.kron(expr.const, const.ravel())
        # rows currently ordered (k, l, i, j); want (k, i, l, j)
        idx = np.arange(x1 * x2 * c1 * c2).reshape(x1, x2, c1, c2).transpose(0, 2, 1, 3)
        shape = (x1 * c1, x2 * c2)
    else:
        coef = sp.kron(cvec, expr.coef, format="csr")
        cst = np.kron(const.ravel(), expr.const)
        idx = np.arange(x1 * x2 * c1 * c2).reshape(c1, c2, x1, x2).transpose(0, 2, 1, 3)
        shape = (c1 * x1, c2 * x2)
    idx = idx.ravel()
    return Affine(shape, coef[idx], cst[idx])


def dot_matrices(v, mats) -> Affine:
    """Σ_i v_i mats[i] for a vector expression ``v`` (or list of scalar expressions)."""
    if not isinstance(v, Affine):
        v = stack_scalars(v)
    mats = np.asarray(mats, dtype=complex)
    k = mats.shape[0]
    if v.size != k:
        raise ValueError("coefficient count does not match matrix count")
    flat = sp.csr_matrix(mats.reshape(k, -1).T)
    return Affine(mats.shape[1:], flat @ v.coef, flat @ v.const)


def stack_scalars(items) -> Affine:
    items = list(items)
    n = max([it.ncols for it in items if isinstance(it, Affine)], default=0)
    coefs, consts = [], []
    for it in items:
        if isinstance(it, Affine):
            coefs.append(_pad(it.coef, n))
            consts.append(it.const)
        else:
            coefs.append(sp.csr_matrix((1, n), dtype=complex))
            consts.append(np.atleast_1d(np.asarray(it, dtype=complex)))
    return Affine((len(items),), sp.vstack(coefs, format="csr"), np.concatenate(consts))


@dataclass
class Constraint:
    kind: str  # 'psd', 'eq', 'ge'
    index: int  # block number for psd, row offset otherwise
    count: int
    shape: tuple
    embedded: bool = False


class Model:
    def __init__(self):
        self.nvars = 0
        self._psd: list[tuple[Affine, Constraint]] = []
        self._eq: list[Affine] = []
        self._ge: list[Affine] = []
        self._neq = 0
        self._nge = 0
        self._objective: Affine | None = None
        self._sign = 1.0

    # -- variables -----------------------------------------------------------
    def _new(self, k: int) -> np.ndarray:
        cols = np.arange(self.nvars, self.nvars + k)
        self.nvars += k
        return cols

    def scalar(self, nonneg: bool = False) -> Affine:
        return self.vector(1, nonneg=nonneg).reshape(())

    def vector(self, k: int, nonneg: bool = False) -> Affine:
        cols = self._new(k)
        v = Affine((k,), sp.csr_matrix((np.ones(k), (np.arange(k), cols)), shape=(k, self.nvars)), np.zeros(k))
        if nonneg:
            self.add_ge(v)
        return v

    def real_matrix(self, r: int, c: int | None = None, symmetric: bool = False) -> Affine:
        c = r if c is None else c
        if not symmetric:
            return self.vector(r * c).reshape((r, c))
        iu = np.triu_indices(r)
        cols = self._new(iu[0].size)
        rows_a = iu[0] * r + iu[1]
        rows_b = iu[1] * r + iu[0]
        rr = np.concatenate([rows_a, rows_b[iu[0] != iu[1]]])
        cc = np.concatenate([cols, cols[iu[0] != iu[1]]])
        coef = sp.csr_matrix((np.ones(rr.size), (rr, cc)), shape=(r * r, self.nvars))
        return Affine((r, r), coef, np.zeros(r * r))

    def hermitian(self, d: int, psd: bool = False) -> Affine:
        iu = np.triu_indices(d, 1)
        diag = self._new(d)
        re = self._new(iu[0].size)
        im = self._new(iu[0].size)
        up = iu[0] * d + iu[1]
        lo = iu[1] * d + iu[0]
        rows = np.concatenate([np.arange(d) * (d + 1), up, lo, up, lo])
        cols = np.concatenate([diag, re, re, im, im])
        vals = np.concatenate([np.ones(d), np.ones(re.size), np.ones(re.size), 1j * np.ones(im.size), -1j * np.ones(im.size)])
        coef = sp.csr_matrix((vals, (rows, cols)), shape=(d * d, self.nvars))
        h = Affine((d, d), coef, np.zeros(d * d))
        if psd:
            self.add_psd(h)
        return h

    # -- constraints -----------------------------------------------------------
    def add_psd(self, expr: Affine) -> Constraint:
        if not isinstance(expr, Affine):
            expr = Affine.constant(expr, self.nvars)
        if len(expr.shape) == 0:
            return self.add_ge(expr)
        if len(expr.shape) != 2 or expr.shape[0] != expr.shape[1]:
            raise ValueError("PSD constraint needs a square matrix expression")
        con = Constraint("psd", len(self._psd), 1, expr.shape, embedded=not expr.is_real())
        self._psd.append((expr, con))
        return con

    def add_eq(self, lhs, rhs=0.0) -> Constraint:
        expr = lhs - rhs if isinstance(lhs, Affine) else (-(rhs - lhs) if isinstance(rhs, Affine) else None)
        if expr is None:
            raise TypeError("equality constraint needs an affine expression")
        rows = _real_rows(expr)
        con = Constraint("eq", self._neq, rows.size, expr.shape)
        self._eq.append(rows)
        self._neq += rows.size
        return con

    def add_ge(self, lhs, rhs=0.0) -> Constraint:
        """Elementwise lhs ≥ rhs (real parts)."""
        expr = lhs - rhs if isinstance(lhs, Affine) else -(rhs - lhs)
        rows = expr.real().reshape((expr.size,))
        con = Constraint("ge", self._nge, rows.size, expr.shape)
        self._ge.append(rows)
        self._nge += rows.size
        return con

    def add_le(self, lhs, rhs=0.0) -> Constraint:
        return self.add_ge(rhs, lhs) if isinstance(rhs, Affine) else self.add_ge(-lhs, -np.asarray(rhs))

    def minimize(self, expr) -> None:
        self._objective, self._sign = _as_scalar(expr, self.nvars), 1.0

    def maximize(self, expr) -> None:
        self._objective, self._sign = -_as_scalar(expr, self.nvars), -1.0

    # -- compile and solve -----------------------------------------------------
    def compile(self) -> SdpProblem:
        n = self.nvars
        obj = self._objective if self._objective is not None else Affine.constant(0.0, n)
        c = np.real(_pad(obj.coef, n).toarray()).ravel()
        blocks = [_compile_psd(expr, con, n) for expr, con in self._psd]
        G, h = _stack_rows(self._ge, n)
        A, b = _stack_rows(self._eq, n)
        return SdpProblem(c=c, blocks=blocks, G=G, h=h, A=A, b=-b, offset=float(np.real(obj.const[0])))

    def solve(self, tol: float = 1e-8, backend: str = "auto", check: bool = True, max_iter: int = 200) -> "ModelSolution":
        from . import solve as _solve

        p = self.compile()
        res = _solve(p, tol=tol, backend=backend, max_iter=max_iter)
        if check and res.status != "optimal":
            raise SolverError(res.status)
        return ModelSolution(self, res)


def _as_scalar(expr, n) -> Affine:
    if not isinstance(expr, Affine):
        expr = Affine.constant(expr, n)
    if expr.size != 1:
        raise ValueError("objective must be scalar")
    return expr.reshape(())


def _is_hermitian_structured(expr: Affine) -> bool:
    if len(expr.shape) != 2 or expr.shape[0] != expr.shape[1]:
        return False
    d = expr.shape[0]
    tp = np.arange(d * d).reshape(d, d).T.ravel()
    diff = expr.coef - expr.coef[tp].conj()
    cd = np.max(np.abs(expr.const - expr.const[tp].conj()), initial=0.0)
    return (diff.nnz == 0 or np.max(np.abs(diff.data)) <= HERM_STRUCT_TOL) and cd <= HERM_STRUCT_TOL


def _real_rows(expr: Affine) -> Affine:
    """Independent real rows expressing expr == 0."""
    if _is_hermitian_structured(expr):
        d = expr.shape[0]
        iu = np.triu_indices(d)
        up = iu[0] * d + iu[1]
        strict = up[iu[0] != iu[1]]
        re = expr._rows(up, (up.size,)).real()
        im = expr._rows(strict, (strict.size,)).imag()
        parts = [re, im] if strict.size else [re]
    else:
        flat = expr.reshape((expr.size,))
        parts = [flat.real()]
        if not expr.is_real():
            parts.append(flat.imag())
    out = stack_rows(parts)
    # drop rows that are identically 0 = 0
    keep = np.flatnonzero((np.diff(out.coef.indptr) > 0) | (np.abs(out.const) > 0))
    return out._rows(keep, (keep.size,))


def stack_rows(parts) -> Affine:
    n = max(p.ncols for p in parts)
    coef = sp.vstack([_pad(p.coef, n) for p in parts], format="csr")
    return Affine((coef.shape[0],), coef, np.concatenate([p.const for p in parts]))


def _stack_rows(items, n):
    if not items:
        return sp.csr_matrix((0, n)), np.zeros(0)
    st = stack_rows(items)
    coef = _pad(st.coef, n)
    coef.eliminate_zeros()
    return sp.csr_matrix(coef.real), np.real(st.const)


def _compile_psd(expr: Affine, con: Constraint, n: int) -> PsdBlock:
    d = expr.shape[0]
    if not _is_hermitian_structured(expr):
        raise ValueError("PSD constraint on a non-Hermitian expression")
    tp = np.arange(d * d).reshape(d, d).T.ravel()
    coef = _pad(expr.coef, n)
    coef = 0.5 * (coef + coef[tp].conj())
    const = 0.5 * (expr.const + expr.const[tp].conj())
    if not con.embedded:
        F = sp.csr_matrix(coef.real)
        F.eliminate_zeros()
        return PsdBlock(d, const.real.reshape(d, d), F)
    src, rs, ims = embed_index_maps(d)
    sub = coef[src]
    F = sp.diags(rs) @ sp.csr_matrix(sub.real) + sp.diags(ims) @ sp.csr_matrix(sub.imag)
    F = sp.csr_matrix(F)
    F.eliminate_zeros()
    F0 = (rs * const[src].real + ims * const[src].imag).reshape(2 * d, 2 * d)
    return PsdBlock(2 * d, F0, F)


class ModelSolution:
    def __init__(self, model: Model, res: SdpSolution):
        self.model = model
        self.raw = res
        self.x = res.x
        self.status = res.status

    @property
    def objective_value(self) -> float:
        return self.model._sign * self.raw.objective_value

    def value(self, expr):
        if not isinstance(expr, Affine):
            return expr
        v = _pad(expr.coef, self.x.size) @ self.x + expr.const
        v = v.reshape(expr.shape)
        if expr.is_real():
            v = v.real
        return v

    def dual(self, con: Constraint):
        """Multiplier of a constraint in the Lagrangian  f - <Y, g(x)>.

        PSD constraints give a PSD matrix (complex Hermitian if the block was
        embedded), 'ge' constraints nonnegative reals, 'eq' the raw row multipliers.
        """
        if con.kind == "psd":
            X = self.raw.dual_blocks[con.index]
            return 2.0 * unembed_hermitian(X) if con.embedded else X
        if con.kind == "ge":
            return self.raw.dual_lp[con.index : con.index + con.count]
        return self.raw.y[con.index : con.index + con.count]
