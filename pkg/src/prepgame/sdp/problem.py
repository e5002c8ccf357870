"""Problem and solution containers for the SDP layer.

A problem is

    minimize    c·x + offset
    subject to  F0_b + Σ_i x_i F_i,b  ⪰ 0      for every PSD block b
                h + G x                ≥ 0      (elementwise)
                A x                    = b

with every F real symmetric. Complex Hermitian blocks are turned into real
ones by :func:`embed_hermitian` before they get here.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.sparse as sp

SYM_TOL = 1e-12

STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit")


class SolverError(RuntimeError):
    """Raised when a solve does not end with status ``optimal``."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(message or f"SDP solve ended with status {status!r}")


@dataclass
class PsdBlock:
    """Affine pencil F0 + Σ x_i F_i; column i of ``F`` is the row-major vec of F_i."""

    dim: int
    F0: np.ndarray
    F: sp.csr_matrix

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + (self.F @ x).reshape(self.dim, self.dim)


@dataclass
class SdpProblem:
    c: np.ndarray
    blocks: list = field(default_factory=list)
    G: sp.csr_matrix | None = None
    h: np.ndarray | None = None
    A: sp.csr_matrix | None = None
    b: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.G is None:
            self.G = sp.csr_matrix((0, n))
            self.h = np.zeros(0)
        if self.A is None:
            self.A = sp.csr_matrix((0, n))
            self.b = np.zeros(0)
        self.G = sp.csr_matrix(self.G)
        self.A = sp.csr_matrix(self.A)
        self.h = np.asarray(self.h, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()

    @property
    def num_vars(self) -> int:
        return self.c.size

    def check(self) -> None:
        """Raise ValueError if shapes disagree or a block is not symmetric."""
        n = self.num_vars
        if self.G.shape != (self.h.size, n):
            raise ValueError("inequality rows have inconsistent shape")
        if self.A.shape != (self.b.size, n):
            raise ValueError("equality rows have inconsistent shape")
        for k, blk in enumerate(self.blocks):
            d = blk.dim
            if blk.F0.shape != (d, d) or blk.F.shape != (d * d, n):
                raise ValueError(f"block {k} has inconsistent shape")
            if np.max(np.abs(blk.F0 - blk.F0.T), initial=0.0) > SYM_TOL:
                raise ValueError(f"block {k}: F0 is not symmetric")
            perm = np.arange(d * d).reshape(d, d).T.ravel()
            diff = blk.F - blk.F[perm]
            if diff.nnz and np.max(np.abs(diff.data)) > SYM_TOL:
                raise ValueError(f"block {k}: some F_i is not symmetric")

    def residuals(self, x: np.ndarray) -> tuple[float, float, float]:
        """(most negative block eigenvalue, most negative LP slack, max |Ax - b|)."""
        psd = 0.0
        for blk in self.blocks:
            lm = float(np.linalg.eigvalsh(blk.value(x))[0])
            psd = min(psd, lm)
        lp = float(np.min(self.h + self.G @ x, initial=0.0))
        eq = float(np.max(np.abs(self.A @ x - self.b), initial=0.0))
        return psd, min(lp, 0.0), eq

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.offset)

    # -- text dump ---------------------------------------------------------
    def dump(self, fh: TextIO) -> None:
        """Write the instance as a sparse triplet listing.

        Format (one record per line, 1-based indices, whitespace separated)::

            prepgame-sdp 1
            vars <n>
            blocks <d_1> ... <d_B>
            lp <m>
            eq <p>
            offset <value>
            c <j> <value>                   nonzero objective entries
            F <block> <j> <row> <col> <v>   j = 0 is F0; upper triangle only
            G <row> <j> <value>             h + G x >= 0, j = 0 is h
            A <row> <j> <value>             A x = b, j = 0 is b
        """
        r = repr
        fh.write("prepgame-sdp 1\n")
        fh.write(f"vars {self.num_vars}\n")
        fh.write("blocks " + " ".join(str(b.dim) for b in self.blocks) + "\n")
        fh.write(f"lp {self.h.size}\neq {self.b.size}\noffset {r(float(self.offset))}\n")
        for j in np.flatnonzero(self.c):
            fh.write(f"c {j + 1} {r(float(self.c[j]))}\n")
        for k, blk in enumerate(self.blocks, start=1):
            d = blk.dim
            for i, j in zip(*np.nonzero(np.triu(blk.F0))):
                fh.write(f"F {k} 0 {i + 1} {j + 1} {r(float(blk.F0[i, j]))}\n")
            coo = blk.F.tocoo()
            for row, col, v in zip(coo.row, coo.col, coo.data):
                i, j = divmod(int(row), d)
                if i <= j and v != 0:
                    fh.write(f"F {k} {col + 1} {i + 1} {j + 1} {r(float(v))}\n")
        for tag, M, rhs in (("G", self.G, self.h), ("A", self.A, self.b)):
            for i in np.flatnonzero(rhs):
                fh.write(f"{tag} {i + 1} 0 {r(float(rhs[i]))}\n")
            coo = M.tocoo()
            for row, col, v in zip(coo.row, coo.col, coo.data):
                if v != 0:
                    fh.write(f"{tag} {row + 1} {col + 1} {r(float(v))}\n")

    @classmethod
    def load(cls, fh: TextIO) -> "SdpProblem":
        """Inverse of :meth:`dump`."""
        lines = [ln.split() for ln in fh if ln.strip()]
        if not lines or lines[0][:1] != ["prepgame-sdp"]:
            raise ValueError("not an SDP dump (missing header)")
        head = {ln[0]: ln[1:] for ln in lines[1:6]}
        n = int(head["vars"][0])
        dims = [int(t) for t in head["blocks"]]
        m, p = int(head["lp"][0]), int(head["eq"][0])
        c = np.zeros(n)
        F0 = [np.zeros((d, d)) for d in dims]
        Ft = [([], [], []) for _ in dims]
        G = ([], [], [])
        A = ([], [], [])
        h, b = np.zeros(m), np.zeros(p)
        for ln in lines[6:]:
            tag = ln[0]
            if tag == "c":
                c[int(ln[1]) - 1] = float(ln[2])
            elif tag == "F":
                k, j, i1, i2, v = int(ln[1]) - 1, int(ln[2]), int(ln[3]) - 1, int(ln[4]) - 1, float(ln[5])
                d = dims[k]
                if j == 0:
                    F0[k][i1, i2] = F0[k][i2, i1] = v
                else:
                    rows = {i1 * d + i2, i2 * d + i1}
                    for rr in rows:
                        Ft[k][0].append(rr)
                        Ft[k][1].append(j - 1)
                        Ft[k][2].append(v)
            elif tag in ("G", "A"):
                row, j, v = int(ln[1]) - 1, int(ln[2]), float(ln[3])
                tgt, rhs = (G, h) if tag == "G" else (A, b)
                if j == 0:
                    rhs[row] = v
                else:
                    tgt[0].append(row)
                    tgt[1].append(j - 1)
                    tgt[2].append(v)
            else:
                raise ValueError(f"unknown record {tag!r}")
        blocks = [
            PsdBlock(d, F0[k], sp.csr_matrix((Ft[k][2], (Ft[k][0], Ft[k][1])), shape=(d * d, n)))
            for k, d in enumerate(dims)
        ]
        return cls(
            c=c,
            blocks=blocks,
            G=sp.csr_matrix((G[2], (G[0], G[1])), shape=(m, n)),
            h=h,
            A=sp.csr_matrix((A[2], (A[0], A[1])), shape=(p, n)),
            b=b,
            offset=float(head["offset"][0]),
        )


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    objective_value: float
    dual_blocks: list
    dual_lp: np.ndarray
    y: np.ndarray
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    backend: str
    condition: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def embed_hermitian(m: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix."""
    m = np.asarray(m)
    re, im = np.real(m), np.imag(m)
    return np.block([[re, -im], [im, re]])


def embed_index_maps(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row maps for embedding vec'd Hermitian pencils.

    Returns (src, re_sign, im_sign) arrays of length (2d)^2 such that entry r
    of the embedded vec equals re_sign[r]*Re(v[src[r]]) + im_sign[r]*Im(v[src[r]]).
    """
    D = 2 * d
    rows, cols = np.divmod(np.arange(D * D), D)
    bi, bj = rows // d, cols // d
    src = (rows % d) * d + (cols % d)
    re_sign = np.where(bi == bj, 1.0, 0.0)
    im_sign = np.where((bi == 1) & (bj == 0), 1.0, np.where((bi == 0) & (bj == 1), -1.0, 0.0))
    return src, re_sign, im_sign


def unembed_hermitian(m: np.ndarray) -> np.ndarray:
    """Complex Hermitian matrix represented by a (2d)x(2d) real embedding.

    Averages the two copies, so it is also the natural map for dual blocks.
    """
    d = m.shape[0] // 2
    a, b = m[:d, :d], m[d:, d:]
    c, e = m[d:, :d], m[:d, d:]
    return 0.5 * (a + b) + 0.5j * (c - e)
