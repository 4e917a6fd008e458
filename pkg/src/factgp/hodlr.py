"""Hierarchical off-diagonal low-rank (HODLR) kernel matrices.

The training points are reordered by a k-d split so that every
off-diagonal block couples two spatially separated clusters and is
compressed by partially pivoted ACA. Two direct solvers sit on top:

* :func:`hodlr_factorize`, the multiplicative chain K = K_l ... K_1 K_0
  (block-diagonal leaf factor, then one identity-plus-low-rank factor per
  level, each inverted with Sherman-Morrison-Woodbury);
* :func:`hodlr_cholesky`, a hierarchical Cholesky factor L with
  low-rank off-diagonal blocks, whose Schur-complement updates are pushed
  down the tree as a recompressed symmetric low-rank term.

All matrices here live in the permuted (tree) order; :class:`PermutationRecord`
maps to and from the caller's ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dense import LOG_2PI, Prediction
from .errors import IndefiniteMatrixError, InputShapeError, NearSingularUpdateError
from .kernel import as_inputs, kern_cross, kern_diag

DEFAULT_LEAF_SIZE = 64
DEFAULT_TOL = 1e-8
DEFAULT_MAX_RANK = 50


# ---------------------------------------------------------------------------
# partition


@dataclass(frozen=True)
class PermutationRecord:
    """perm[k] is the original index of the point stored at tree position k."""

    perm: np.ndarray

    @property
    def inverse(self):
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    def apply(self, v):
        """Original order -> tree order."""
        return np.asarray(v)[self.perm]

    def undo(self, v):
        """Tree order -> original order."""
        v = np.asarray(v)
        out = np.empty_like(v)
        out[self.perm] = v
        return out


@dataclass
class TreeNode:
    start: int
    stop: int
    level: int
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.left is None

    @property
    def size(self):
        return self.stop - self.start

    def walk(self):
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


def tree_depth(n, leaf_size):
    return 0 if n <= leaf_size else math.ceil(math.log2(n / leaf_size))


def partition_points(X, leaf_size=DEFAULT_LEAF_SIZE):
    """Recursive median split along the widest dimension.

    All leaves sit at the same depth, so leaf sizes stay within
    [leaf_size / 2, leaf_size]. Ties in the split coordinate are broken by
    original index, which makes the ordering deterministic.
    """
    X = as_inputs(X)
    if leaf_size < 8:
        raise ValueError("leaf_size must be at least 8")
    n = X.shape[0]
    if n < 1:
        raise InputShapeError("cannot partition an empty point set")
    depth = tree_depth(n, leaf_size)
    order = np.empty(n, dtype=np.intp)

    def split(idx, start, level):
        node = TreeNode(start, start + idx.size, level)
        if level == depth:
            order[start:start + idx.size] = idx
            return node
        pts = X[idx]
        d = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        idx = idx[np.lexsort((idx, pts[:, d]))]
        half = (idx.size + 1) // 2
        node.left = split(idx[:half], start, level + 1)
        node.right = split(idx[half:], start + half, level + 1)
        return node

    root = split(np.arange(n), 0, 0)
    return PermutationRecord(order), root


# ---------------------------------------------------------------------------
# adaptive cross approximation


@dataclass
class LowRank:
    U: np.ndarray
    V: np.ndarray
    truncated: bool = False

    @property
    def rank(self):
        return self.U.shape[1]

    def dense(self):
        return self.U @ self.V.T


def aca_compress(block_entry, rows, cols, tol=DEFAULT_TOL, max_rank=DEFAULT_MAX_RANK):
    """Partially pivoted adaptive cross approximation of one block.

    `block_entry(I, J)` returns the sub-block for index arrays I and J
    (a single row or column at a time is requested). Stops once the newest
    cross is below `tol` times the running Frobenius-norm estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    p, q = rows.size, cols.size
    cap = min(p, q, max_rank)
    us, vs = [], []
    row_free = np.ones(p, dtype=bool)
    col_free = np.ones(q, dtype=bool)
    norm2 = 0.0
    i = 0
    zero_rows = 0
    converged = False
    while len(us) < cap:
        row_free[i] = False
        r = np.asarray(block_entry(rows[i:i + 1], cols), dtype=float).ravel()
        for u, v in zip(us, vs):
            r -= u[i] * v
        rmask = np.where(col_free, np.abs(r), -1.0)
        j = int(np.argmax(rmask))
        piv = r[j]
        if rmask[j] <= 0.0 or abs(piv) <= 1e-14 * math.sqrt(norm2):
            # row already reproduced; look elsewhere before declaring convergence
            zero_rows += 1
            if zero_rows > 3 or not row_free.any():
                converged = True
                break
            i = int(np.argmax(row_free))
            continue
        zero_rows = 0
        v = r / piv
        c = np.asarray(block_entry(rows, cols[j:j + 1]), dtype=float).ravel()
        for u, vv in zip(us, vs):
            c -= vv[j] * u
        col_free[j] = False
        nu2, nv2 = c @ c, v @ v
        cross = 0.0
        for u, vv in zip(us, vs):
            cross += (u @ c) * (vv @ v)
        norm2 += nu2 * nv2 + 2.0 * cross
        us.append(c)
        vs.append(v)
        if math.sqrt(nu2 * nv2) <= tol * math.sqrt(max(norm2, 0.0)):
            converged = True
            break
        cmask = np.where(row_free, np.abs(c), -1.0)
        i = int(np.argmax(cmask))
        if cmask[i] < 0:
            converged = True
            break
    if len(us) == cap and cap == min(p, q):
        converged = True
    if not us:
        return LowRank(np.zeros((p, 0)), np.zeros((q, 0)), False)
    return LowRank(np.stack(us, axis=1), np.stack(vs, axis=1), not converged)


def recompress(lr, tol):
    """QR + SVD truncation of an existing factorization to relative Frobenius `tol`."""
    if lr.rank == 0:
        return lr
    Qu, Ru = np.linalg.qr(lr.U)
    Qv, Rv = np.linalg.qr(lr.V)
    A, s, Bt = np.linalg.svd(Ru @ Rv.T)
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
    keep = int(np.sum(tail > tol * tail[0])) if tail[0] > 0 else 0
    return LowRank(Qu @ (A[:, :keep] * s[:keep]), Qv @ Bt[:keep].T, lr.truncated)


# ---------------------------------------------------------------------------
# the matrix


@dataclass
class HodlrNode:
    start: int
    stop: int
    level: int
    dense: np.ndarray | None = None
    left: "HodlrNode | None" = None
    right: "HodlrNode | None" = None
    off: LowRank | None = None  # block (left, right) = U V^T

    @property
    def is_leaf(self):
        return self.left is None

    @property
    def size(self):
        return self.stop - self.start

    def walk(self):
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()


@dataclass
class HodlrMatrix:
    root: HodlrNode
    n: int
    perm: PermutationRecord
    tol: float
    report: dict = field(default_factory=dict)

    @property
    def depth(self):
        return max(node.level for node in self.root.walk())

    def nodes_at(self, level):
        return [node for node in self.root.walk() if node.level == level]

    def dense(self):
        A = np.zeros((self.n, self.n))
        for node in self.root.walk():
            if node.is_leaf:
                A[node.start:node.stop, node.start:node.stop] = node.dense
            else:
                a, b = node.left, node.right
                blk = node.off.dense()
                A[a.start:a.stop, b.start:b.stop] = blk
                A[b.start:b.stop, a.start:a.stop] = blk.T
        return A

    def matvec(self, v):
        return hodlr_mvm(self, v)

    def diagnostics(self):
        """Per-level off-diagonal ranks and compression ratios."""
        levels = {}
        for node in self.root.walk():
            if node.is_leaf:
                continue
            a, b = node.left, node.right
            stored = node.off.rank * (a.size + b.size)
            entry = levels.setdefault(node.level, {"ranks": [], "stored": 0, "dense": 0})
            entry["ranks"].append(node.off.rank)
            entry["stored"] += stored
            entry["dense"] += a.size * b.size
        out = []
        for lev in sorted(levels):
            e = levels[lev]
            out.append({
                "level": lev,
                "ranks": e["ranks"],
                "max_rank": max(e["ranks"]),
                "compression_ratio": e["stored"] / e["dense"],
            })
        return {"n": self.n, "tol": self.tol, "levels": out,
                "truncated_blocks": self.report.get("truncated_blocks", 0)}

    def diagnostics_json(self):
        return json.dumps(self.diagnostics())


def _build(tree, entry, leaf_entry, perm, n, tol, max_rank, compress):
    truncated = 0

    def conv(t):
        nonlocal truncated
        node = HodlrNode(t.start, t.stop, t.level)
        if t.is_leaf:
            node.dense = leaf_entry(t.start, t.stop)
            return node
        node.left = conv(t.left)
        node.right = conv(t.right)
        lr = aca_compress(entry, np.arange(t.left.start, t.left.stop),
                          np.arange(t.right.start, t.right.stop), tol, max_rank)
        truncated += lr.truncated
        node.off = recompress(lr, tol) if compress else lr
        return node

    root = conv(tree)
    return HodlrMatrix(root, n, perm, tol, {"truncated_blocks": truncated})


def hodlr_assemble(X, spec, sigma2, tol=DEFAULT_TOL, leaf_size=DEFAULT_LEAF_SIZE,
                   max_rank=DEFAULT_MAX_RANK, compress=True):
    """HODLR form of K_XX + sigma2 I in k-d tree order.

    Noise only touches the dense leaves; off-diagonal blocks are pure
    kernel and are compressed by ACA (then SVD-recompressed).
    """
    X = as_inputs(X, spec.dim)
    perm, tree = partition_points(X, leaf_size)
    Xp = X[perm.perm]

    def entry(I, J):
        return kern_cross(spec, Xp[I], Xp[J])

    def leaf(s, e):
        K = kern_cross(spec, Xp[s:e], Xp[s:e])
        K[np.diag_indices_from(K)] += sigma2
        return K

    return _build(tree, entry, leaf, perm, X.shape[0], tol, max_rank, compress)


def hodlr_from_dense(A, leaf_size=DEFAULT_LEAF_SIZE, tol=DEFAULT_TOL,
                     max_rank=DEFAULT_MAX_RANK, compress=True):
    """HODLR form of an explicit symmetric matrix, keeping its row order."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    _, tree = partition_points(np.arange(n, dtype=float), leaf_size)

    def entry(I, J):
        return A[np.ix_(I, J)]

    return _build(tree, entry, lambda s, e: A[s:e, s:e].copy(),
                  PermutationRecord(np.arange(n)), n, tol, max_rank, compress)


def hodlr_mvm(M, v):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != M.n:
        raise InputShapeError(f"vector length {v.shape[0]} does not match HODLR size {M.n}")
    out = np.zeros_like(v)
    for node in M.root.walk():
        s, e = node.start, node.stop
        if node.is_leaf:
            out[s:e] += node.dense @ v[s:e]
            continue
        a, b = node.left, node.right
        U, V = node.off.U, node.off.V
        out[a.start:a.stop] += U @ (V.T @ v[b.start:b.stop])
        out[b.start:b.stop] += V @ (U.T @ v[a.start:a.stop])
    return out


# ---------------------------------------------------------------------------
# Sherman-Morrison-Woodbury factor chain


@dataclass
class _LevelFactor:
    """One identity-plus-low-rank factor I + X Y^T on rows [start, stop)."""

    start: int
    mid: int
    stop: int
    level: int
    Ut: np.ndarray  # row factor of block (a, b) after lower-level inverses
    Vt: np.ndarray  # row factor of block (b, a) after lower-level inverses
    U: np.ndarray
    V: np.ndarray
    core: tuple  # LU of I + Y^T X
    logdet: float

    def inv_apply(self, Mx):
        """In place: Mx <- (I + X Y^T)^{-1} Mx for the rows of this node."""
        Ma = Mx[: self.mid - self.start]
        Mb = Mx[self.mid - self.start:]
        rhs = np.concatenate([self.V.T @ Mb, self.U.T @ Ma], axis=0)
        t = sla.lu_solve(self.core, rhs, check_finite=False)
        r = self.U.shape[1]
        Ma -= self.Ut @ t[:r]
        Mb -= self.Vt @ t[r:]

    def apply(self, Mx):
        Ma = Mx[: self.mid - self.start]
        Mb = Mx[self.mid - self.start:]
        ta = self.U.T @ Ma
        tb = self.V.T @ Mb
        Ma += self.Ut @ tb
        Mb += self.Vt @ ta


@dataclass
class HodlrFactorChain:
    """K = K_l K_{l-1} ... K_0 with K_l the block-diagonal leaf factor."""

    n: int
    leaves: list  # (start, stop, cho_factor)
    levels: list  # levels[j] = factors at tree level j, for j = depth-1 .. 0 in order
    logdet: float

    @property
    def num_factors(self):
        return 1 + sum(1 for lev in self.levels if lev)

    def apply(self, v):
        """Multiply by the chain product (reproduces the HODLR matvec)."""
        x = np.array(v, dtype=float)
        for lev in reversed(self.levels):
            for f in lev:
                f.apply(x[f.start:f.stop])
        for s, e, cf in self.leaves:
            L = np.tril(cf[0]) if cf[1] else np.triu(cf[0]).T
            x[s:e] = L @ (L.T @ x[s:e])
        return x


def hodlr_factorize(M):
    """Build the multiplicative SMW chain of a positive definite HODLR matrix."""
    internal = [nd for nd in M.root.walk() if not nd.is_leaf]
    work = {id(nd): [nd.off.U.copy(), nd.off.V.copy()] for nd in internal}
    ancestors = {}

    def collect(node, path):
        ancestors[id(node)] = list(path)
        if not node.is_leaf:
            collect(node.left, path + [(node, 0)])
            collect(node.right, path + [(node, 1)])

    collect(M.root, [])

    def slices(node):
        """Row-factor slices of every ancestor that cover `node`'s rows."""
        out = []
        for anc, side in ancestors[id(node)]:
            child = anc.right if side else anc.left
            arr = work[id(anc)][side]
            if arr.shape[1]:
                out.append((arr, node.start - child.start, node.stop - child.start))
        return out

    def push(node, inv):
        sl = slices(node)
        if not sl:
            return
        block = np.concatenate([arr[s:e] for arr, s, e in sl], axis=1)
        inv(block)
        k = 0
        for arr, s, e in sl:
            w = arr.shape[1]
            arr[s:e] = block[:, k:k + w]
            k += w

    logdet = 0.0
    leaves = []
    for node in M.root.walk():
        if not node.is_leaf:
            continue
        try:
            cf = sla.cho_factor(node.dense, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise IndefiniteMatrixError(
                f"leaf block [{node.start}, {node.stop}) is not positive definite"
            ) from None
        logdet += 2.0 * np.sum(np.log(np.diag(cf[0])))
        leaves.append((node.start, node.stop, cf))

        def leaf_inv(B, cf=cf):
            B[:] = sla.cho_solve(cf, B, check_finite=False)

        push(node, leaf_inv)

    depth = M.depth
    levels = []
    for level in range(depth - 1, -1, -1):
        facs = []
        for node in internal:
            if node.level != level or node.off.rank == 0:
                continue
            Ut, Vt = work[id(node)]
            U, V = node.off.U, node.off.V
            r = U.shape[1]
            C = np.eye(2 * r)
            C[:r, r:] = V.T @ Vt
            C[r:, :r] = U.T @ Ut
            if np.linalg.cond(C) > 1e14:
                raise NearSingularUpdateError(
                    f"SMW core of node [{node.start}, {node.stop}) is near singular", level=level
                )
            lu = sla.lu_factor(C, check_finite=False)
            d = np.diag(lu[0])
            # det(I + X Y^T) is a ratio of principal minors, hence positive for PD input
            sign = np.prod(np.sign(d)) * (-1) ** int(np.sum(lu[1] != np.arange(2 * r)))
            if sign <= 0:
                raise IndefiniteMatrixError(f"non-positive SMW core determinant at level {level}")
            f = _LevelFactor(node.start, node.left.stop, node.stop, level,
                             Ut, Vt, U, V, lu, float(np.sum(np.log(np.abs(d)))))
            logdet += f.logdet
            facs.append(f)
            push(node, f.inv_apply)
        levels.append(facs)
    return HodlrFactorChain(M.n, leaves, levels, float(logdet))


def hodlr_solve(chain, b):
    """x = K^{-1} b = K_0^{-1} ... K_l^{-1} b."""
    x = np.array(b, dtype=float)
    if x.shape[0] != chain.n:
        raise InputShapeError(f"right-hand side has {x.shape[0]} rows, matrix is {chain.n}")
    for s, e, cf in chain.leaves:
        x[s:e] = sla.cho_solve(cf, x[s:e], check_finite=False)
    for lev in chain.levels:
        for f in lev:
            f.inv_apply(x[f.start:f.stop])
    return x


def hodlr_logdet(chain):
    """log|K|: leaf log-determinants plus one small core determinant per factor.

    Also accepts a :class:`HodlrCholesky`, whose log-determinant is read off
    the leaf diagonals.
    """
    if isinstance(chain, HodlrCholesky):
        return chain.logdet()
    return float(chain.logdet)


# ---------------------------------------------------------------------------
# hierarchical Cholesky


@dataclass
class CholNode:
    start: int
    stop: int
    L: np.ndarray | None = None  # leaf: dense lower factor
    left: "CholNode | None" = None
    right: "CholNode | None" = None
    Q: np.ndarray | None = None  # block (right, left) of L is Q G^T
    G: np.ndarray | None = None

    @property
    def is_leaf(self):
        return self.left is None


def _fsolve(node, B):
    """L^{-1} B for the factor rooted at `node` (B rows local to the node)."""
    if node.is_leaf:
        return sla.solve_triangular(node.L, B, lower=True, check_finite=False)
    p = node.left.stop - node.left.start
    xa = _fsolve(node.left, B[:p])
    rhs = B[p:]
    if node.Q.shape[1]:
        rhs = rhs - node.Q @ (node.G.T @ xa)
    xb = _fsolve(node.right, rhs)
    return np.concatenate([xa, xb], axis=0)


def _bsolve(node, B):
    """L^{-T} B."""
    if node.is_leaf:
        return sla.solve_triangular(node.L, B, lower=True, trans="T", check_finite=False)
    p = node.left.stop - node.left.start
    xb = _bsolve(node.right, B[p:])
    rhs = B[:p]
    if node.Q.shape[1]:
        rhs = rhs - node.G @ (node.Q.T @ xb)
    xa = _bsolve(node.left, rhs)
    return np.concatenate([xa, xb], axis=0)


@dataclass
class HodlrCholesky:
    root: CholNode
    n: int
    update_rtol: float

    def forward(self, b):
        return _fsolve(self.root, np.asarray(b, dtype=float))

    def backward(self, b):
        return _bsolve(self.root, np.asarray(b, dtype=float))

    def solve(self, b):
        return self.backward(self.forward(b))

    def logdet(self):
        total = 0.0
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if nd.is_leaf:
                total += 2.0 * np.sum(np.log(np.diag(nd.L)))
            else:
                stack += [nd.left, nd.right]
        return float(total)

    def dense_L(self):
        L = np.zeros((self.n, self.n))

        def fill(nd):
            if nd.is_leaf:
                L[nd.start:nd.stop, nd.start:nd.stop] = nd.L
                return
            fill(nd.left)
            fill(nd.right)
            a, b = nd.left, nd.right
            L[b.start:b.stop, a.start:a.stop] = nd.Q @ nd.G.T

        fill(self.root)
        return L


def _compress_sym(T, core, rtol):
    """Re-express T core T^T with an orthonormal basis and truncated spectrum."""
    if T.shape[1] == 0:
        return T, core
    Qt, Rt = np.linalg.qr(T)
    C = Rt @ core @ Rt.T
    lam, E = np.linalg.eigh(0.5 * (C + C.T))
    big = np.max(np.abs(lam)) if lam.size else 0.0
    keep = np.abs(lam) > rtol * big
    return Qt @ E[:, keep], np.diag(lam[keep])


def hodlr_cholesky(M, update_rtol=None):
    """Hierarchical Cholesky factor L (L L^T = M) with low-rank off-diagonal blocks.

    Factoring the leading child leaves a Schur complement of the trailing
    child equal to its HODLR block minus a symmetric low-rank term; that term
    is carried into the recursion as W C W^T and truncated at `update_rtol`
    (relative to its largest eigenvalue).
    """
    rtol = 1e-3 * M.tol if update_rtol is None else update_rtol

    def chol(node, W, C):
        cn = CholNode(node.start, node.stop)
        if node.is_leaf:
            D = node.dense
            if W.shape[1]:
                D = D - W @ C @ W.T
            try:
                cn.L = sla.cholesky(D, lower=True, check_finite=False)
            except np.linalg.LinAlgError:
                raise IndefiniteMatrixError(
                    f"leaf block [{node.start}, {node.stop}) is not positive definite"
                ) from None
            return cn
        a, b = node.left, node.right
        p = a.size
        Wa, Wb = W[:p], W[p:]
        U, V = node.off.U, node.off.V
        k, r = W.shape[1], U.shape[1]
        # block (b, a) of the current matrix: V U^T - Wb C Wa^T = Q P^T
        P = np.concatenate([U, -Wa @ C], axis=1) if k else U
        Q = np.concatenate([V, Wb], axis=1) if k else V
        cn.left = chol(a, Wa, C)
        G = _fsolve(cn.left, P) if P.shape[1] else P
        cn.Q, cn.G = Q, G
        # Schur complement update Wb C Wb^T + Q (G^T G) Q^T on the basis T = [Wb, V]
        T = np.concatenate([Wb, V], axis=1)
        core = np.zeros((k + r, k + r))
        core[:k, :k] = C
        E2 = np.zeros((k + r, r + k))
        E2[k:, :r] = np.eye(r)
        E2[:k, r:] = np.eye(k)
        core += E2 @ (G.T @ G) @ E2.T
        Wn, Cn = _compress_sym(T, core, rtol)
        cn.right = chol(b, Wn, Cn)
        return cn

    root = chol(M.root, np.zeros((M.n, 0)), np.zeros((0, 0)))
    return HodlrCholesky(root, M.n, rtol)


# ---------------------------------------------------------------------------
# GP backend


@dataclass
class HcfgpPosterior:
    data: object
    spec: object
    perm: PermutationRecord
    M: HodlrMatrix
    factor: object
    solver: str
    alpha: np.ndarray  # tree order
    Xp: np.ndarray
    logdet: float
    nlml: float


def hcfgp_fit(data, spec, tol=DEFAULT_TOL, leaf_size=DEFAULT_LEAF_SIZE,
              max_rank=DEFAULT_MAX_RANK, solver="cholesky"):
    """Assemble and factorize the HODLR matrix, solve for alpha, evaluate the NLML."""
    M = hodlr_assemble(data.X, spec, spec.noise_variance, tol, leaf_size, max_rank)
    yp = M.perm.apply(data.y)
    if solver == "cholesky":
        fac = hodlr_cholesky(M)
        alpha = fac.solve(yp)
        logdet = fac.logdet()
    elif solver == "smw":
        fac = hodlr_factorize(M)
        alpha = hodlr_solve(fac, yp)
        logdet = hodlr_logdet(fac)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    n = data.n
    nlml = 0.5 * yp @ alpha + 0.5 * logdet + 0.5 * n * LOG_2PI
    Xp = data.X[M.perm.perm]
    return HcfgpPosterior(data, spec, M.perm, M, fac, solver, alpha, Xp, logdet, float(nlml))


def hcfgp_predict(post, Xstar):
    spec = post.spec
    Xstar = as_inputs(Xstar, spec.dim)
    Kxs = kern_cross(spec, post.Xp, Xstar)
    mean = Kxs.T @ post.alpha
    if post.solver == "cholesky":
        A = post.factor.forward(Kxs)
        quad = np.einsum("ij,ij->j", A, A)
    else:
        quad = np.einsum("ij,ij->j", Kxs, hodlr_solve(post.factor, Kxs))
    return Prediction(mean, kern_diag(spec, Xstar) - quad)


def hcfgp_fit_predict_nlml(data, spec, Xstar, tol=DEFAULT_TOL, leaf_size=DEFAULT_LEAF_SIZE,
                           max_rank=DEFAULT_MAX_RANK, solver="cholesky"):
    post = hcfgp_fit(data, spec, tol, leaf_size, max_rank, solver)
    pred = hcfgp_predict(post, Xstar)
    return {"mean": pred.mean, "variance": pred.var, "nlml": post.nlml}
