"""ADMM solver for small dense complex semidefinite programs.

Problems have the form::

    maximize   Re Tr(C* X)
    subject to Re Tr(A_i* X) = b_i,   X >= 0

where ``X`` may be block diagonal.  The iteration alternates an orthogonal
projection onto the affine set with a projection onto the PSD cone, using a
scaled dual variable and over-relaxation.  Constraint sets with closed-form
projections (partial-trace equalities and friends) plug in through the
:class:`AffineSet` interface; generic constraint lists go through
:class:`GramAffineSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .linalg import DimensionError, partial_trace

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 100_000
# initial penalty is RHO0 * ||C||_F (floored), so the iteration is invariant to objective scaling
RHO0 = 0.1
RHO_FLOOR = 1e-3
RELAX = 1.6
ADAPT_RATIO = 10.0
ADAPT_FACTOR = 2.0
ADAPT_EVERY = 10
STALL_WINDOW = 5000
STALL_LEVEL = 1e-6
STALL_DUAL_RATIO = 1e-2
EARLY_STOP_EVERY = 50
# residual and gap thresholds are tol * STOP_MARGIN so the objective error stays below tol
STOP_MARGIN = 0.1


class InfeasibleError(RuntimeError):
    """The constraint set is inconsistent or does not meet the PSD cone."""


def _hinner(a: np.ndarray, b: np.ndarray) -> float:
    """Re Tr(a* b)."""
    return float(np.vdot(a, b).real)


# ---------------------------------------------------------------------------
# affine sets


class AffineSet:
    """Interface: orthogonal projection onto an affine set of block matrices."""

    block_sizes: tuple

    def project(self, blocks: list) -> list:  # pragma: no cover - interface
        raise NotImplementedError

    def violation(self, blocks: list) -> float:
        """Distance-like measure of how far ``blocks`` is from the set."""
        p = self.project(blocks)
        return float(np.sqrt(sum(np.linalg.norm(a - b) ** 2 for a, b in zip(blocks, p))))


def _pack(blocks) -> np.ndarray:
    return np.concatenate([np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in blocks])


def _unpack(vec: np.ndarray, sizes) -> list:
    out, k = [], 0
    for n in sizes:
        nn = n * n
        re = vec[k:k + nn]
        im = vec[k + nn:k + 2 * nn]
        out.append((re + 1j * im).reshape(n, n))
        k += 2 * nn
    return out


def split_blocks(m: np.ndarray, sizes) -> list:
    out, k = [], 0
    for n in sizes:
        out.append(m[k:k + n, k:k + n])
        k += n
    return out


def join_blocks(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=complex)
    k = 0
    for b in blocks:
        s = b.shape[0]
        out[k:k + s, k:k + s] = b
        k += s
    return out


class GramAffineSet(AffineSet):
    """Projection onto {X : Re Tr(A_i* X) = b_i} through the constraint Gram matrix.

    Redundant constraints are handled with an eigenvalue-thresholded
    pseudo-inverse of the Gram matrix; right-hand sides outside the range of
    the constraint map raise :class:`InfeasibleError` up front.
    """

    def __init__(self, constraints, block_sizes):
        block_sizes = tuple(int(n) for n in block_sizes)
        m = len(constraints)
        dim = sum(2 * n * n for n in block_sizes)
        rows = np.zeros((m, dim))
        rhs = np.zeros(m)
        for i, (a, b) in enumerate(constraints):
            blocks = a if isinstance(a, list) else split_blocks(np.asarray(a, dtype=complex), block_sizes)
            rows[i] = _pack(blocks)
            rhs[i] = float(b)
        self._setup(rows, rhs, block_sizes)

    @classmethod
    def from_rows(cls, rows: np.ndarray, rhs: np.ndarray, block_sizes) -> "GramAffineSet":
        """Rows act on the packed (real parts, imaginary parts) coordinates of the blocks."""
        obj = cls.__new__(cls)
        obj._setup(rows, np.asarray(rhs, dtype=float), tuple(int(n) for n in block_sizes))
        return obj

    def _setup(self, rows, rhs, block_sizes):
        self.block_sizes = block_sizes
        # constraint rows are typically very sparse; only the Gram pseudo-inverse is dense
        self.rows = sparse.csr_matrix(rows, dtype=float)
        m = self.rows.shape[0]
        self.rhs = rhs
        if m == 0:
            self._ginv = np.zeros((0, 0))
            return
        gram = (self.rows @ self.rows.T).toarray()
        vals, vecs = np.linalg.eigh(gram)
        cut = 1e-12 * max(1.0, vals[-1])
        keep = vals > cut
        vk = vecs[:, keep]
        # b must lie in range(rows) = range(gram)
        leftover = rhs - vk @ (vk.T @ rhs)
        if np.linalg.norm(leftover) > 1e-6 * (1 + np.abs(rhs).sum()):
            raise InfeasibleError("inconsistent linear constraints")
        self._ginv = (vk / vals[keep]) @ vk.T

    def project(self, blocks):
        x = _pack(blocks)
        if self.rows.shape[0]:
            x = x - self.rows.T @ (self._ginv @ (self.rows @ x - self.rhs))
        out = _unpack(x, self.block_sizes)
        return [(b + b.conj().T) / 2 for b in out]

    def violation(self, blocks):
        if not self.rows.shape[0]:
            return 0.0
        return float(np.abs(self.rows @ _pack(blocks) - self.rhs).max())


class LinearConstraints:
    """Accumulates complex linear equalities sum_t c_t X_{b_t}[i_t, j_t] = rhs on Hermitian blocks.

    Each equality becomes two real rows (real and imaginary part), each the
    packed form of a Hermitian coefficient matrix.
    """

    def __init__(self, block_sizes):
        self.block_sizes = tuple(int(n) for n in block_sizes)
        self._offsets = np.concatenate([[0], np.cumsum([2 * n * n for n in self.block_sizes])])
        self._rows: list = []
        self._rhs: list = []

    @property
    def dim(self) -> int:
        return int(self._offsets[-1])

    def _row(self, terms) -> dict:
        row: dict = {}
        for b, i, j, c in terms:
            n = self.block_sizes[b]
            base = int(self._offsets[b])
            # hermitized coefficient matrix A = (conj(c) e_ij + c e_ji) / 2, packed as (Re A, Im A)
            for (p, q, a) in ((i, j, np.conj(c) / 2), (j, i, c / 2)):
                k = base + p * n + q
                row[k] = row.get(k, 0.0) + a.real
                row[k + n * n] = row.get(k + n * n, 0.0) + a.imag
        return row

    def add(self, terms, rhs: complex = 0.0) -> None:
        terms = [(b, i, j, complex(c)) for b, i, j, c in terms]
        rhs = complex(rhs)
        self._rows.append(self._row(terms))
        self._rhs.append(rhs.real)
        self._rows.append(self._row([(b, i, j, -1j * c) for b, i, j, c in terms]))
        self._rhs.append(rhs.imag)

    def add_real(self, terms, rhs: float = 0.0) -> None:
        """Only the real part of the functional is constrained."""
        self._rows.append(self._row([(b, i, j, complex(c)) for b, i, j, c in terms]))
        self._rhs.append(float(rhs))

    def arrays(self):
        """Sparse constraint rows (CSR) and right-hand sides."""
        data, cols, ptr = [], [], [0]
        for row in self._rows:
            for k, v in row.items():
                if v != 0.0:
                    cols.append(k)
                    data.append(v)
            ptr.append(len(cols))
        rows = sparse.csr_matrix((data, cols, ptr), shape=(len(self._rows), self.dim))
        return rows, np.array(self._rhs, dtype=float)

    def affine_set(self) -> GramAffineSet:
        rows, rhs = self.arrays()
        return GramAffineSet.from_rows(rows, rhs, self.block_sizes)

    def residual(self, blocks) -> float:
        rows, rhs = self.arrays()
        return float(np.abs(rows @ _pack(blocks) - rhs).max(initial=0.0))


def embed_identity(m: np.ndarray, dims: Sequence[int], position: int) -> np.ndarray:
    """I_{dims[position]} tensored into ``m`` (an operator on the other factors)."""
    dims = [int(d) for d in dims]
    k = len(dims)
    rest = [d for i, d in enumerate(dims) if i != position]
    t = np.asarray(m).reshape(rest + rest)
    eye = np.eye(dims[position])
    # build axes (rest..., rest...) x (p, p') then move p, p' into place
    full = np.multiply.outer(t, eye)
    full = np.moveaxis(full, [2 * (k - 1), 2 * (k - 1) + 1], [position, k + position])
    n = int(np.prod(dims))
    return full.reshape(n, n)


class PartialTraceAffineSet(AffineSet):
    """{X : Tr_f X = target} for one tensor factor f of a single block."""

    def __init__(self, dims, traced: int, target: np.ndarray):
        self.dims = [int(d) for d in dims]
        self.traced = int(traced)
        self.target = np.asarray(target, dtype=complex)
        self.block_sizes = (int(np.prod(self.dims)),)

    def project(self, blocks):
        (x,) = blocks
        k, f = len(self.dims), self.traced
        d = self.dims[f]
        t = x.reshape(self.dims + self.dims)
        delta = np.trace(t, axis1=f, axis2=f + k) - self.target.reshape(
            [n for i, n in enumerate(self.dims) if i != f] * 2)
        delta = np.expand_dims(np.expand_dims(delta, f), f + k)
        shape = [1] * (2 * k)
        shape[f] = shape[f + k] = d
        return [x - (delta * (np.eye(d) / d).reshape(shape)).reshape(x.shape)]

    def violation(self, blocks):
        (x,) = blocks
        return float(np.linalg.norm(partial_trace(x, self.dims, [self.traced]) - self.target))


# ---------------------------------------------------------------------------
# problem / solution types


@dataclass(frozen=True)
class SdpProblem:
    """maximize Re Tr(C* X) s.t. Re Tr(A_i* X) = b_i, X >= 0.

    ``blocks`` optionally declares X block diagonal with the given block
    sides; off-block entries of C and A_i are then ignored.
    """

    objective: np.ndarray
    constraints: tuple
    blocks: tuple | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionError("objective must be square")
        object.__setattr__(self, "objective", c)
        cons = []
        for a, b in self.constraints:
            a = np.asarray(a, dtype=complex)
            if a.shape != c.shape:
                raise DimensionError(f"constraint shape {a.shape} != objective shape {c.shape}")
            if np.abs(a - a.conj().T).max(initial=0.0) > 1e-9:
                raise ValueError("constraint matrices must be Hermitian")
            cons.append((a, float(b)))
        object.__setattr__(self, "constraints", tuple(cons))
        if np.abs(c - c.conj().T).max(initial=0.0) > 1e-9:
            raise ValueError("objective must be Hermitian")
        blocks = self.blocks if self.blocks is not None else (c.shape[0],)
        if sum(blocks) != c.shape[0]:
            raise DimensionError("block sizes do not add up to the side")
        object.__setattr__(self, "blocks", tuple(int(b) for b in blocks))

    @property
    def side(self) -> int:
        return self.objective.shape[0]


@dataclass(frozen=True)
class SdpSolution:
    X: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool


@dataclass
class AdmmState:
    """Iterates of a run; ``Z`` is PSD, ``X`` lies in the affine set."""

    X: list
    Z: list
    U: list
    rho: float
    iterations: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    converged: bool = False
    history: list = field(default_factory=list)


def _sq(a: np.ndarray) -> float:
    return float(np.vdot(a, a).real)


def _psd(h: np.ndarray) -> np.ndarray:
    h = (h + h.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    if vals[0] >= 0:
        return h
    pos = vals > 0
    v = vecs[:, pos]
    return (v * vals[pos]) @ v.conj().T


def _gap(c_blocks, x, u, rho) -> float:
    # dual slack is -rho*U; the duality gap is its pairing with X
    obj = block_objective(c_blocks, x)
    return abs(rho * sum(_hinner(a, b) for a, b in zip(u, x))) / (1 + abs(obj))


def admm(c_blocks: list, affine: AffineSet, *, tol: float = DEFAULT_TOL,
         max_iter: int = DEFAULT_MAX_ITER, start: list | None = None,
         record: bool = False, early_stop=None) -> AdmmState:
    """Run the ADMM iteration to the relative residual tolerance ``tol``.

    Residuals are relative: primal ‖X−Z‖/(1+max‖X‖,‖Z‖), dual
    ρ‖Z_k−Z_{k−1}‖/(1+‖ρU‖); convergence also requires the duality gap
    |ρ⟨U,X⟩|/(1+|objective|); all three must fall below ``tol``/10.  ``start`` warm-starts Z.
    ``early_stop(state)`` is polled every EARLY_STOP_EVERY iterations; returning
    True ends the run (``converged`` stays False).
    """
    c_blocks = [np.asarray(c, dtype=complex) for c in c_blocks]
    sizes = [c.shape[0] for c in c_blocks]
    if start is None:
        z = [np.zeros((n, n), dtype=complex) for n in sizes]
    else:
        z = [np.array(s, dtype=complex) for s in start]
    u = [np.zeros((n, n), dtype=complex) for n in sizes]
    rho = RHO0 * max(np.sqrt(sum(_sq(c) for c in c_blocks)), RHO_FLOOR)
    stop = STOP_MARGIN * tol
    st = AdmmState(X=z, Z=z, U=u, rho=rho)
    best_rp = np.inf
    last_gain = 0
    for it in range(1, max_iter + 1):
        x = affine.project([zj - uj + cj / rho for zj, uj, cj in zip(z, u, c_blocks)])
        xh = [RELAX * xj + (1 - RELAX) * zj for xj, zj in zip(x, z)]
        zn = [_psd(a + b) for a, b in zip(xh, u)]
        u = [uj + a - b for uj, a, b in zip(u, xh, zn)]
        r = np.sqrt(sum(_sq(a - b) for a, b in zip(x, zn)))
        s = rho * np.sqrt(sum(_sq(a - b) for a, b in zip(zn, z)))
        z = zn
        nx = np.sqrt(sum(_sq(a) for a in x))
        nz = np.sqrt(sum(_sq(a) for a in z))
        nu = rho * np.sqrt(sum(_sq(a) for a in u))
        rp = r / (1 + max(nx, nz))
        rd = s / (1 + nu)
        if record:
            st.history.append((rp, rd))
        if rp < stop and rd < stop and _gap(c_blocks, x, u, rho) < stop:
            st.X, st.Z, st.U, st.rho = x, z, u, rho
            st.iterations, st.primal_residual, st.dual_residual = it, rp, rd
            st.converged = True
            return st
        if rp < 0.5 * best_rp:
            best_rp, last_gain = rp, it
        elif rp > STALL_LEVEL and it - last_gain >= STALL_WINDOW and rd < STALL_DUAL_RATIO * rp:
            # the iterates settled at a positive distance from the affine set
            raise InfeasibleError(f"primal residual stalled at {rp:.3g} after {it} iterations")
        if early_stop is not None and it % EARLY_STOP_EVERY == 0:
            st.X, st.Z, st.U, st.rho = x, z, u, rho
            st.iterations, st.primal_residual, st.dual_residual = it, rp, rd
            if early_stop(st):
                return st
        if it % ADAPT_EVERY == 0:
            if rp > ADAPT_RATIO * rd:
                rho *= ADAPT_FACTOR
                u = [a / ADAPT_FACTOR for a in u]
            elif rd > ADAPT_RATIO * rp:
                rho /= ADAPT_FACTOR
                u = [a * ADAPT_FACTOR for a in u]
    st.X, st.Z, st.U, st.rho = x, z, u, rho
    st.iterations, st.primal_residual, st.dual_residual = max_iter, rp, rd
    return st


def dual_bound(c_blocks, affine: AffineSet, u_blocks, rho: float) -> float | None:
    """Certified upper bound on max Re Tr(C* X) over the affine set ∩ PSD.

    Any Y orthogonal to the linear part of the affine set with Y − C ⪰ 0
    bounds the objective by <Y, x0> for any feasible-set point x0.  Y starts
    from the ADMM dual estimate C − ρU, is projected onto the orthogonal
    complement and then shifted by multiples of the block identities, which
    must themselves be orthogonal to the linear part.  Returns None when
    they are not.
    """
    c_blocks = [np.asarray(c, dtype=complex) for c in c_blocks]
    zero = [np.zeros_like(c) for c in c_blocks]
    x0 = affine.project(zero)

    def perp(blocks):
        p = affine.project(blocks)
        return [b - pb + z for b, pb, z in zip(blocks, p, x0)]

    for k, c in enumerate(c_blocks):
        eye = [np.eye(c.shape[0]) if i == k else np.zeros_like(z) for i, z in enumerate(zero)]
        lin = [a - b for a, b in zip(affine.project(eye), x0)]
        if np.sqrt(sum(_sq(a) for a in lin)) > 1e-9 * np.sqrt(c.shape[0]):
            return None
    y = perp([c - rho * uu for c, uu in zip(c_blocks, u_blocks)])
    bound = sum(_hinner(yb, xb) for yb, xb in zip(y, x0))
    for yb, cb, xb in zip(y, c_blocks, x0):
        s = yb - cb
        lam = float(np.linalg.eigvalsh((s + s.conj().T) / 2)[0])
        bound += max(0.0, -lam) * float(np.trace(xb).real)
    return float(bound)


def block_objective(c_blocks, x_blocks) -> float:
    return sum(_hinner(c, x) for c, x in zip(c_blocks, x_blocks))


def solve(p: SdpProblem, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> SdpSolution:
    affine = GramAffineSet([(a, b) for a, b in p.constraints], p.blocks)
    c_blocks = split_blocks(p.objective, p.blocks)
    st = admm(c_blocks, affine, tol=tol, max_iter=max_iter)
    x = join_blocks(st.X)
    return SdpSolution(
        X=x,
        objective_value=block_objective(c_blocks, st.X),
        primal_residual=st.primal_residual,
        dual_residual=st.dual_residual,
        iterations=st.iterations,
        converged=st.converged,
    )


def normalize_choi(j: np.ndarray, out_dim: int, in_dim: int) -> np.ndarray:
    """Congruence J -> (I⊗T^{-1/2}) J (I⊗T^{-1/2}) with T = Tr_out J.

    Maps a PSD matrix with Tr_out J ≈ I onto an exact channel Choi matrix.
    """
    from .linalg import inv_sqrt_psd

    t = partial_trace(j, [out_dim, in_dim], [0])
    m = np.kron(np.eye(out_dim), inv_sqrt_psd(t))
    out = m @ j @ m
    return (out + out.conj().T) / 2


def max_over_choi(w, out_dim: int, in_dim: int, extra=(), *, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER, start=None):
    """Maximize Re Tr(W J) over channel Choi matrices J (out⊗in ordering).

    Without extra constraints the returned J is an exact channel (PSD iterate
    renormalized to be trace preserving) and the value is evaluated on it.
    With extra equalities the affine-feasible iterate is returned instead.
    """
    w = np.asarray(w, dtype=complex)
    n = out_dim * in_dim
    if w.shape != (n, n):
        raise DimensionError(f"W has shape {w.shape}, expected {(n, n)}")
    w = (w + w.conj().T) / 2
    if not extra:
        affine = PartialTraceAffineSet([out_dim, in_dim], 0, np.eye(in_dim))
        if start is None:
            start = [np.eye(n, dtype=complex) / out_dim]
        st = admm([w], affine, tol=tol, max_iter=max_iter, start=start)
        j = normalize_choi(st.Z[0], out_dim, in_dim)
        return j, _hinner(w, j)
    cons = []
    eye_in = np.eye(in_dim)
    for i in range(in_dim):
        for k in range(i, in_dim):
            e = np.zeros((in_dim, in_dim), dtype=complex)
            e[i, k] = 1
            herm = (e + e.T) / 2
            cons.append((np.kron(np.eye(out_dim), herm), float(eye_in[i, k].real)))
            if k != i:
                anti = 1j * (e - e.T) / 2
                cons.append((np.kron(np.eye(out_dim), anti), 0.0))
    cons.extend((np.asarray(a, dtype=complex), float(b)) for a, b in extra)
    sol = solve(SdpProblem(w, tuple(cons)), max_iter=max_iter, tol=tol)
    return sol.X, sol.objective_value
