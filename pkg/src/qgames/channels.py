"""Channels and strategy objects: Choi matrices, block operator isometries,
stochastic operator matrices.

Choi convention: ``J = sum_ij Phi(e_ij) (x) e_ij`` with the output factor
first, so ``J[(a, x), (a', x')] = Phi(e_xx')[a, a']``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, Rng, partial_trace, random_isometry

CP_TOL = 1e-8
TP_TOL = 1e-7
ISOMETRY_TOL = 1e-8
KRAUS_CUTOFF = 1e-10


class ValidationError(ValueError):
    """An object fails the positivity / normalization checks it must satisfy."""


@dataclass(frozen=True)
class ChoiMatrix:
    J: np.ndarray
    in_dim: int
    out_dim: int

    def __post_init__(self):
        j = np.asarray(self.J, dtype=complex)
        n = self.in_dim * self.out_dim
        if j.shape != (n, n):
            raise DimensionError(f"Choi matrix shape {j.shape} does not match out={self.out_dim}, in={self.in_dim}")
        if np.abs(j - j.conj().T).max(initial=0.0) > 1e-9 * (1 + np.abs(j).max(initial=0.0)):
            raise ValidationError("Choi matrix is not Hermitian")
        object.__setattr__(self, "J", (j + j.conj().T) / 2)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.J)[0])

    def tp_error(self) -> float:
        t = partial_trace(self.J, [self.out_dim, self.in_dim], [0])
        return float(np.linalg.norm(t - np.eye(self.in_dim)))

    def is_channel(self, cp_tol: float = CP_TOL, tp_tol: float = TP_TOL) -> bool:
        return self.min_eig() >= -cp_tol and self.tp_error() < tp_tol

    def tensor(self) -> np.ndarray:
        """J as a 4-index array [a, x, a', x']."""
        o, i = self.out_dim, self.in_dim
        return self.J.reshape(o, i, o, i)

    def kraus(self, cutoff: float = KRAUS_CUTOFF) -> list:
        vals, vecs = np.linalg.eigh(self.J)
        thr = cutoff * max(float(np.trace(self.J).real), 0.0)
        ops = []
        for lam, v in zip(vals[::-1], vecs[:, ::-1].T):
            if lam <= thr:
                break
            ops.append(np.sqrt(lam) * v.reshape(self.out_dim, self.in_dim))
        return ops

    @classmethod
    def from_kraus(cls, ops) -> "ChoiMatrix":
        ops = [np.asarray(k, dtype=complex) for k in ops]
        out_dim, in_dim = ops[0].shape
        j = sum(np.outer(k.ravel(), k.ravel().conj()) for k in ops)
        return cls(j, in_dim, out_dim)

    @classmethod
    def identity(cls, d: int) -> "ChoiMatrix":
        return cls.from_kraus([np.eye(d)])

    @classmethod
    def replacer(cls, sigma, in_dim: int) -> "ChoiMatrix":
        sigma = np.asarray(sigma, dtype=complex)
        return cls(np.kron(sigma, np.eye(in_dim)), in_dim, sigma.shape[0])

    @classmethod
    def depolarizing(cls, d: int, p: float = 1.0) -> "ChoiMatrix":
        """rho -> (1-p) rho + p Tr(rho) I/d."""
        ident = cls.identity(d).J
        return cls((1 - p) * ident + p * np.eye(d * d) / d, d, d)


@dataclass(frozen=True)
class BlockIsometry:
    """Blocks U_{a,x}: H -> K stored as an array of shape (|A|, |X|, dim K, dim H)."""

    blocks: np.ndarray
    tol: float = ISOMETRY_TOL

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        if b.ndim != 4:
            raise DimensionError("blocks must have shape (A, X, K, H)")
        object.__setattr__(self, "blocks", b)
        err = self.isometry_error()
        if err > self.tol:
            raise ValidationError(f"block isometry condition violated by {err:.3g}")

    @property
    def out_label_dim(self) -> int:
        return self.blocks.shape[0]

    @property
    def in_label_dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def env_out_dim(self) -> int:
        return self.blocks.shape[2]

    @property
    def env_in_dim(self) -> int:
        return self.blocks.shape[3]

    def matrix(self) -> np.ndarray:
        """The isometry C^X⊗H -> C^A⊗K, rows (a, k), columns (x, h)."""
        a, x, k, h = self.blocks.shape
        return self.blocks.transpose(0, 2, 1, 3).reshape(a * k, x * h)

    def isometry_error(self) -> float:
        v = self.matrix()
        return float(np.abs(v.conj().T @ v - np.eye(v.shape[1])).max(initial=0.0))

    @classmethod
    def from_matrix(cls, v, x_dim: int, a_dim: int, tol: float = ISOMETRY_TOL) -> "BlockIsometry":
        v = np.asarray(v, dtype=complex)
        k = v.shape[0] // a_dim
        h = v.shape[1] // x_dim
        if k * a_dim != v.shape[0] or h * x_dim != v.shape[1]:
            raise DimensionError("matrix shape incompatible with label dimensions")
        return cls(v.reshape(a_dim, k, x_dim, h).transpose(0, 2, 1, 3), tol)

    @classmethod
    def random(cls, x_dim: int, a_dim: int, h_dim: int, k_dim: int, rng: Rng) -> "BlockIsometry":
        return cls.from_matrix(random_isometry(a_dim * k_dim, x_dim * h_dim, rng), x_dim, a_dim)


@dataclass(frozen=True)
class StochasticOperatorMatrix:
    """E on C^X⊗C^A⊗H, rows (x, a, h); block ((x,a),(x',a')) is E_{x,x',a,a'}."""

    E: np.ndarray
    x_dim: int
    a_dim: int
    env_dim: int
    cp_tol: float = CP_TOL
    tp_tol: float = TP_TOL

    def __post_init__(self):
        e = np.asarray(self.E, dtype=complex)
        n = self.x_dim * self.a_dim * self.env_dim
        if e.shape != (n, n):
            raise DimensionError(f"E has shape {e.shape}, expected {(n, n)}")
        e = (e + e.conj().T) / 2
        object.__setattr__(self, "E", e)
        if np.linalg.eigvalsh(e)[0] < -self.cp_tol:
            raise ValidationError("stochastic operator matrix is not positive")
        if self.tp_error() > self.tp_tol:
            raise ValidationError("Tr_A E differs from the identity")

    def tp_error(self) -> float:
        t = partial_trace(self.E, [self.x_dim, self.a_dim, self.env_dim], [1])
        return float(np.linalg.norm(t - np.eye(self.x_dim * self.env_dim)))

    def tensor(self) -> np.ndarray:
        """E as [x, a, h, x', a', h']."""
        x, a, h = self.x_dim, self.a_dim, self.env_dim
        return self.E.reshape(x, a, h, x, a, h)

    def block(self, x: int, xp: int, a: int, ap: int) -> np.ndarray:
        return self.tensor()[x, a, :, xp, ap, :]


def _check_state(sigma, dim: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=complex)
    if s.shape != (dim, dim):
        raise DimensionError(f"state has shape {s.shape}, expected {(dim, dim)}")
    return s


def gamma_from_isometry(u: BlockIsometry, sigma=None) -> ChoiMatrix:
    """Choi matrix of e_xx' -> sum_aa' Tr(sigma U_{a,x}* U_{a',x'}) e_aa'."""
    h = u.env_in_dim
    sigma = np.eye(1) if sigma is None and h == 1 else sigma
    s = _check_state(sigma, h)
    b = u.blocks
    # J[a, x, a', x'] = Tr(s U_{a,x}^* U_{a',x'}) = sum conj(U[a,x,k,h]) U[a',x',k,h'] s[h',h]
    j = np.einsum("axkh,bykg,gh->axby", b.conj(), b, s, optimize=True)
    a_dim, x_dim = b.shape[0], b.shape[1]
    return ChoiMatrix(j.reshape(a_dim * x_dim, a_dim * x_dim), x_dim, a_dim)


def gamma_sharp(c: ChoiMatrix) -> ChoiMatrix:
    """Choi matrix of rho -> Phi(rho^t)^t, which is the transpose of J."""
    return ChoiMatrix(c.J.T.copy(), c.in_dim, c.out_dim)


def isometry_from_channel(c: ChoiMatrix) -> BlockIsometry:
    """Block isometry with trivial H reproducing ``c`` through gamma_from_isometry.

    Blocks are the conjugated Kraus entries, U_{a,x} = (conj K_s[a, x])_s.
    """
    if not c.is_channel():
        raise ValidationError("input is not a channel")
    ops = c.kraus()
    blocks = np.array([np.conj(k) for k in ops])  # (s, a, x)
    blocks = blocks.transpose(1, 2, 0)[:, :, :, None]  # (a, x, s, 1)
    return BlockIsometry(blocks, tol=10 * TP_TOL)


def kraus_stacking(c: ChoiMatrix) -> BlockIsometry:
    """Block isometry with unconjugated Kraus entries; it realizes gamma_sharp(c)."""
    ops = c.kraus()
    blocks = np.array(ops).transpose(1, 2, 0)[:, :, :, None]
    return BlockIsometry(blocks, tol=10 * TP_TOL)


def stochastic_from_isometry(u: BlockIsometry) -> StochasticOperatorMatrix:
    b = u.blocks
    a_dim, x_dim, _, h = b.shape
    # E[x, a, h, x', a', h'] = (U_{a,x}^* U_{a',x'})[h, h']
    e = np.einsum("axkh,bykg->xahybg", b.conj(), b, optimize=True)
    n = x_dim * a_dim * h
    return StochasticOperatorMatrix(e.reshape(n, n), x_dim, a_dim, h)


def tensor_channels(c1: ChoiMatrix, c2: ChoiMatrix) -> ChoiMatrix:
    """Choi matrix of Phi1 ⊗ Phi2 with ordering (A1 A2) ⊗ (X1 X2)."""
    a1, x1, a2, x2 = c1.out_dim, c1.in_dim, c2.out_dim, c2.in_dim
    t = np.multiply.outer(c1.tensor(), c2.tensor())  # a1 x1 a1' x1' a2 x2 a2' x2'
    t = t.transpose(0, 4, 1, 5, 2, 6, 3, 7)
    n = a1 * a2 * x1 * x2
    return ChoiMatrix(t.reshape(n, n), x1 * x2, a1 * a2)


def apply_choi(c: ChoiMatrix, rho) -> np.ndarray:
    """Phi(rho) = Tr_in(J (I_out ⊗ rho^t)); rho need not be Hermitian."""
    r = np.asarray(rho, dtype=complex)
    if r.shape != (c.in_dim, c.in_dim):
        raise DimensionError(f"input has shape {r.shape}, channel input dim is {c.in_dim}")
    return np.einsum("axby,xy->ab", c.tensor(), r)


def random_channel(in_dim: int, out_dim: int, rng: Rng, kraus_rank: int | None = None) -> ChoiMatrix:
    s = kraus_rank or in_dim * out_dim
    v = random_isometry(out_dim * s, in_dim, rng).reshape(out_dim, s, in_dim)
    return ChoiMatrix.from_kraus([v[:, i, :] for i in range(s)])


def normalize_stochastic(e: np.ndarray, x_dim: int, a_dim: int, env_dim: int) -> np.ndarray:
    """Congruence by (Tr_A E)^{-1/2} on the X⊗H factors, making Tr_A E = I exact."""
    from .linalg import inv_sqrt_psd

    t = partial_trace(e, [x_dim, a_dim, env_dim], [1])
    m = inv_sqrt_psd(t).reshape(x_dim, env_dim, x_dim, env_dim)
    full = np.einsum("pqrs,ab->paqrbs", m, np.eye(a_dim)).reshape(e.shape)
    out = full @ e @ full
    return (out + out.conj().T) / 2
