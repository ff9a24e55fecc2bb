"""Dense complex linear algebra helpers.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Everything here
is a pure function; the only stateful object is :class:`Rng`.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

EIG_CLUSTER_TOL = 1e-10
PHASE_TOL = 1e-8


class DimensionError(ValueError):
    """Raised when matrix shapes do not fit the requested operation."""


class HermitianEigen(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # column j <-> eigenvalues[j]


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {a.shape}")
    return a


def _square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace(m, dims: Sequence[int], traced) -> np.ndarray:
    """Trace out the factors listed in ``traced``; kept factors stay in order."""
    a = _square(m)
    dims = [int(d) for d in dims]
    n = int(np.prod(dims)) if dims else 1
    if a.shape[0] != n:
        raise DimensionError(f"side {a.shape[0]} does not match dims {dims}")
    traced = sorted(set(int(t) for t in traced))
    if any(t < 0 or t >= len(dims) for t in traced):
        raise DimensionError(f"traced factors {traced} out of range for {len(dims)} factors")
    k = len(dims)
    t = a.reshape(dims + dims)
    # trace from the highest axis down so remaining axis numbers stay valid
    for i, f in enumerate(sorted(traced, reverse=True)):
        kk = k - i
        t = np.trace(t, axis1=f, axis2=f + kk)
    kept = [dims[i] for i in range(k) if i not in traced]
    side = int(np.prod(kept)) if kept else 1
    return t.reshape(side, side)


def hermitize(m) -> np.ndarray:
    a = _square(m)
    return (a + a.conj().T) / 2


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > PHASE_TOL)
        if idx.size:
            z = col[idx[0]]
            out[:, j] = col * (abs(z) / z)
    return out


def _order_clusters(vals: np.ndarray, vecs: np.ndarray, scale: float):
    n = len(vals)
    order = list(range(n))
    i = 0
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[i] <= EIG_CLUSTER_TOL * scale:
            j += 1
        if j - i > 1:
            block = order[i:j]
            keys = {c: tuple(np.column_stack([vecs[:, c].real, vecs[:, c].imag]).ravel().round(12))
                    for c in block}
            order[i:j] = sorted(block, key=lambda c: keys[c], reverse=True)
        i = j
    return vals[order], vecs[:, order]


def jacobi_eigh(h, max_sweeps: int = 100) -> HermitianEigen:
    """Cyclic complex Jacobi eigensolver.

    Slow (one Python-level rotation per pair) but independent of LAPACK;
    used as a cross-check and selectable through ``herm_eig(method="jacobi")``.
    """
    a = hermitize(h).copy()
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    stop = 1e-13 * (1.0 + np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                ph = apq / mag
                theta = 0.5 * np.arctan2(2 * mag, (a[q, q] - a[p, p]).real)
                c, s = np.cos(theta), np.sin(theta)
                g = np.array([[c, s], [-s * np.conj(ph), c * np.conj(ph)]])
                cols = a[:, [p, q]] @ g
                a[:, p], a[:, q] = cols[:, 0], cols[:, 1]
                rows = g.conj().T @ a[[p, q], :]
                a[p, :], a[q, :] = rows[0], rows[1]
                a[q, p] = np.conj(a[p, q])
                vc = v[:, [p, q]] @ g
                v[:, p], v[:, q] = vc[:, 0], vc[:, 1]
    vals = np.diag(a).real.copy()
    order = np.argsort(vals, kind="stable")
    return _finish(vals[order], v[:, order], np.linalg.norm(h))


def _finish(vals, vecs, scale) -> HermitianEigen:
    vecs = _fix_phases(vecs)
    vals, vecs = _order_clusters(vals, vecs, 1.0 + scale)
    return HermitianEigen(vals, vecs)


def herm_eig(h, method: str = "lapack") -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Each eigenvector is rotated so its first entry of modulus > 1e-8 is real
    and positive.  ``method`` is ``"lapack"`` (default) or ``"jacobi"``.
    """
    a = hermitize(h)
    if method == "jacobi":
        return jacobi_eigh(a)
    if method != "lapack":
        raise ValueError(f"unknown eigensolver {method!r}")
    vals, vecs = np.linalg.eigh(a)
    return _finish(vals, vecs, np.linalg.norm(a))


def psd_project(h) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix."""
    a = hermitize(h)
    vals, vecs = np.linalg.eigh(a)
    keep = vals > 0
    if keep.all():
        return a
    vk = vecs[:, keep]
    out = (vk * vals[keep]) @ vk.conj().T
    return (out + out.conj().T) / 2


def op_norm(a) -> float:
    m = as_matrix(a)
    if m.size == 0:
        return 0.0
    lam = np.linalg.eigvalsh(m.conj().T @ m)[-1]
    return float(np.sqrt(max(lam, 0.0)))


def top_eigvec(h) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and its eigenvector (lowest index within ties)."""
    e = herm_eig(h)
    lam = e.eigenvalues[-1]
    n = len(e.eigenvalues)
    j = n - 1
    while j > 0 and lam - e.eigenvalues[j - 1] <= EIG_CLUSTER_TOL * (1 + abs(lam)):
        j -= 1
    return float(lam), e.eigenvectors[:, j]


def inv_sqrt_psd(t, cutoff: float = 1e-12) -> np.ndarray:
    """T^{-1/2} on the support of a PSD matrix (pseudo-inverse elsewhere)."""
    vals, vecs = np.linalg.eigh(hermitize(t))
    inv = np.where(vals > cutoff * max(1.0, vals[-1]), 1.0 / np.sqrt(np.clip(vals, cutoff, None)), 0.0)
    return (vecs * inv) @ vecs.conj().T


# ---------------------------------------------------------------------------
# random sampling

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Counter-based random stream (Philox-4x64 from numpy).

    The Philox key is ``seed`` in the low 64 bits and a stream id in the high
    64 bits.  The stream id of ``Rng(seed).child(i).child(j)`` is obtained by
    folding the path ``(i, j)`` through splitmix64, so every stream is a pure
    function of the seed and its path.
    """

    def __init__(self, seed: int = 0, path: tuple = ()):
        self.seed = int(seed) & _MASK64
        self.path = tuple(int(p) for p in path)
        sid = 0
        for p in self.path:
            sid = _splitmix64(sid ^ _splitmix64(p & _MASK64))
        self.stream_id = sid
        self._gen = np.random.Generator(np.random.Philox(key=self.seed | (sid << 64)))

    def child(self, i: int) -> "Rng":
        return Rng(self.seed, self.path + (i,))

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def complex_normal(self, size) -> np.ndarray:
        return (self._gen.standard_normal(size) + 1j * self._gen.standard_normal(size)) / np.sqrt(2)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)


def random_isometry(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """Isometry from QR of a complex Gaussian matrix (Haar when square)."""
    if rows < cols:
        raise DimensionError(f"isometry needs rows >= cols, got {rows} < {cols}")
    g = rng.complex_normal((rows, cols))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    ph = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * ph


def random_state(dim: int, rng: Rng) -> np.ndarray:
    v = rng.complex_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(n: int, rng: Rng) -> np.ndarray:
    g = rng.complex_normal((n, n))
    return (g + g.conj().T) / 2
