"""Game data: projection games, finitely supported hypergraph games, classical
and classical-to-quantum games, reductions between them and generators.

Flattening order (shared by every module and the file format):

* inputs  ``xi[((x * Y) + y) * R + r]``
* outputs ``gamma[((a * B) + b) * R + r]``
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .channels import ValidationError
from .linalg import DimensionError, herm_eig

NORM_TOL = 1e-10
ORTHO_TOL = 1e-8
PROJ_TOL = 1e-8
DENSE_CUTOFF = 1e-10


@dataclass(frozen=True)
class RegisterDims:
    x: int
    y: int
    a: int
    b: int
    r: int = 1

    def __post_init__(self):
        for name in ("x", "y", "a", "b", "r"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"register dimension {name}={v} must be a positive integer")
            object.__setattr__(self, name, int(v))

    @property
    def inputs(self) -> int:
        return self.x * self.y

    @property
    def outputs(self) -> int:
        return self.a * self.b


def _unit(v, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    if v.shape != (n,):
        raise DimensionError(f"{what} has length {v.size}, expected {n}")
    if abs(np.linalg.norm(v) - 1) > NORM_TOL:
        raise ValidationError(f"{what} is not a unit vector (norm {np.linalg.norm(v):.12g})")
    return v


def _check_projection(q, n: int, what: str) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    if q.shape != (n, n):
        raise DimensionError(f"{what} has shape {q.shape}, expected {(n, n)}")
    if np.abs(q - q.conj().T).max(initial=0) > PROJ_TOL or np.abs(q @ q - q).max(initial=0) > PROJ_TOL:
        raise ValidationError(f"{what} is not an orthogonal projection")
    return (q + q.conj().T) / 2


@dataclass(frozen=True)
class ProjectionGame:
    """Input state ``xi`` and P = sum_k lambda_k gamma_k gamma_k^*.

    With ``orthonormal=False`` the gamma_k may overlap (P is then any positive
    combination of rank-one terms).
    """

    dims: RegisterDims
    xi: np.ndarray
    p_terms: tuple
    orthonormal: bool = True

    def __post_init__(self):
        d = self.dims
        object.__setattr__(self, "xi", _unit(self.xi, d.inputs * d.r, "xi"))
        terms = []
        for lam, g in self.p_terms:
            lam = float(lam)
            if lam < -1e-12 or lam > 1 + 1e-12:
                raise ValidationError(f"weight {lam} outside [0, 1]")
            terms.append((min(max(lam, 0.0), 1.0), _unit(g, d.outputs * d.r, "gamma")))
        object.__setattr__(self, "p_terms", tuple(terms))
        if self.orthonormal and terms:
            gm = np.array([g for _, g in terms])
            err = np.abs(gm.conj() @ gm.T - np.eye(len(terms))).max()
            if err > ORTHO_TOL:
                raise ValidationError(f"gamma vectors are not orthonormal (error {err:.3g})")

    @classmethod
    def from_dense(cls, dims: RegisterDims, xi, p) -> "ProjectionGame":
        """Eigendecompose a positive contraction P, dropping eigenvalues < 1e-10."""
        n = dims.outputs * dims.r
        p = np.asarray(p, dtype=complex)
        if p.shape != (n, n):
            raise DimensionError(f"P has shape {p.shape}, expected {(n, n)}")
        if np.abs(p - p.conj().T).max(initial=0) > 1e-9:
            raise ValidationError("P is not Hermitian")
        e = herm_eig(p)
        if e.eigenvalues[0] < -1e-9 or e.eigenvalues[-1] > 1 + 1e-9:
            raise ValidationError("P is not a positive contraction")
        terms = [(float(lam), e.eigenvectors[:, i]) for i, lam in enumerate(e.eigenvalues) if lam >= DENSE_CUTOFF]
        return cls(dims, xi, tuple(terms[::-1]))

    def p_matrix(self) -> np.ndarray:
        n = self.dims.outputs * self.dims.r
        p = np.zeros((n, n), dtype=complex)
        for lam, g in self.p_terms:
            p += lam * np.outer(g, g.conj())
        return p

    def xi_matrix(self) -> np.ndarray:
        """xi reshaped to (|X||Y|, |R|)."""
        return self.xi.reshape(self.dims.inputs, self.dims.r)


@dataclass(frozen=True)
class HypergraphGame:
    """Finitely supported probabilistic hypergraph game: atoms (mu_i, xi_i, Q_i)."""

    dims: RegisterDims
    atoms: tuple

    def __post_init__(self):
        d = self.dims
        atoms = []
        for mu, v, q in self.atoms:
            mu = float(mu)
            if mu <= 0:
                raise ValidationError("atom weights must be positive")
            atoms.append((mu, _unit(v, d.inputs, "atom state"), _check_projection(q, d.outputs, "atom projection")))
        if not atoms:
            raise ValidationError("a hypergraph game needs at least one atom")
        if abs(sum(a[0] for a in atoms) - 1) > 1e-10:
            raise ValidationError("atom weights must sum to 1")
        object.__setattr__(self, "atoms", tuple(atoms))


@dataclass(frozen=True)
class ClassicalGame:
    dims: RegisterDims
    rule: np.ndarray  # bool [x, y, a, b]
    pi: np.ndarray  # [x, y]

    def __post_init__(self):
        d = self.dims
        rule = np.asarray(self.rule).astype(bool)
        pi = np.asarray(self.pi, dtype=float)
        if rule.shape != (d.x, d.y, d.a, d.b):
            raise DimensionError(f"rule table has shape {rule.shape}")
        if pi.shape != (d.x, d.y):
            raise DimensionError(f"distribution has shape {pi.shape}")
        if (pi < 0).any() or abs(pi.sum() - 1) > 1e-12:
            raise ValidationError("pi must be a probability distribution")
        object.__setattr__(self, "rule", rule)
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class GameTensor:
    rho_list: tuple  # each (|X||Y|) x (|A||B|)


def game_tensor(g: ProjectionGame) -> GameTensor:
    xi = g.xi_matrix()
    d = g.dims
    rhos = []
    for lam, gam in g.p_terms:
        gm = gam.reshape(d.outputs, d.r)
        # rho[s, o] = sqrt(lam) * sum_r conj(xi[s, r]) * gamma[o, r]
        rhos.append(np.sqrt(lam) * (xi.conj() @ gm.T))
    return GameTensor(tuple(rhos))


def objective_matrix(g) -> np.ndarray:
    """Hermitian W with value(Gamma) = Re Tr(W J) for the Choi matrix J of Gamma.

    J is ordered (a, b, x, y) x (a', b', x', y').
    """
    if isinstance(g, HypergraphGame):
        return sum(mu * np.kron(q, np.outer(v, v.conj()).conj()) for mu, v, q in g.atoms)
    if isinstance(g, ClassicalGame):
        g = hypergraph_to_projection(classical_to_hypergraph(g))
    t = game_tensor(g)
    n = g.dims.inputs * g.dims.outputs
    w = np.zeros((n, n), dtype=complex)
    for rho in t.rho_list:
        v = rho.T.ravel()
        w += np.outer(v, v.conj())
    return w


def as_projection(g) -> ProjectionGame:
    if isinstance(g, ProjectionGame):
        return g
    if isinstance(g, HypergraphGame):
        return hypergraph_to_projection(g)
    if isinstance(g, ClassicalGame):
        return hypergraph_to_projection(classical_to_hypergraph(g))
    raise TypeError(f"not a game: {type(g).__name__}")


# ---------------------------------------------------------------------------
# reductions


def classical_to_hypergraph(g: ClassicalGame) -> HypergraphGame:
    d = g.dims
    atoms = []
    for x, y in product(range(d.x), range(d.y)):
        if g.pi[x, y] <= 0:
            continue
        v = np.zeros(d.x * d.y)
        v[x * d.y + y] = 1
        q = np.diag(g.rule[x, y].reshape(-1).astype(float))
        atoms.append((g.pi[x, y], v, q))
    return HypergraphGame(RegisterDims(d.x, d.y, d.a, d.b), tuple(atoms))


def _rank_one_terms(q: np.ndarray):
    e = herm_eig(q)
    return [e.eigenvectors[:, i] for i in range(len(e.eigenvalues)) if e.eigenvalues[i] > 0.5][::-1]


def hypergraph_to_projection(h: HypergraphGame) -> ProjectionGame:
    d = h.dims
    r = len(h.atoms)
    xi = np.zeros(d.inputs * r, dtype=complex)
    terms = []
    for i, (mu, v, q) in enumerate(h.atoms):
        e = np.zeros(r)
        e[i] = 1
        xi += np.sqrt(mu) * np.kron(v, e)
        terms.extend((1.0, np.kron(eta, e)) for eta in _rank_one_terms(q))
    xi /= np.linalg.norm(xi)
    return ProjectionGame(RegisterDims(d.x, d.y, d.a, d.b, r), xi, tuple(terms))


def cq_to_projection(varphi, pi) -> ProjectionGame:
    """Classical inputs, quantum answer sets: varphi[x][y] is a projection on C^A⊗C^B.

    Output dimensions are taken as square factors unless ``varphi`` carries
    them through :func:`cq_to_projection_dims`.
    """
    varphi = np.asarray(varphi, dtype=complex)
    n = varphi.shape[-1]
    a = int(round(np.sqrt(n)))
    if a * a != n:
        raise DimensionError("cannot infer |A|,|B| from the projection size; use cq_to_projection_dims")
    return cq_to_projection_dims(varphi, pi, a, a)


def cq_to_projection_dims(varphi, pi, a_dim: int, b_dim: int) -> ProjectionGame:
    varphi = np.asarray(varphi, dtype=complex)
    pi = np.asarray(pi, dtype=float)
    x_dim, y_dim = pi.shape
    if (pi < 0).any() or abs(pi.sum() - 1) > 1e-12:
        raise ValidationError("pi must be a probability distribution")
    n = a_dim * b_dim
    if varphi.shape != (x_dim, y_dim, n, n):
        raise DimensionError(f"projection table has shape {varphi.shape}")
    r = x_dim * y_dim
    dims = RegisterDims(x_dim, y_dim, a_dim, b_dim, r)
    xi = np.zeros(x_dim * y_dim * r, dtype=complex)
    terms = []
    for x, y in product(range(x_dim), range(y_dim)):
        s = x * y_dim + y
        xi[s * r + s] = np.sqrt(pi[x, y])
        e = np.zeros(r)
        e[s] = 1
        q = _check_projection(varphi[x, y], n, f"projection ({x},{y})")
        terms.extend((1.0, np.kron(eta, e)) for eta in _rank_one_terms(q))
    return ProjectionGame(dims, xi, tuple(terms))


def classical_rule_projections(g: ClassicalGame) -> np.ndarray:
    d = g.dims
    out = np.zeros((d.x, d.y, d.a * d.b, d.a * d.b))
    for x, y in product(range(d.x), range(d.y)):
        out[x, y] = np.diag(g.rule[x, y].reshape(-1).astype(float))
    return out


# ---------------------------------------------------------------------------
# generators


def gen_chsh() -> ClassicalGame:
    rule = np.zeros((2, 2, 2, 2), dtype=bool)
    for x, y, a, b in product(range(2), repeat=4):
        rule[x, y, a, b] = (a ^ b) == (x & y)
    return ClassicalGame(RegisterDims(2, 2, 2, 2), rule, np.full((2, 2), 0.25))


def gen_diag_family(n: int, gammas) -> ProjectionGame:
    """X = B = R = [n], Y = A = {1}; answers are diagonal in (b, r)."""
    gammas = [np.asarray(g, dtype=complex).ravel() for g in gammas]
    if not gammas or any(g.shape != (n,) for g in gammas):
        raise DimensionError(f"need at least one gamma vector of length {n}")
    gm = np.array(gammas)
    if np.abs(gm.conj() @ gm.T - np.eye(len(gammas))).max() > ORTHO_TOL:
        raise ValidationError("gamma vectors must be orthonormal")
    dims = RegisterDims(n, 1, 1, n, n)
    xi = np.zeros(n * n, dtype=complex)
    xi[[i * n + i for i in range(n)]] = 1 / np.sqrt(n)
    terms = []
    for g in gammas:
        v = np.zeros(n * n, dtype=complex)
        v[[i * n + i for i in range(n)]] = g
        terms.append((1.0, v))
    return ProjectionGame(dims, xi, tuple(terms))


def closed_form_diag_value(gammas) -> float:
    gm = np.array([np.asarray(g, dtype=complex).ravel() for g in gammas])
    n = gm.shape[1]
    # sum_k D_k^* D_k is diagonal with entries sum_k |gamma_k,i|^2
    return float((np.abs(gm) ** 2).sum(axis=0).max() / n)


def gen_implication(p, q) -> HypergraphGame:
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    x = int(round(np.sqrt(p.shape[0])))
    a = int(round(np.sqrt(q.shape[0])))
    if x * x != p.shape[0] or a * a != q.shape[0]:
        raise DimensionError("P must act on C^X⊗C^X and Q on C^A⊗C^A")
    p = _check_projection(p, x * x, "P")
    q = _check_projection(q, a * a, "Q")
    basis = _rank_one_terms(p)
    if not basis:
        raise ValidationError("P has rank 0")
    k = len(basis)
    return HypergraphGame(RegisterDims(x, x, a, a), tuple((1 / k, v, q) for v in basis))


def gen_xor_embedding(xi, pi0, pi1) -> ProjectionGame:
    """XOR game with quantum referee: xi on H_X⊗H_Y⊗H_R (array of shape (dx, dy, dr)).

    Returns the conjugated game (conj xi, conj P) with A = B = {0, 1}.
    """
    xi = np.asarray(xi, dtype=complex)
    if xi.ndim != 3:
        raise DimensionError("xi must be given with shape (dx, dy, dr)")
    dx, dy, dr = xi.shape
    pis = [_check_projection(pi0, dr, "Pi0"), _check_projection(pi1, dr, "Pi1")]
    dims = RegisterDims(dx, dy, 2, 2, dr)
    terms = []
    for a, b in product(range(2), repeat=2):
        e = np.zeros(4)
        e[a * 2 + b] = 1
        terms.extend((1.0, np.kron(e, eta)) for eta in _rank_one_terms(pis[a ^ b].conj()))
    return ProjectionGame(dims, xi.conj().ravel(), tuple(terms))


# ---------------------------------------------------------------------------
# tensors on S_1^X(M_A) ⊗ S_1^Y(M_B)


def _shuffle(t: np.ndarray, d: RegisterDims) -> np.ndarray:
    """[x, y, x', y', a, b, a', b'] -> matrix rows (x, a, y, b), cols (x', a', y', b')."""
    n = d.x * d.y * d.a * d.b
    return t.transpose(0, 4, 1, 5, 2, 6, 3, 7).reshape(n, n)


def build_G_hat(g: ProjectionGame) -> np.ndarray:
    """conj of (id ⊗ trace pairing on R)(xi xi^* ⊗ P), rows (x, a, y, b)."""
    d = g.dims
    xi = g.xi.reshape(d.x, d.y, d.r)
    p = g.p_matrix().reshape(d.a, d.b, d.r, d.a, d.b, d.r)
    # pairing Tr(e_rr' e_ss') = delta_{r's} delta_{s'r}
    t = np.einsum("xyr,XYs,absABr->xyXYabAB", xi, xi.conj(), p, optimize=True)
    return _shuffle(t, d).conj()


def build_H_hat(h: HypergraphGame) -> np.ndarray:
    d = h.dims
    t = 0
    for mu, v, q in h.atoms:
        rho = np.outer(v, v.conj()).reshape(d.x, d.y, d.x, d.y)
        t = t + mu * np.multiply.outer(rho, q.reshape(d.a, d.b, d.a, d.b))
    return _shuffle(t, d).conj()


def gen_conversion(xi, gamma, x_dim: int, y_dim: int) -> ProjectionGame:
    """Game rewarding the map of the input state xi onto the target gamma (both on C^X⊗C^Y)."""
    dims = RegisterDims(x_dim, y_dim, x_dim, y_dim, 1)
    return ProjectionGame(dims, xi, ((1.0, gamma),))
