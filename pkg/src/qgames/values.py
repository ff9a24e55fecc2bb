"""Game values for the resource classes loc, q, qc, ns and lowc.

Every solver shares one objective: a strategy with Choi matrix ``J`` (rows
ordered ``(a, b, x, y)``) wins with probability ``Re Tr(W J)``, where ``W``
comes from :func:`qgames.games.objective_matrix`.

* ns is an exact SDP over no-signalling Choi matrices.
* loc, q and lowc are lower bounds from multi-start see-saw iterations.
* qc is an upper bound from a moment relaxation; a second upper bound, on
  loc only, comes from adding a partial-transpose constraint to the ns SDP.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np

from . import sdp
from .channels import BlockIsometry, ChoiMatrix, random_channel, stochastic_from_isometry
from .games import ClassicalGame, RegisterDims, as_projection, game_tensor, objective_matrix
from .linalg import DimensionError, Rng, random_state, top_eigvec

CHAIN_TOL = 1e-5
CLASSICAL_CAP = 10**7
# the moment relaxation uses a dense constraint Gram matrix; beyond this side it is impractical
QC_MAX_SIDE = 80


class BoundKind(str, Enum):
    EXACT = "Exact"
    LOWER = "Lower"
    UPPER = "Upper"


class SizeError(ValueError):
    """The requested computation exceeds its size cap."""


class InternalConsistencyError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SeesawOptions:
    restarts: int = 16
    outer_iters: int = 200
    tol: float = 1e-7
    floor: float = 1e-9
    seed: int = 0
    workers: int = 1
    # ADMM cap per see-saw step; steps only need to improve, not to be optimal
    inner_iters: int = 2000

    def __post_init__(self):
        if min(self.restarts, self.outer_iters, self.workers, self.inner_iters) < 1:
            raise ValueError("restarts, outer_iters, workers and inner_iters must be positive")
        if self.tol <= 0 or self.floor <= 0:
            raise ValueError("tolerances must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    bound_kind: BoundKind
    solver: str
    iterations: int
    restarts: int
    residual: float
    seed: int
    strategy: object = field(default=None, compare=False, repr=False)
    history: tuple = field(default=(), compare=False, repr=False)


# ---------------------------------------------------------------------------
# shared objective


@dataclass(frozen=True)
class _Objective:
    dims: RegisterDims
    w: np.ndarray

    @property
    def shape(self) -> tuple:
        d = self.dims
        return d.a, d.b, d.x, d.y

    @property
    def side(self) -> int:
        return int(np.prod(self.shape))

    @property
    def tensor(self) -> np.ndarray:
        return self.w.reshape(self.shape * 2)


def _objective(g) -> _Objective:
    w = objective_matrix(g)
    w = (w + w.conj().T) / 2
    return _Objective(g.dims, w)


def _choi_value(obj: _Objective, j: np.ndarray) -> float:
    return float(np.vdot(obj.w, j).real)


# ---------------------------------------------------------------------------
# strategy evaluation


def evaluate_strategy(g, c: ChoiMatrix) -> float:
    """Winning probability of the channel ``c`` (input XY, output AB), R carried along."""
    g = as_projection(g)
    d = g.dims
    if c.in_dim != d.inputs or c.out_dim != d.outputs:
        raise DimensionError(f"channel {c.in_dim}->{c.out_dim} does not fit game {d.inputs}->{d.outputs}")
    xi = g.xi_matrix()
    out = np.einsum("osOS,sr,SR->orOR", c.tensor(), xi, xi.conj(), optimize=True)
    n = d.outputs * d.r
    return float(np.einsum("ij,ji->", out.reshape(n, n), g.p_matrix()).real)


def evaluate_isometry_strategy(g, u: BlockIsometry, sigma=None) -> float:
    """sum_k Tr(sigma Phi_k^* Phi_k) with Phi_k = sum_{s,o} rho_k[s, o] U_{o,s}."""
    g = as_projection(g)
    d = g.dims
    if u.out_label_dim != d.outputs or u.in_label_dim != d.inputs:
        raise DimensionError("isometry label dimensions do not match the game")
    h = u.env_in_dim
    s = np.eye(1) if sigma is None and h == 1 else np.asarray(sigma, dtype=complex)
    if s.shape != (h, h):
        raise DimensionError(f"state has shape {s.shape}, expected {(h, h)}")
    total = 0.0
    for rho in game_tensor(g).rho_list:
        phi = np.einsum("so,oskh->kh", rho, u.blocks)
        total += float(np.trace(s @ phi.conj().T @ phi).real)
    return total


# ---------------------------------------------------------------------------
# no-signalling sets


def _avg(t: np.ndarray, f: int) -> np.ndarray:
    """Replace tensor factor f (of four) by I/d times the partial trace over it."""
    d = t.shape[f]
    tr = np.trace(t, axis1=f, axis2=f + 4) / d
    tr = np.expand_dims(np.expand_dims(tr, f), f + 4)
    shape = [1] * 8
    shape[f] = shape[f + 4] = d
    return tr * np.eye(d).reshape(shape)


def _partial_transpose_b(j: np.ndarray, shape) -> np.ndarray:
    """Transpose the B and Y factors of an (a, b, x, y) ordered matrix."""
    n = int(np.prod(shape))
    t = j.reshape(tuple(shape) * 2)
    return t.transpose(0, 5, 2, 7, 4, 1, 6, 3).reshape(n, n)


class NoSignallingSet(sdp.AffineSet):
    """Hermitian J on A⊗B⊗X⊗Y with Tr_AB J = I, Tr_A J = I_X ⊗ (.), Tr_B J = I_Y ⊗ (.).

    The linear part is the range of a product of commuting averaging maps, so
    the projection is closed form (inclusion-exclusion over the factors).
    """

    def __init__(self, a: int, b: int, x: int, y: int):
        self.shape = (a, b, x, y)
        self.side = a * b * x * y
        self.block_sizes = (self.side,)

    def project_one(self, j: np.ndarray) -> np.ndarray:
        t = j.reshape(self.shape * 2)
        pa = _avg(t, 0)
        pb = _avg(t, 1)
        pab = _avg(pa, 1)
        pabx = _avg(pab, 2)
        out = t - pa + _avg(pa, 2) - pb + _avg(pb, 3) + pab - pabx - _avg(pab, 3) + _avg(pabx, 3)
        out = out.reshape(self.side, self.side)
        a, b, x, y = self.shape
        out = out + ((x * y - np.trace(out).real) / self.side) * np.eye(self.side)
        return (out + out.conj().T) / 2

    def project(self, blocks):
        (j,) = blocks
        return [self.project_one(j)]

    def violation(self, blocks) -> float:
        (j,) = blocks
        return float(np.linalg.norm(j - self.project_one(j)))


class PptNoSignallingSet(sdp.AffineSet):
    """Pairs (J, K) with J no-signalling and K its partial transpose on B⊗Y."""

    def __init__(self, a: int, b: int, x: int, y: int):
        self.ns = NoSignallingSet(a, b, x, y)
        self.block_sizes = (self.ns.side, self.ns.side)

    def project(self, blocks):
        j0, k0 = blocks
        # the partial transpose is a Hilbert-Schmidt isometry
        j = self.ns.project_one((j0 + _partial_transpose_b(k0, self.ns.shape)) / 2)
        return [j, _partial_transpose_b(j, self.ns.shape)]


def _repair_feasible(x: np.ndarray, out_dim: int) -> np.ndarray:
    """Mix an affine-feasible iterate with I/out_dim (strictly feasible) until PSD."""
    lam = float(np.linalg.eigvalsh(x)[0])
    if lam >= 0:
        return x
    t = -lam / (1.0 / out_dim - lam)
    n = x.shape[0]
    return (1 - t) * x + t * np.eye(n) / out_dim


def _clip(v: float) -> float:
    return float(min(max(v, 0.0), 1.0))


def value_ns(g, tol: float = sdp.DEFAULT_TOL, max_iter: int = sdp.DEFAULT_MAX_ITER) -> ValueEstimate:
    obj = _objective(g)
    a, b, x, y = obj.shape
    affine = NoSignallingSet(a, b, x, y)
    st = sdp.admm([obj.w], affine, tol=tol, max_iter=max_iter, start=[np.eye(obj.side) / (a * b)])
    j = _repair_feasible(affine.project_one(st.X[0]), a * b)
    return ValueEstimate(
        value=_clip(_choi_value(obj, j)),
        bound_kind=BoundKind.EXACT,
        solver="ns-sdp",
        iterations=st.iterations,
        restarts=0,
        residual=float(st.primal_residual),
        seed=0,
        strategy=ChoiMatrix(j, x * y, a * b),
    )


def value_ppt_upper(g, tol: float = sdp.DEFAULT_TOL, max_iter: int = sdp.DEFAULT_MAX_ITER,
                    stop_below: float | None = None) -> ValueEstimate:
    """Certified upper bound on the loc value: ns plus positivity of the partial transpose across AX|BY.

    Choi matrices of local strategies are no-signalling and separable across
    that cut.  The reported value is a dual bound, so it is valid at any
    iteration; with ``stop_below`` the run ends as soon as the bound drops
    below it.
    """
    obj = _objective(g)
    a, b, x, y = obj.shape
    affine = PptNoSignallingSet(a, b, x, y)
    c = [obj.w, np.zeros_like(obj.w)]
    start = np.eye(obj.side) / (a * b)
    early = None
    if stop_below is not None:
        def early(st):
            bound = sdp.dual_bound(c, affine, st.U, st.rho)
            return bound is not None and bound <= stop_below
    st = sdp.admm(c, affine, tol=tol, max_iter=max_iter, start=[start, start], early_stop=early)
    bound = sdp.dual_bound(c, affine, st.U, st.rho)
    value = _choi_value(obj, st.X[0]) if bound is None else bound
    return ValueEstimate(
        value=_clip(value),
        bound_kind=BoundKind.UPPER,
        solver="ppt-sdp",
        iterations=st.iterations,
        restarts=0,
        residual=float(st.primal_residual),
        seed=0,
    )


# ---------------------------------------------------------------------------
# strategies


@dataclass(frozen=True)
class LocalStrategy:
    """Alice instrument {J_i} (A x X) and Bob channels {K_i} (B x Y), as 5-index arrays [i, o, s, o', s']."""

    instrument: np.ndarray
    corrections: np.ndarray

    @property
    def branches(self) -> int:
        return self.instrument.shape[0]

    def choi(self) -> ChoiMatrix:
        js, ks = self.instrument, self.corrections
        _, a, x = js.shape[:3]
        _, b, y = ks.shape[:3]
        t = np.einsum("iaxAX,ibyBY->abxyABXY", js, ks, optimize=True)
        n = a * b * x * y
        return ChoiMatrix(t.reshape(n, n), x * y, a * b)


@dataclass(frozen=True)
class QStrategy:
    """Stochastic operator matrices stored Choi-style, ec[a, x, h, a', x', h'] and
    fc[b, y, k, b', y', k'], with shared pure state psi[h, k]."""

    ec: np.ndarray
    fc: np.ndarray
    psi: np.ndarray

    @property
    def local_dims(self) -> tuple:
        return self.ec.shape[2], self.fc.shape[2]

    def choi(self) -> ChoiMatrix:
        return q_strategy_choi(self.ec, self.fc, self.psi)


def q_strategy_choi(ec: np.ndarray, fc: np.ndarray, psi: np.ndarray) -> ChoiMatrix:
    a, x = ec.shape[:2]
    b, y = fc.shape[:2]
    t = np.einsum("hk,axhAXg,bykBYl,gl->abxyABXY", psi.conj(), ec, fc, psi, optimize=True)
    n = a * b * x * y
    return ChoiMatrix(t.reshape(n, n), x * y, a * b)


def random_q_strategy(a: int, x: int, b: int, y: int, d_a: int, d_b: int, rng: Rng) -> QStrategy:
    def side(out_dim, in_dim, env, r):
        u = BlockIsometry.random(in_dim, out_dim, env, in_dim * env, r)
        e = stochastic_from_isometry(u).tensor()  # [x, a, h, x', a', h']
        return e.transpose(1, 0, 2, 4, 3, 5)

    psi = random_state(d_a * d_b, rng.child(2)).reshape(d_a, d_b)
    return QStrategy(side(a, x, d_a, rng.child(0)), side(b, y, d_b, rng.child(1)), psi)


def _embed_q(start, shape, d_a: int, d_b: int) -> QStrategy:
    """Lift a product strategy or a lower-dimensional q strategy to local dimensions (d_a, d_b)."""
    a, b, x, y = shape
    if isinstance(start, LocalStrategy):
        if start.branches != 1:
            raise ValueError("only single-branch local strategies embed into q strategies")
        ec0 = start.instrument[0][:, :, None, :, :, None]
        fc0 = start.corrections[0][:, :, None, :, :, None]
        psi0 = np.ones((1, 1), dtype=complex)
    else:
        ec0, fc0, psi0 = start.ec, start.fc, start.psi

    def lift(e0, o, i, d):
        d0 = e0.shape[2]
        if d0 > d:
            raise ValueError("cannot embed into a smaller local dimension")
        e = np.zeros((o, i, d, o, i, d), dtype=complex)
        e[:, :, :d0, :, :, :d0] = e0
        for h in range(d0, d):
            e[:, :, h, :, :, h] = np.einsum("aA,xX->axAX", np.eye(o), np.eye(i)) / o
        return e

    psi = np.zeros((d_a, d_b), dtype=complex)
    psi[: psi0.shape[0], : psi0.shape[1]] = psi0
    return QStrategy(lift(ec0, a, x, d_a), lift(fc0, b, y, d_b), psi)


# ---------------------------------------------------------------------------
# see-saw machinery


def _run_restarts(run, opts: SeesawOptions, starts=()):
    """Run random restarts plus explicit starts; best value wins, ties go to the lowest index."""
    root = Rng(opts.seed)
    jobs = [(root.child(i), None) for i in range(opts.restarts)]
    jobs += [(root.child(opts.restarts + k), s) for k, s in enumerate(starts)]
    if opts.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as ex:
            results = list(ex.map(lambda job: run(*job), jobs))
    else:
        results = [run(r, s) for r, s in jobs]
    best = max(range(len(results)), key=lambda i: (results[i][0], -i))
    return results[best], len(jobs)


def _check_monotone(hist: list, floor: float) -> None:
    for prev, cur in zip(hist, hist[1:]):
        if cur < prev - floor:
            raise InternalConsistencyError("see-saw objective decreased", {"history": list(hist)})


class _LocalSeesaw:
    def __init__(self, obj: _Objective, branches: int, opts: SeesawOptions):
        self.obj, self.n, self.opts = obj, branches, opts
        self.t = obj.tensor
        self.a, self.b, self.x, self.y = obj.shape

    def value(self, js, ks) -> float:
        return float(np.einsum("abxyABXY,iAXax,iBYby->", self.t, js, ks, optimize=True).real)

    def alice(self, js, ks):
        n, a, x = self.n, self.a, self.x
        wa = np.einsum("abxyABXY,iBYby->iaxAX", self.t, ks, optimize=True)
        big = np.zeros((n, a, x, n, a, x), dtype=complex)
        start = np.zeros_like(big)
        for i in range(n):
            big[i, :, :, i] = wa[i]
            start[i, :, :, i] = js[i]
        side = n * a * x
        jb, _ = sdp.max_over_choi(big.reshape(side, side), n * a, x, tol=self.opts.tol,
                                  max_iter=self.opts.inner_iters, start=[start.reshape(side, side)])
        jb = jb.reshape(n, a, x, n, a, x)
        return np.array([jb[i, :, :, i] for i in range(n)])

    def bob(self, js, ks):
        b, y = self.b, self.y
        wb = np.einsum("abxyABXY,iAXax->ibyBY", self.t, js, optimize=True)
        out = []
        for i in range(self.n):
            k, _ = sdp.max_over_choi(wb[i].reshape(b * y, b * y), b, y, tol=self.opts.tol,
                                     max_iter=self.opts.inner_iters, start=[ks[i].reshape(b * y, b * y)])
            out.append(k.reshape(b, y, b, y))
        return np.array(out)

    def random_start(self, rng: Rng) -> LocalStrategy:
        n, a, b, x, y = self.n, self.a, self.b, self.x, self.y
        jb = random_channel(x, n * a, rng.child(0)).J.reshape(n, a, x, n, a, x)
        js = np.array([jb[i, :, :, i] for i in range(n)])
        ks = np.array([random_channel(y, b, rng.child(1 + i)).J.reshape(b, y, b, y) for i in range(n)])
        return LocalStrategy(js, ks)

    def run(self, rng: Rng, start=None):
        s = start if start is not None else self.random_start(rng)
        js, ks = s.instrument, s.corrections
        v = self.value(js, ks)
        hist = [v]
        for _ in range(self.opts.outer_iters):
            js2 = self.alice(js, ks)
            v2 = self.value(js2, ks)
            if v2 >= v:
                js, v = js2, v2
            ks2 = self.bob(js, ks)
            v3 = self.value(js, ks2)
            if v3 >= v:
                ks, v = ks2, v3
            hist.append(v)
            if hist[-1] - hist[-2] < self.opts.floor:
                break
        _check_monotone(hist, self.opts.floor)
        return v, LocalStrategy(js, ks), tuple(hist)


def _local_start(start, n: int):
    """Pad a local strategy with empty instrument branches."""
    if start is None or start.branches == n:
        return start
    if start.branches > n:
        raise ValueError("start has more branches than requested")
    pad = n - start.branches
    js = np.concatenate([start.instrument, np.zeros((pad,) + start.instrument.shape[1:], dtype=complex)])
    ks = np.concatenate([start.corrections, np.repeat(start.corrections[:1], pad, axis=0)])
    return LocalStrategy(js, ks)


def _seesaw_estimate(best, count, solver: str, opts: SeesawOptions) -> ValueEstimate:
    v, strat, hist = best
    c = strat.choi()
    residual = max(0.0, -c.min_eig()) + c.tp_error()
    return ValueEstimate(
        value=_clip(v),
        bound_kind=BoundKind.LOWER,
        solver=solver,
        iterations=len(hist) - 1,
        restarts=count,
        residual=float(residual),
        seed=opts.seed,
        strategy=strat,
        history=hist,
    )


def value_lowc_lower(g, branches: int = 4, opts: SeesawOptions = SeesawOptions(), start=None) -> ValueEstimate:
    if branches < 1:
        raise ValueError("branches must be positive")
    obj = _objective(g)
    solver = _LocalSeesaw(obj, branches, opts)
    starts = () if start is None else (_local_start(start, branches),)
    best, count = _run_restarts(solver.run, opts, starts)
    return _seesaw_estimate(best, count, "lowc-seesaw", opts)


def value_loc_lower(g, opts: SeesawOptions = SeesawOptions(), start=None) -> ValueEstimate:
    obj = _objective(g)
    solver = _LocalSeesaw(obj, 1, opts)
    starts = () if start is None else (start,)
    best, count = _run_restarts(solver.run, opts, starts)
    return _seesaw_estimate(best, count, "loc-seesaw", opts)


class _QSeesaw:
    def __init__(self, obj: _Objective, d_a: int, d_b: int, opts: SeesawOptions):
        self.obj, self.d_a, self.d_b, self.opts = obj, d_a, d_b, opts
        self.t = obj.tensor
        self.a, self.b, self.x, self.y = obj.shape

    def value(self, s: QStrategy) -> float:
        return float(np.einsum("abxyABXY,hk,AXhaxg,BYkbyl,gl->", self.t, s.psi.conj(), s.ec, s.fc, s.psi,
                               optimize=True).real)

    def alice(self, s: QStrategy) -> QStrategy:
        a, x, d = self.a, self.x, self.d_a
        w = np.einsum("abxyABXY,hk,BYkbyl,gl->axgAXh", self.t, s.psi.conj(), s.fc, s.psi, optimize=True)
        n = a * x * d
        e, _ = sdp.max_over_choi(w.reshape(n, n), a, x * d, tol=self.opts.tol,
                                 max_iter=self.opts.inner_iters, start=[s.ec.reshape(n, n)])
        return QStrategy(e.reshape(a, x, d, a, x, d), s.fc, s.psi)

    def bob(self, s: QStrategy) -> QStrategy:
        b, y, d = self.b, self.y, self.d_b
        w = np.einsum("abxyABXY,hk,AXhaxg,gl->bylBYk", self.t, s.psi.conj(), s.ec, s.psi, optimize=True)
        n = b * y * d
        f, _ = sdp.max_over_choi(w.reshape(n, n), b, y * d, tol=self.opts.tol,
                                 max_iter=self.opts.inner_iters, start=[s.fc.reshape(n, n)])
        return QStrategy(s.ec, f.reshape(b, y, d, b, y, d), s.psi)

    def state(self, s: QStrategy) -> QStrategy:
        m = np.einsum("abxyABXY,AXhaxg,BYkbyl->hkgl", self.t, s.ec, s.fc, optimize=True)
        n = self.d_a * self.d_b
        m = m.reshape(n, n)
        _, v = top_eigvec((m + m.conj().T) / 2)
        return QStrategy(s.ec, s.fc, v.reshape(self.d_a, self.d_b))

    def run(self, rng: Rng, start=None):
        if start is None:
            s = random_q_strategy(self.a, self.x, self.b, self.y, self.d_a, self.d_b, rng)
        else:
            s = _embed_q(start, self.obj.shape, self.d_a, self.d_b)
        v = self.value(s)
        hist = [v]
        for _ in range(self.opts.outer_iters):
            for step in (self.alice, self.bob, self.state):
                s2 = step(s)
                v2 = self.value(s2)
                if v2 >= v:
                    s, v = s2, v2
            hist.append(v)
            if hist[-1] - hist[-2] < self.opts.floor:
                break
        _check_monotone(hist, self.opts.floor)
        return v, s, tuple(hist)


def value_q_lower(g, d_a: int = 2, d_b: int = 2, opts: SeesawOptions = SeesawOptions(), start=None) -> ValueEstimate:
    if d_a < 1 or d_b < 1:
        raise ValueError("local dimensions must be positive")
    obj = _objective(g)
    solver = _QSeesaw(obj, d_a, d_b, opts)
    starts = () if start is None else (start,)
    best, count = _run_restarts(solver.run, opts, starts)
    return _seesaw_estimate(best, count, "q-seesaw", opts)


# ---------------------------------------------------------------------------
# moment relaxation for qc


def _localizer_vectors(n: int) -> list:
    out = []
    for i in range(n):
        e = np.zeros(n, dtype=complex)
        e[i] = 1
        out.append(e)
    for i in range(n):
        for k in range(i + 1, n):
            for ph in (1, -1, 1j, -1j):
                c = np.zeros(n, dtype=complex)
                c[i], c[k] = 1 / np.sqrt(2), ph / np.sqrt(2)
                out.append(c)
    return out


@dataclass
class QcMomentModel:
    """Moment matrix over the words 1, E_{x,x',a,a'}, F_{y,y',b,b'} applied to the shared state.

    Blocks: the moment matrix M, the correlation J read off its E-F block
    (kept as a separate PSD block), and a slack block whose diagonal holds
    one entry per localizing inequality <T xi, xi> >= |T xi|^2, with T a
    compression of E or F.  Positivity of the slack block forces a
    nonnegative diagonal; its off-diagonal entries are unconstrained.
    """

    dims: RegisterDims
    words: tuple
    block_sizes: tuple
    constraints: sdp.LinearConstraints
    objective: list
    localizers: tuple

    @property
    def side(self) -> int:
        return self.block_sizes[0]

    def e_index(self, x, xp, a, ap) -> int:
        d = self.dims
        return 1 + ((x * d.x + xp) * d.a + a) * d.a + ap

    def f_index(self, y, yp, b, bp) -> int:
        d = self.dims
        return 1 + d.x * d.x * d.a * d.a + ((y * d.y + yp) * d.b + b) * d.b + bp

    @classmethod
    def build(cls, g) -> "QcMomentModel":
        obj = _objective(g)
        d = obj.dims
        a_, b_, x_, y_ = obj.shape
        words = [("1",)]
        words += [("E", x, xp, a, ap) for x, xp, a, ap in product(range(x_), range(x_), range(a_), range(a_))]
        words += [("F", y, yp, b, bp) for y, yp, b, bp in product(range(y_), range(y_), range(b_), range(b_))]
        side = len(words)
        if side > QC_MAX_SIDE:
            raise SizeError(f"moment matrix side {side} exceeds the cap {QC_MAX_SIDE}")
        localizers = []
        for a in range(a_):
            localizers += [("E", a, c) for c in _localizer_vectors(x_)]
        for b in range(b_):
            localizers += [("F", b, c) for c in _localizer_vectors(y_)]
        n = obj.side
        sizes = (side, n, len(localizers))
        model = cls(RegisterDims(x_, y_, a_, b_), tuple(words), sizes, sdp.LinearConstraints(sizes),
                    [np.zeros((side, side), dtype=complex), obj.w,
                     np.zeros((len(localizers), len(localizers)), dtype=complex)],
                    tuple(localizers))
        model._add_constraints()
        return model

    def _add_constraints(self) -> None:
        d, lc = self.dims, self.constraints
        e, f = self.e_index, self.f_index
        M, J = 0, 1
        lc.add_real([(M, 0, 0, 1)], 1.0)
        for x, xp, a, ap in product(range(d.x), range(d.x), range(d.a), range(d.a)):
            lc.add([(M, 0, e(xp, x, ap, a), 1), (M, e(x, xp, a, ap), 0, -1)])
        for y, yp, b, bp in product(range(d.y), range(d.y), range(d.b), range(d.b)):
            lc.add([(M, 0, f(yp, y, bp, b), 1), (M, f(y, yp, b, bp), 0, -1)])
        for u in range(self.side):
            for x, xp in product(range(d.x), repeat=2):
                terms = [(M, u, e(x, xp, a, a), 1) for a in range(d.a)]
                if x == xp:
                    terms.append((M, u, 0, -1))
                lc.add(terms)
            for y, yp in product(range(d.y), repeat=2):
                terms = [(M, u, f(y, yp, b, b), 1) for b in range(d.b)]
                if y == yp:
                    terms.append((M, u, 0, -1))
                lc.add(terms)
        shape = (d.a, d.b, d.x, d.y)
        for i, (a, b, x, y) in enumerate(product(*[range(s) for s in shape])):
            for k, (ap, bp, xp, yp) in enumerate(product(*[range(s) for s in shape])):
                lc.add([(J, i, k, 1), (M, e(xp, x, ap, a), f(y, yp, b, bp), -1)])
        for m, (party, o, c) in enumerate(self.localizers):
            n_in = d.x if party == "E" else d.y
            idx = self.e_index if party == "E" else self.f_index
            pairs = [(p, q) for p in range(n_in) for q in range(n_in)]
            alpha = {(p, q): np.conj(c[p]) * c[q] for p, q in pairs}
            terms = [(M, 0, idx(p, q, o, o), alpha[p, q]) for p, q in pairs if alpha[p, q] != 0]
            for p, q in pairs:
                for r, s in pairs:
                    coef = -np.conj(alpha[p, q]) * alpha[r, s]
                    if coef != 0:
                        terms.append((M, idx(p, q, o, o), idx(r, s, o, o), coef))
            terms.append((2, m, m, -1))
            lc.add(terms)

    def induced_blocks(self, s: QStrategy) -> list:
        """Moment blocks of an explicit q strategy (the Gram matrix of its word vectors)."""
        psi = s.psi
        vecs = [psi.ravel()]
        for _, x, xp, a, ap in self.words[1:1 + self.dims.x ** 2 * self.dims.a ** 2]:
            vecs.append((s.ec[a, x, :, ap, xp, :] @ psi).ravel())
        for _, y, yp, b, bp in self.words[1 + self.dims.x ** 2 * self.dims.a ** 2:]:
            vecs.append((psi @ s.fc[b, y, :, bp, yp, :].T).ravel())
        v = np.array(vecs).T
        m = v.conj().T @ v
        slack = []
        for party, o, c in self.localizers:
            n_in = len(c)
            idx = self.e_index if party == "E" else self.f_index
            alpha = np.array([[np.conj(c[p]) * c[q] for q in range(n_in)] for p in range(n_in)]).ravel()
            ids = [idx(p, q, o, o) for p in range(n_in) for q in range(n_in)]
            lin = alpha @ m[0, ids]
            quad = alpha.conj() @ m[np.ix_(ids, ids)] @ alpha
            slack.append((lin - quad).real)
        return [m, s.choi().J, np.diag(slack).astype(complex)]

    def violation(self, blocks) -> float:
        return self.constraints.residual(blocks)

    def objective_value(self, blocks) -> float:
        return sdp.block_objective(self.objective, blocks)


def value_qc_upper(g, tol: float = sdp.DEFAULT_TOL, max_iter: int = sdp.DEFAULT_MAX_ITER) -> ValueEstimate:
    model = QcMomentModel.build(g)
    affine = model.constraints.affine_set()
    st = sdp.admm(model.objective, affine, tol=tol, max_iter=max_iter)
    return ValueEstimate(
        value=_clip(model.objective_value(st.X)),
        bound_kind=BoundKind.UPPER,
        solver="qc-moment-sdp",
        iterations=st.iterations,
        restarts=0,
        residual=float(st.primal_residual),
        seed=0,
    )


# ---------------------------------------------------------------------------
# classical games


def value_classical_loc_exact(g: ClassicalGame) -> ValueEstimate:
    d = g.dims
    count = d.a ** d.x * d.b ** d.y
    if count > CLASSICAL_CAP:
        raise SizeError(f"{count} deterministic strategy pairs exceed the cap {CLASSICAL_CAP}")
    # payoff[x, y, a, b] = pi(x, y) * rule(x, y, a, b); Bob best-responds to each Alice function
    payoff = g.pi[:, :, None, None] * g.rule
    best = -1.0
    xs = np.arange(d.x)
    for f in product(range(d.a), repeat=d.x):
        gain = payoff[xs, :, list(f), :].sum(axis=0)  # [y, b]
        best = max(best, float(gain.max(axis=1).sum()))
    return ValueEstimate(best, BoundKind.EXACT, "classical-enumeration", d.a ** d.x, 0, 0.0, 0)


# ---------------------------------------------------------------------------
# chain


@dataclass(frozen=True)
class ChainReport:
    estimates: dict
    checks: tuple  # (description, lhs, rhs, satisfied)

    @property
    def satisfied(self) -> bool:
        return all(c[3] for c in self.checks)


def chain_report(g, opts: SeesawOptions = SeesawOptions(), d_a: int = 2, d_b: int = 2, branches: int = 4,
                 tol: float = sdp.DEFAULT_TOL, max_iter: int = sdp.DEFAULT_MAX_ITER) -> ChainReport:
    """All five estimates; raises InternalConsistencyError when an inclusion is violated by > 1e-5."""
    est = {}
    if isinstance(g, ClassicalGame):
        est["classical"] = value_classical_loc_exact(g)
    est["loc"] = value_loc_lower(g, opts)
    est["q"] = value_q_lower(g, d_a, d_b, opts, start=est["loc"].strategy)
    est["lowc"] = value_lowc_lower(g, branches, opts, start=est["loc"].strategy)
    est["qc"] = value_qc_upper(g, tol=tol, max_iter=max_iter)
    est["ns"] = value_ns(g, tol=tol, max_iter=max_iter)
    pairs = [("loc", "q"), ("q", "qc"), ("q", "ns"), ("loc", "lowc")]
    if "classical" in est:
        pairs.append(("loc", "classical"))
    checks = tuple((f"{lo} <= {hi}", est[lo].value, est[hi].value, est[lo].value <= est[hi].value + CHAIN_TOL)
                   for lo, hi in pairs)
    report = ChainReport(est, checks)
    if not report.satisfied:
        bad = [c for c in checks if not c[3]]
        raise InternalConsistencyError(
            "resource chain violated: " + ", ".join(f"{c[0]} ({c[1]:.9f} > {c[2]:.9f})" for c in bad),
            {"estimates": {k: v.value for k, v in est.items()}, "violations": bad},
        )
    return report
