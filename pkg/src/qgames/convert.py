"""Pure-state convertibility: Schmidt spectra, majorization, one-way LOCC
protocol synthesis and a tri-state LOSR certificate."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channels import ChoiMatrix, ValidationError
from .games import gen_conversion
from .linalg import DimensionError, partial_trace
from .values import LocalStrategy, SeesawOptions, evaluate_strategy, value_loc_lower, value_ppt_upper

MAJORIZATION_TOL = 1e-10
SPECTRUM_TOL = 1e-10
WEIGHT_TOL = 1e-14
LOSR_LOWER = 1 - 1e-6
LOSR_UPPER = 1 - 1e-5


class NotConvertibleError(ValueError):
    """The source state cannot be converted to the target by one-way LOCC."""


class Verdict(str, Enum):
    CONVERTIBLE = "convertible"
    NOT_CONVERTIBLE = "not_convertible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SpectrumPair:
    p: np.ndarray  # source, descending
    q: np.ndarray  # target, descending

    def __post_init__(self):
        for name in ("p", "q"):
            v = np.asarray(getattr(self, name), dtype=float)
            if (np.diff(v) > SPECTRUM_TOL).any() or (v < -SPECTRUM_TOL).any():
                raise ValidationError(f"{name} must be nonnegative and sorted descending")
            if abs(v.sum() - 1) > SPECTRUM_TOL:
                raise ValidationError(f"{name} must sum to 1")
            object.__setattr__(self, name, v)
        if self.p.shape != self.q.shape:
            raise DimensionError("spectra have different lengths")


def _as_bipartite(v, dims) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim == 2:
        m = v
    else:
        if dims is None:
            side = int(round(np.sqrt(v.size)))
            if side * side != v.size:
                raise DimensionError("give dims=(x, y) for non-square bipartitions")
            dims = (side, side)
        if v.size != dims[0] * dims[1]:
            raise DimensionError(f"vector of length {v.size} does not fit dims {dims}")
        m = v.reshape(dims)
    if abs(np.linalg.norm(m) - 1) > 1e-10:
        raise ValidationError("state is not a unit vector")
    return m


def _spectrum(m: np.ndarray) -> np.ndarray:
    # eigenvalues of Tr_Y (xi xi^*) are the squared singular values, padded to |X|
    s = np.linalg.svd(m, compute_uv=False) ** 2
    out = np.zeros(m.shape[0])
    out[: s.size] = s
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def schmidt_spectra(xi, gamma, dims=None) -> SpectrumPair:
    a = _as_bipartite(xi, dims)
    b = _as_bipartite(gamma, dims)
    if a.shape != b.shape:
        raise DimensionError(f"bipartitions differ: {a.shape} vs {b.shape}")
    return SpectrumPair(_spectrum(a), _spectrum(b))


def reduced_state(xi, dims=None) -> np.ndarray:
    m = _as_bipartite(xi, dims)
    v = m.ravel()
    return partial_trace(np.outer(v, v.conj()), list(m.shape), [1])


def majorizes(sp: SpectrumPair) -> bool:
    """True when the source spectrum p is majorized by the target spectrum q."""
    return bool((np.cumsum(sp.p) <= np.cumsum(sp.q) + MAJORIZATION_TOL).all())


def locc_convertible(xi, gamma, dims=None) -> bool:
    return majorizes(schmidt_spectra(xi, gamma, dims))


# ---------------------------------------------------------------------------
# protocol synthesis


def doubly_stochastic_between(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Doubly stochastic D with p = D q, for descending p majorized by q.

    Built as a product of T-transforms, each moving weight between one pair of
    entries of q until it matches p.
    """
    n = len(p)
    cur = q.astype(float).copy()
    d = np.eye(n)
    for _ in range(n * n):
        diff = cur - p
        if np.abs(diff).max() <= MAJORIZATION_TOL:
            break
        j = int(np.flatnonzero(np.abs(diff) > MAJORIZATION_TOL)[0])
        if diff[j] < 0:
            raise NotConvertibleError("spectra are not related by majorization")
        later = np.flatnonzero(diff[j + 1:] < -MAJORIZATION_TOL)
        if later.size == 0:
            raise NotConvertibleError("spectra are not related by majorization")
        k = j + 1 + int(later[0])
        delta = min(diff[j], -diff[k])
        t = 1 - delta / (cur[j] - cur[k])
        step = np.eye(n)
        step[[j, k], [j, k]] = t
        step[j, k] = step[k, j] = 1 - t
        cur = step @ cur
        d = step @ d
    return d


def birkhoff_decomposition(d: np.ndarray, tol: float = WEIGHT_TOL) -> list:
    """Greedy Birkhoff extraction: list of (weight, perm) with d = sum weight * P_perm,
    where (P_perm)[j, perm[j]] = 1."""
    rest = d.astype(float).copy()
    n = rest.shape[0]
    out = []
    for _ in range(n * n):
        if rest.max() <= tol:
            break
        support = rest > tol
        # maximize total weight over permutations inside the support
        cost = np.where(support, -rest, 1e6)
        rows, cols = linear_sum_assignment(cost)
        if not support[rows, cols].all():
            break
        w = float(rest[rows, cols].min())
        out.append((w, cols.copy()))
        rest[rows, cols] -= w
    return out


@dataclass(frozen=True)
class OneWayProtocol:
    """Alice's instrument branches (CP maps X -> X) and Bob's correction channels (Y -> Y)."""

    instrument: tuple
    corrections: tuple

    def __post_init__(self):
        if len(self.instrument) != len(self.corrections) or not self.instrument:
            raise ValidationError("instrument and corrections must be non-empty and of equal length")
        for j in self.instrument:
            if j.min_eig() < -1e-8:
                raise ValidationError("instrument branch is not completely positive")
        total = sum(j.J for j in self.instrument)
        x = self.instrument[0].in_dim
        tp = partial_trace(total, [self.instrument[0].out_dim, x], [0])
        if np.linalg.norm(tp - np.eye(x)) > 1e-7:
            raise ValidationError("instrument is not trace preserving in total")
        for k in self.corrections:
            if not k.is_channel():
                raise ValidationError("correction is not a channel")

    def strategy(self) -> LocalStrategy:
        a, x = self.instrument[0].out_dim, self.instrument[0].in_dim
        b, y = self.corrections[0].out_dim, self.corrections[0].in_dim
        js = np.array([j.J.reshape(a, x, a, x) for j in self.instrument])
        ks = np.array([k.J.reshape(b, y, b, y) for k in self.corrections])
        return LocalStrategy(js, ks)

    def choi(self) -> ChoiMatrix:
        return self.strategy().choi()


def nielsen_protocol(xi, gamma, dims=None) -> OneWayProtocol:
    a = _as_bipartite(xi, dims)
    b = _as_bipartite(gamma, dims)
    if a.shape != b.shape:
        raise DimensionError(f"bipartitions differ: {a.shape} vs {b.shape}")
    x_dim, y_dim = a.shape
    # Schmidt forms xi = sum_j sqrt(p_j) alpha_j ⊗ beta_j with full local bases
    ua, sa, vha = np.linalg.svd(a)
    ub, sb, vhb = np.linalg.svd(b)
    r = min(x_dim, y_dim)
    p = np.zeros(r)
    q = np.zeros(r)
    p[: sa.size] = sa ** 2
    q[: sb.size] = sb ** 2
    if not majorizes(SpectrumPair(p / p.sum(), q / q.sum())):
        raise NotConvertibleError("source Schmidt spectrum is not majorized by the target's")
    terms = birkhoff_decomposition(doubly_stochastic_between(p, q))
    total = sum(w for w, _ in terms)
    terms = [(w / total, perm) for w, perm in terms]
    # achieved source weights; equal to p up to rounding, used so completeness is exact
    p_hat = sum(w * q[perm] for w, perm in terms)
    alpha, alpha_t = ua, ub
    beta, beta_t = vha.T, vhb.T  # columns are the Schmidt vectors on Y
    support = p_hat > SPECTRUM_TOL
    instrument, corrections = [], []
    for i, (w, perm) in enumerate(terms):
        k = np.zeros((x_dim, x_dim), dtype=complex)
        for j in np.flatnonzero(support):
            k += np.sqrt(w * q[perm[j]] / p_hat[j]) * np.outer(alpha_t[:, perm[j]], alpha[:, j].conj())
        ops = [k]
        if i == 0:
            # complete the instrument on the part of C^X that xi does not touch
            kernel = [j for j in range(x_dim) if j >= r or not support[j]]
            if kernel:
                ops.append(sum(np.outer(alpha[:, j], alpha[:, j].conj()) for j in kernel))
        instrument.append(ChoiMatrix.from_kraus(ops))
        v = np.zeros((y_dim, y_dim), dtype=complex)
        for j in range(y_dim):
            target = perm[j] if j < r else j
            v += np.outer(beta_t[:, target], beta[:, j].conj())
        corrections.append(ChoiMatrix.from_kraus([v]))
    return OneWayProtocol(tuple(instrument), tuple(corrections))


def protocol_fidelity(protocol: OneWayProtocol, xi, gamma, dims=None) -> float:
    a = _as_bipartite(xi, dims)
    b = _as_bipartite(gamma, dims)
    game = gen_conversion(a.ravel(), b.ravel(), *a.shape)
    return evaluate_strategy(game, protocol.choi())


# ---------------------------------------------------------------------------
# LOSR


@dataclass(frozen=True)
class LosrEvidence:
    verdict: Verdict
    upper: object
    lower: object


def losr_evidence(xi, gamma, opts: SeesawOptions = SeesawOptions(), dims=None) -> LosrEvidence:
    """Tri-state LOSR verdict with the bounds that decided it.

    The upper bound adds a partial-transpose constraint to the ns relaxation;
    ns alone is always 1 here, since a constant channel preparing gamma is
    no-signalling.
    """
    a = _as_bipartite(xi, dims)
    b = _as_bipartite(gamma, dims)
    if a.shape != b.shape:
        raise DimensionError(f"bipartitions differ: {a.shape} vs {b.shape}")
    game = gen_conversion(a.ravel(), b.ravel(), *a.shape)
    upper = value_ppt_upper(game, tol=opts.tol, stop_below=LOSR_UPPER)
    if upper.value <= LOSR_UPPER:
        return LosrEvidence(Verdict.NOT_CONVERTIBLE, upper, None)
    lower = value_loc_lower(game, opts)
    verdict = Verdict.CONVERTIBLE if lower.value >= LOSR_LOWER else Verdict.UNKNOWN
    return LosrEvidence(verdict, upper, lower)


def losr_certify(xi, gamma, opts: SeesawOptions = SeesawOptions(), dims=None) -> Verdict:
    return losr_evidence(xi, gamma, opts, dims).verdict
