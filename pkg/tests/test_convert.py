import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import seeds
from qgames import convert
from qgames.channels import ValidationError
from qgames.convert import NotConvertibleError, SpectrumPair, Verdict
from qgames.linalg import DimensionError, Rng, random_isometry, random_state
from qgames.values import SeesawOptions

S = 1 / np.sqrt(2)
BELL = np.array([S, 0, 0, S])
ZERO = np.array([1.0, 0, 0, 0])


def spectrum(rng, n):
    v = np.sort(rng.uniform(n))[::-1]
    v[rng.uniform(n) < 0.2] = 0.0
    if v.sum() == 0:
        v[0] = 1.0
    return np.sort(v / v.sum())[::-1]


def schmidt_state(p, rng):
    n = len(p)
    u, v = random_isometry(n, n, rng.child(0)), random_isometry(n, n, rng.child(1))
    return (u @ np.diag(np.sqrt(p)) @ v.T).ravel()


def majorized_by_oracle(p, q):
    # p ≺ q iff p is in the convex hull of permutations of q; partial-sum form written out directly
    return all(sum(sorted(p, reverse=True)[:k]) <= sum(sorted(q, reverse=True)[:k]) + 1e-10
               for k in range(1, len(p) + 1))


@given(seeds, st.integers(1, 4))
def test_majorization_is_reflexive_and_transitive(seed, n):
    rng = Rng(seed)
    p, q, r = spectrum(rng.child(0), n), spectrum(rng.child(1), n), spectrum(rng.child(2), n)
    assert convert.majorizes(SpectrumPair(p, p))
    if convert.majorizes(SpectrumPair(p, q)) and convert.majorizes(SpectrumPair(q, r)):
        assert convert.majorizes(SpectrumPair(p, r))
    assert convert.majorizes(SpectrumPair(p, q)) == majorized_by_oracle(p, q)


@given(seeds, st.integers(2, 3), st.integers(2, 3))
def test_schmidt_spectra_invariant_under_local_unitaries(seed, x, y):
    rng = Rng(seed)
    xi = random_state(x * y, rng.child(0))
    u, v = random_isometry(x, x, rng.child(1)), random_isometry(y, y, rng.child(2))
    moved = np.kron(u, v) @ xi
    a = convert.schmidt_spectra(xi, xi, dims=(x, y)).p
    b = convert.schmidt_spectra(moved, moved, dims=(x, y)).p
    assert np.abs(a - b).max() < 1e-10


def test_spectrum_validation():
    with pytest.raises(ValidationError):
        SpectrumPair(np.array([0.4, 0.6]), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        SpectrumPair(np.array([0.6, 0.6]), np.array([0.5, 0.5]))
    with pytest.raises(DimensionError):
        SpectrumPair(np.array([1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError):
        convert.locc_convertible(2 * BELL, ZERO)
    with pytest.raises(DimensionError):
        convert.locc_convertible(np.ones(3) / np.sqrt(3), ZERO)


def test_reduced_state():
    assert np.allclose(convert.reduced_state(BELL), np.eye(2) / 2)
    assert np.allclose(convert.reduced_state(ZERO), np.diag([1, 0]))


@given(seeds, st.integers(2, 4))
def test_doubly_stochastic_and_birkhoff(seed, n):
    rng = Rng(seed)
    q = spectrum(rng.child(0), n)
    # p = M q for a mixture M of permutations is always majorized by q
    perms = [np.eye(n)[rng.child(1 + i).uniform(n).argsort()] for i in range(3)]
    w = rng.child(9).uniform(3)
    mix = sum(wi * pm for wi, pm in zip(w / w.sum(), perms))
    p = np.sort(mix @ q)[::-1]
    d = convert.doubly_stochastic_between(p, q)
    assert np.abs(d.sum(0) - 1).max() < 1e-10 and np.abs(d.sum(1) - 1).max() < 1e-10
    assert (d > -1e-12).all()
    assert np.abs(d @ q - p).max() < 1e-9
    terms = convert.birkhoff_decomposition(d)
    assert len(terms) <= n * n
    rebuilt = sum(wt * np.eye(n)[perm] for wt, perm in terms)
    assert np.abs(rebuilt - d).max() < 1e-9


def test_doubly_stochastic_rejects_non_majorized():
    with pytest.raises(NotConvertibleError):
        convert.doubly_stochastic_between(np.array([1.0, 0.0]), np.array([0.5, 0.5]))


@given(seeds, st.integers(2, 3))
def test_nielsen_protocols_validate_and_reach_target(seed, n):
    rng = Rng(seed)
    p, q = spectrum(rng.child(0), n), spectrum(rng.child(1), n)
    assume(convert.majorizes(SpectrumPair(p, q)))
    xi, gamma = schmidt_state(p, rng.child(2)), schmidt_state(q, rng.child(3))
    proto = convert.nielsen_protocol(xi, gamma)
    assert isinstance(proto, convert.OneWayProtocol)
    assert convert.protocol_fidelity(proto, xi, gamma) >= 1 - 1e-9


def test_nielsen_bell_to_product_uses_two_branches():
    proto = convert.nielsen_protocol(BELL, ZERO)
    assert len(proto.instrument) == 2
    assert abs(convert.protocol_fidelity(proto, BELL, ZERO) - 1) < 1e-12
    with pytest.raises(NotConvertibleError):
        convert.nielsen_protocol(ZERO, BELL)


def test_nielsen_with_rank_deficient_source():
    rng = Rng(21)
    xi = schmidt_state(np.array([0.7, 0.3, 0.0]), rng.child(0))
    gamma = schmidt_state(np.array([0.9, 0.1, 0.0]), rng.child(1))
    proto = convert.nielsen_protocol(xi, gamma)
    assert convert.protocol_fidelity(proto, xi, gamma) >= 1 - 1e-9


def test_protocol_validation():
    proto = convert.nielsen_protocol(BELL, ZERO)
    with pytest.raises(ValidationError):
        convert.OneWayProtocol(proto.instrument[:1], proto.corrections[:1])
    with pytest.raises(ValidationError):
        convert.OneWayProtocol(proto.instrument, proto.corrections[:1])


def test_losr_reference_cases():
    opts = SeesawOptions(restarts=4)
    assert convert.losr_certify(ZERO, ZERO, opts) is Verdict.CONVERTIBLE
    assert convert.losr_certify(BELL, ZERO, opts) is Verdict.CONVERTIBLE
    ev = convert.losr_evidence(ZERO, BELL, opts)
    assert ev.verdict is Verdict.NOT_CONVERTIBLE
    assert ev.upper.value <= convert.LOSR_UPPER and ev.lower is None


@given(seeds)
def test_losr_never_exceeds_locc(seed):
    rng = Rng(seed)
    xi, gamma = random_state(4, rng.child(0)), random_state(4, rng.child(1))
    verdict = convert.losr_certify(xi, gamma, SeesawOptions(restarts=2))
    if verdict is Verdict.CONVERTIBLE:
        assert convert.locc_convertible(xi, gamma)
