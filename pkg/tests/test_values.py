import json
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FIXTURES, seeds
from qgames import games, sdp, values
from qgames.channels import BlockIsometry, ChoiMatrix, gamma_from_isometry, random_channel, tensor_channels
from qgames.cli import GameFile
from qgames.games import RegisterDims
from qgames.linalg import Rng, random_hermitian, random_state
from qgames.values import BoundKind, SeesawOptions
from test_games import random_hypergraph, random_projection_game

FAST = SeesawOptions(restarts=2, outer_iters=15)


def fixture_games():
    return {p.stem: GameFile.from_json(json.loads(p.read_text())).game for p in sorted(FIXTURES.glob("*.json"))}


def pr_box_choi():
    j = np.zeros((16, 16))
    for x, y, a, b in product(range(2), repeat=4):
        if a ^ b == x & y:
            i = ((a * 2 + b) * 2 + x) * 2 + y
            j[i, i] = 0.5
    return j


def ns_constraints(a, b, x, y):
    """Explicit linear equalities for the no-signalling set, one matrix entry at a time."""
    sizes = (a * b * x * y,)
    lc = sdp.LinearConstraints(sizes)

    def idx(aa, bb, xx, yy):
        return ((aa * b + bb) * x + xx) * y + yy

    for xx, yy, xp, yp in product(range(x), range(y), range(x), range(y)):
        terms = [(0, idx(aa, bb, xx, yy), idx(aa, bb, xp, yp), 1) for aa, bb in product(range(a), range(b))]
        lc.add(terms, float(xx == xp and yy == yp))
    # Tr_A J = I_X ⊗ K and Tr_B J = I_Y ⊗ L
    for bb, bp, yy, yp, xx, xp in product(range(b), range(b), range(y), range(y), range(x), range(x)):
        tr = [(0, idx(aa, bb, xx, yy), idx(aa, bp, xp, yp), 1) for aa in range(a)]
        if xx != xp:
            lc.add(tr)
        elif xx > 0:
            lc.add(tr + [(0, idx(aa, bb, 0, yy), idx(aa, bp, 0, yp), -1) for aa in range(a)])
    for aa, ap, xx, xp, yy, yp in product(range(a), range(a), range(x), range(x), range(y), range(y)):
        tr = [(0, idx(aa, bb, xx, yy), idx(ap, bb, xp, yp), 1) for bb in range(b)]
        if yy != yp:
            lc.add(tr)
        elif yy > 0:
            lc.add(tr + [(0, idx(aa, bb, xx, 0), idx(ap, bb, xp, 0), -1) for bb in range(b)])
    return lc


# ---------------------------------------------------------------------------
# evaluation


@given(seeds)
def test_isometry_and_choi_evaluations_agree(seed):
    rng = Rng(seed)
    dims = RegisterDims(2, 1, 2, 1, 2)
    g = random_projection_game(dims, 2, rng.child(0))
    u = BlockIsometry.random(2, 2, 2, 4, rng.child(1))
    s = random_state(2, rng.child(2))
    sigma = np.outer(s, s.conj())
    c = gamma_from_isometry(u, sigma)
    assert abs(values.evaluate_isometry_strategy(g, u, sigma) - values.evaluate_strategy(g, c)) < 1e-10


def test_evaluate_rejects_wrong_dimensions():
    with pytest.raises(values.DimensionError):
        values.evaluate_strategy(games.gen_chsh(), ChoiMatrix.identity(2))


def test_strategy_objects_give_channels():
    rng = Rng(4)
    q = values.random_q_strategy(2, 2, 2, 2, 2, 2, rng)
    assert q.choi().is_channel()
    loc = values.LocalStrategy(
        np.array([random_channel(2, 2, rng.child(0)).tensor() / 2, random_channel(2, 2, rng.child(1)).tensor() / 2]),
        np.array([random_channel(2, 2, rng.child(2)).tensor(), random_channel(2, 2, rng.child(3)).tensor()]),
    )
    assert loc.choi().is_channel()


# ---------------------------------------------------------------------------
# ns and ppt


@given(st.integers(1, 2), st.integers(1, 2), st.integers(1, 2), st.integers(1, 2), seeds)
@settings(max_examples=10)
def test_ns_projection_matches_explicit_constraints(a, b, x, y, seed):
    n = a * b * x * y
    j = random_hermitian(n, Rng(seed))
    fast = values.NoSignallingSet(a, b, x, y).project_one(j)
    slow = ns_constraints(a, b, x, y).affine_set().project([j])[0]
    assert np.abs(fast - slow).max() < 1e-10


@given(seeds)
def test_product_channels_are_no_signalling(seed):
    rng = Rng(seed)
    c = tensor_channels(random_channel(2, 2, rng.child(0)), random_channel(3, 2, rng.child(1)))
    # tensor_channels orders (a, b, x, y) as (A1 A2)(X1 X2), the layout of the ns set
    s = values.NoSignallingSet(2, 2, 2, 3)
    assert np.abs(s.project_one(c.J) - c.J).max() < 1e-10


def test_pr_box_is_no_signalling_and_wins_chsh():
    j = pr_box_choi()
    c = ChoiMatrix(j, 4, 4)
    assert c.is_channel(cp_tol=1e-12, tp_tol=1e-12)
    assert values.NoSignallingSet(2, 2, 2, 2).violation([j]) < 1e-7
    assert abs(values.evaluate_strategy(games.gen_chsh(), c) - 1.0) < 1e-12


def test_ns_value_of_chsh():
    e = values.value_ns(games.gen_chsh())
    assert e.bound_kind is BoundKind.EXACT
    assert abs(e.value - 1.0) < 1e-6


@given(seeds)
@settings(max_examples=4)
def test_ppt_bound_sits_between_loc_and_ns(seed):
    h = random_hypergraph(RegisterDims(2, 2, 2, 2), 2, Rng(seed))
    loc = values.value_loc_lower(h, FAST).value
    ppt = values.value_ppt_upper(h).value
    ns = values.value_ns(h).value
    assert loc <= ppt + 1e-6
    assert ppt <= ns + 1e-6


# ---------------------------------------------------------------------------
# see-saws


def _nondecreasing(hist):
    return all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))


@given(seeds)
@settings(max_examples=4)
def test_seesaws_are_monotone_every_iteration(seed):
    g = random_hypergraph(RegisterDims(2, 2, 2, 2), 2, Rng(seed))
    opts = SeesawOptions(restarts=1, outer_iters=15, seed=seed % 1000)
    for est in (values.value_loc_lower(g, opts), values.value_lowc_lower(g, 2, opts),
                values.value_q_lower(g, 2, 2, opts)):
        assert est.history and _nondecreasing(est.history)
        assert est.bound_kind is BoundKind.LOWER
        assert abs(values.evaluate_strategy(g, est.strategy.choi()) - est.value) < 1e-9
        assert est.residual < 1e-6


def test_check_monotone_rejects_decrease():
    with pytest.raises(values.InternalConsistencyError):
        values._check_monotone([0.5, 0.4], 1e-9)


def test_seesaw_is_deterministic_and_thread_count_free():
    g = games.gen_chsh()
    a = values.value_q_lower(g, opts=SeesawOptions(restarts=4, seed=3))
    b = values.value_q_lower(g, opts=SeesawOptions(restarts=4, seed=3, workers=3))
    assert a == b and a.value == b.value


def test_warm_start_does_not_lose_value():
    g = games.gen_chsh()
    loc = values.value_loc_lower(g, FAST)
    q = values.value_q_lower(g, opts=SeesawOptions(restarts=1, outer_iters=5), start=loc.strategy)
    lowc = values.value_lowc_lower(g, 3, SeesawOptions(restarts=1, outer_iters=5), start=loc.strategy)
    assert q.value >= loc.value - 1e-9 and lowc.value >= loc.value - 1e-9


def test_options_validation():
    with pytest.raises(ValueError):
        SeesawOptions(restarts=0)
    with pytest.raises(ValueError):
        SeesawOptions(tol=0)
    with pytest.raises(ValueError):
        values.value_lowc_lower(games.gen_chsh(), 0)


# ---------------------------------------------------------------------------
# classical enumeration


def brute_force_classical(g):
    d = g.dims
    best = 0.0
    for f in product(range(d.a), repeat=d.x):
        for h in product(range(d.b), repeat=d.y):
            v = sum(g.pi[x, y] * g.rule[x, y, f[x], h[y]] for x, y in product(range(d.x), range(d.y)))
            best = max(best, v)
    return best


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_classical_enumeration_matches_brute_force(seed, x, y, a, b):
    rng = Rng(seed)
    pi = rng.uniform((x, y)) + 0.01
    g = games.ClassicalGame(RegisterDims(x, y, a, b), rng.uniform((x, y, a, b)) < 0.4, pi / pi.sum())
    e = values.value_classical_loc_exact(g)
    assert abs(e.value - brute_force_classical(g)) < 1e-12
    assert e.bound_kind is BoundKind.EXACT


def test_classical_enumeration_cap():
    g = games.ClassicalGame(RegisterDims(12, 12, 4, 4), np.ones((12, 12, 4, 4)), np.full((12, 12), 1 / 144))
    with pytest.raises(values.SizeError):
        values.value_classical_loc_exact(g)


# ---------------------------------------------------------------------------
# qc moment model


@given(seeds)
@settings(max_examples=10)
def test_explicit_q_strategies_satisfy_moment_constraints(seed):
    rng = Rng(seed)
    model = values.QcMomentModel.build(games.gen_chsh())
    s = values.random_q_strategy(2, 2, 2, 2, 2, 2, rng)
    blocks = model.induced_blocks(s)
    assert model.violation(blocks) < 1e-8
    for blk in blocks:
        assert np.linalg.eigvalsh(blk)[0] > -1e-10
    assert abs(model.objective_value(blocks) - values.evaluate_strategy(games.gen_chsh(), s.choi())) < 1e-10


def test_qc_size_cap():
    g = games.ClassicalGame(RegisterDims(3, 3, 3, 3), np.ones((3, 3, 3, 3)), np.full((3, 3), 1 / 9))
    with pytest.raises(values.SizeError):
        values.value_qc_upper(g)


# ---------------------------------------------------------------------------
# chain


@pytest.mark.parametrize("name", sorted(fixture_games()))
def test_chain_report_on_fixtures(name):
    g = fixture_games()[name]
    rep = values.chain_report(g, SeesawOptions(restarts=4))
    assert rep.satisfied
    for desc, lo, hi, ok in rep.checks:
        assert lo <= hi + values.CHAIN_TOL, desc


def test_chain_violation_raises(monkeypatch):
    fake = values.ValueEstimate(0.5, BoundKind.EXACT, "fake", 0, 0, 0.0, 0)
    monkeypatch.setattr(values, "value_ns", lambda g, **kw: fake)
    with pytest.raises(values.InternalConsistencyError) as info:
        values.chain_report(games.gen_chsh(), FAST)
    assert "q <= ns" in str(info.value)
    assert info.value.diagnostics["estimates"]["ns"] == 0.5


def test_implication_with_equal_rank_one_projections_is_perfect():
    rng = Rng(600)
    v = rng.complex_normal(4)
    v /= np.linalg.norm(v)
    g = games.gen_implication(np.outer(v, v.conj()), np.outer(v, v.conj()))
    # the identity channel on each side already wins
    assert values.value_loc_lower(g, SeesawOptions(restarts=4)).value >= 1 - 1e-6
    assert abs(values.value_qc_upper(g).value - 1) <= 1e-6
    assert abs(values.value_ns(g).value - 1) <= 1e-6
