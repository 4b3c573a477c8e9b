import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcqueue.matgeom import solve
from bcqueue.measures import (
    confirmation_time_terms,
    confirmation_weights,
    evaluate,
    mean_block_content,
    mean_confirmation_time_closed,
    mean_confirmation_time_series,
    mean_queue_length,
)
from bcqueue.model import QueueParameters
from bcqueue.oracle import mg1_erlang_oracle, truncated_measures


def test_b1_point_values(b1_params):
    sol = solve(b1_params)
    assert mean_queue_length(sol) == pytest.approx(0.975, abs=1e-10)
    assert mean_block_content(sol) == pytest.approx(0.3, abs=1e-10)
    terms = confirmation_time_terms(sol, b1_params)
    assert terms.residual_build == pytest.approx(0.3, abs=1e-10)
    assert terms.full_cycles == pytest.approx(3.95, abs=1e-10)
    assert mean_confirmation_time_closed(sol, b1_params) == pytest.approx(4.25, abs=1e-10)


def test_b1_series_within_tail(b1_params):
    sol = solve(b1_params)
    est = mean_confirmation_time_series(sol, b1_params, tail_eps=1e-9)
    assert est.tail_bound <= 1e-9
    assert abs(est.value - 4.25) <= 1e-9 + 1e-10


def test_b1_block_content_by_hand(b1_params):
    # pi0 (I - R)^-1 h with h = (0, 1): 0.4 * 0.225 + 0.12 * 1.75
    sol = solve(b1_params)
    np.testing.assert_allclose(sol.neumann_inv[:, 1], [0.225, 1.75], atol=1e-12)


def test_b2_against_truncated_oracle(b2_params):
    rep = evaluate(b2_params)
    ref = truncated_measures(b2_params, level_cap=200)
    assert rep.mean_queue == pytest.approx(ref.mean_queue, abs=1e-6)
    assert rep.mean_block == pytest.approx(ref.mean_block, abs=1e-6)
    assert rep.mean_confirmation_closed == pytest.approx(ref.mean_confirmation, abs=1e-6)
    assert rep.series_gap <= 1e-8 + rep.series_tail_bound
    assert rep.littles_residual < 1e-8


def test_weights_per_batch():
    p = QueueParameters(0.3, 1.0, 2.0, 3)
    w0 = confirmation_weights(p, 0)
    np.testing.assert_allclose(w0, [1.5, 2.5, 2.5, 2.5])
    np.testing.assert_allclose(confirmation_weights(p, 2), w0)
    np.testing.assert_allclose(confirmation_weights(p, 3), w0 + 1.5)


def test_series_rejects_bad_tail(b1_params):
    with pytest.raises(ValueError):
        mean_confirmation_time_series(solve(b1_params), b1_params, tail_eps=0.0)


def test_report_round_trip(b2_params):
    d = evaluate(b2_params).to_dict()
    assert set(d["rate_matrix"]) == {"iterations", "residual", "spectral_radius"}
    assert d["stability"]["is_stable"] is True
    assert d["params"]["max_block_size"] == 2


stable_points = st.tuples(st.integers(1, 12), st.floats(0.1, 3.0), st.floats(0.1, 3.0),
                          st.floats(0.02, 0.95))


def _params(point):
    b, mu1, mu2, load = point
    return QueueParameters(load * b * mu1 * mu2 / (mu1 + mu2), mu1, mu2, b)


@settings(max_examples=40, deadline=None)
@given(stable_points)
def test_littles_law_and_series_agreement(point):
    rep = evaluate(_params(point))
    assert rep.littles_residual < 1e-8 * max(1.0, rep.mean_queue)
    assert rep.series_gap <= 1e-8 * max(1.0, rep.mean_confirmation_closed) + rep.series_tail_bound


@settings(max_examples=40, deadline=None)
@given(stable_points)
def test_block_content_equals_build_load(point):
    # each transaction spends exactly one build stage in the block
    p = _params(point)
    assert evaluate(p).mean_block == pytest.approx(p.lam / p.mu1, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.02, 0.95))
def test_b1_matches_pollaczek_khinchine(mu1, mu2, load):
    p = QueueParameters(load * mu1 * mu2 / (mu1 + mu2), mu1, mu2, 1)
    rep = evaluate(p)
    ref = mg1_erlang_oracle(p)
    scale = max(1.0, ref.mean_confirmation)
    assert rep.mean_confirmation_closed == pytest.approx(ref.mean_confirmation, abs=1e-8 * scale)
    assert rep.mean_queue == pytest.approx(ref.mean_queue, abs=1e-8 * scale)
    assert rep.mean_block == pytest.approx(ref.mean_block, abs=1e-10)
