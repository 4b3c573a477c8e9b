import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcqueue.exceptions import ParameterError
from bcqueue.measures import evaluate
from bcqueue.model import QueueParameters
from bcqueue.sim import SimConfig, simulate, spawn_seeds


def _cfg(params, seed=7, horizon=60_000, **kw):
    return SimConfig(params, seed=seed, horizon_events=horizon, **kw)


def test_same_seed_is_bit_identical(b2_params):
    a = simulate(_cfg(b2_params, seed=3))
    b = simulate(_cfg(b2_params, seed=3))
    assert a == b
    c = simulate(_cfg(b2_params, seed=4))
    assert c.est_confirmation.value != a.est_confirmation.value


def test_config_validation(b1_params):
    with pytest.raises(ParameterError):
        SimConfig(b1_params, seed=-1)
    with pytest.raises(ParameterError):
        SimConfig(b1_params, batch_count=5)
    with pytest.raises(ParameterError):
        SimConfig(b1_params, horizon_events=100, warmup_events=100)
    cfg = SimConfig(b1_params, horizon_events=1000)
    assert cfg.warmup_events == 100
    assert cfg.batch_size == 900 // 32


def test_spawned_seeds_are_distinct_and_reproducible():
    seeds = spawn_seeds(11, 5)
    assert len(set(seeds)) == 5
    assert seeds == spawn_seeds(11, 5)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.floats(0.5, 2.0), st.floats(0.5, 2.0), st.floats(0.2, 0.8),
       st.integers(0, 2**32))
def test_transactions_are_conserved(b, mu1, mu2, load, seed):
    p = QueueParameters(load * b * mu1 * mu2 / (mu1 + mu2), mu1, mu2, b)
    res = simulate(SimConfig(p, seed=seed, horizon_events=5_000))
    assert res.arrivals == res.confirmed_total + res.queue_at_end + res.block_at_end
    assert 0 <= res.block_at_end <= b
    assert res.confirmed_count == (5_000 - 500) // 32 * 32


def test_estimates_close_to_analytic(b2_params):
    exact = evaluate(b2_params)
    res = simulate(_cfg(b2_params, seed=123, horizon=200_000))
    assert not res.degenerate
    assert res.est_confirmation.covers(exact.mean_confirmation_closed, 4)
    assert res.est_queue.covers(exact.mean_queue, 4)
    assert res.est_block.covers(exact.mean_block, 4)


def test_littles_law_on_sample_path(b2_params):
    res = simulate(_cfg(b2_params, seed=5, horizon=200_000))
    lhs = res.est_queue.value + res.est_block.value
    rhs = b2_params.lam * res.est_confirmation.value
    assert lhs == pytest.approx(rhs, rel=0.03)


def test_unstable_input_warns():
    p = QueueParameters(1.0, 1.0, 1.0, 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = simulate(_cfg(p, horizon=2_000))
    assert res.unstable
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_to_dict_fields(b1_params):
    d = simulate(_cfg(b1_params, horizon=2_000)).to_dict()
    assert {"est_queue", "est_block", "est_confirmation", "confirmed_count", "seed_used"} <= set(d)
    assert set(d["est_confirmation"]) == {"value", "half_width"}
