import numpy as np
import pytest

from wolalink.capacity import (
    CapacityState,
    capped_capacity,
    network_fair_capacity,
    re_capacity,
    user_mean_capacity,
)


def _scalar_cap(h2, resid2):
    return np.log2(1 + h2 / (1 + resid2))


def test_re_capacity_point_values():
    one = np.ones((1, 1), dtype=np.complex128)
    cap, _ = re_capacity(one, one, one)            # residual 0, |H|^2 = 1
    assert cap[0, 0] == pytest.approx(1.0)
    cap, _ = re_capacity(np.sqrt(3) * one, np.sqrt(3) * one, one)
    assert cap[0, 0] == pytest.approx(2.0)
    cap, _ = re_capacity(one, 2 * one, one)        # residual magnitude 1
    assert cap[0, 0] == pytest.approx(np.log2(1.5))


def test_capped_capacity():
    unc = np.array([3.5, 1.2])
    assert np.allclose(capped_capacity(unc, np.array([2.0, 2.0])), [2.0, 1.2])
    assert capped_capacity(unc, None) is unc


def test_network_fair_capacity_values():
    assert network_fair_capacity([2.0, 2.0]) == pytest.approx(2.0)
    assert network_fair_capacity([1.0, 4.0]) == pytest.approx(2.0)
    assert network_fair_capacity([0.0, 5.0]) == 0.0


def test_network_capacity_user_permutation_invariant(rng):
    means = list(rng.random(4) + 0.1)
    assert network_fair_capacity(means) == pytest.approx(
        network_fair_capacity(means[::-1]))


def test_capacity_monotonic_in_residual_and_gain():
    h2 = np.linspace(0.5, 4.0, 20)
    r2 = np.linspace(0.0, 3.0, 20)
    caps_h = _scalar_cap(h2, 1.0)
    caps_r = _scalar_cap(2.0, r2)
    assert np.all(np.diff(caps_h) > 0)
    assert np.all(np.diff(caps_r) < 0)


def _random_state(rng, users=2, m=6, l=4, capped=False):
    cfrs, recs, sents, caps = [], [], [], []
    for _ in range(users):
        cfr = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        sent = np.exp(1j * np.pi / 2 * rng.integers(0, 4, size=(m, l)))
        noise = 0.3 * (rng.standard_normal((m, l))
                       + 1j * rng.standard_normal((m, l)))
        rec = cfr[:, None] * sent + noise
        cfrs.append(cfr)
        recs.append(rec)
        sents.append(sent)
        caps.append(np.full((m, l), 2.0) if capped else None)
    return CapacityState.from_predictions(cfrs, recs, sents, caps)


def test_zero_updates_give_zero_delta(rng):
    state = _random_state(rng)
    updates = {u: (1, np.zeros(6, dtype=np.complex128)) for u in range(2)}
    delta, _ = state.capacity_delta(updates)
    assert delta == pytest.approx(0.0, abs=1e-12)


def test_reducing_residual_raises_single_user_delta(rng):
    state = _random_state(rng, users=1)
    col = 2
    shrink = -0.5 * state.residuals[0][:, col]
    delta, _ = state.capacity_delta({0: (col, shrink)})
    assert delta > 0


@pytest.mark.parametrize("capped", [False, True])
def test_delta_matches_scratch_recomputation(rng, capped):
    state = _random_state(rng, capped=capped)
    col = 3
    updates = {
        u: (col, 0.2 * (rng.standard_normal(6) + 1j * rng.standard_normal(6)))
        for u in range(2)
    }
    delta, _ = state.capacity_delta(updates)

    # scratch: recompute the affected column sums from first principles
    prods_new, prods_old = 1.0, 1.0
    for u in range(2):
        resid_new = state.residuals[u][:, col] + updates[u][1]
        cap_new = np.log2(1 + state.cfr_power[u][:, col]
                          / (1 + np.abs(resid_new) ** 2))
        cap_old = state.uncapped[u][:, col]
        if capped:
            cap_new = np.minimum(2.0, cap_new)
            cap_old = np.minimum(2.0, cap_old)
        prods_new *= cap_new.sum()
        prods_old *= cap_old.sum()
    assert delta == pytest.approx(prods_new - prods_old, abs=1e-12)


def test_commit_then_delta_is_consistent(rng):
    state = _random_state(rng)
    col = 0
    updates = {
        u: (col, 0.1 * (rng.standard_normal(6) + 1j * rng.standard_normal(6)))
        for u in range(2)
    }
    delta, new_cols = state.capacity_delta(updates)
    state.commit(updates, new_cols)
    # after committing, the same updates relative to the new residuals
    # would be zero-deltas
    zero = {u: (col, np.zeros(6, dtype=np.complex128)) for u in range(2)}
    d2, _ = state.capacity_delta(zero)
    assert d2 == pytest.approx(0.0, abs=1e-12)


def test_update_column_out_of_range(rng):
    state = _random_state(rng)
    with pytest.raises(IndexError):
        state.capacity_delta({0: (99, np.zeros(6, dtype=np.complex128))})


def test_column_geometric_capacity_rises_on_positive_commit(rng):
    state = _random_state(rng)
    before = state.column_geometric_capacity()
    col = 1
    shrink = {u: (col, -0.4 * state.residuals[u][:, col]) for u in range(2)}
    delta, new_cols = state.capacity_delta(shrink)
    assert delta > 0
    state.commit(shrink, new_cols)
    assert state.column_geometric_capacity() > before


def test_user_mean_with_mask():
    cap = np.array([[1.0, 3.0], [5.0, 7.0]])
    mask = np.array([[True, False], [False, True]])
    assert user_mean_capacity(cap, mask) == pytest.approx(4.0)
    assert user_mean_capacity(cap) == pytest.approx(4.0)
    assert user_mean_capacity(cap, np.zeros_like(mask)) == 0.0
