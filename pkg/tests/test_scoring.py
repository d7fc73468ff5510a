"""Score formula, exclusion rules and candidate pool construction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwmark import (
    ActivationProfile,
    DegenerateProfileError,
    PoolShortfallError,
    ScoreMap,
    build_candidate_pool,
    score_layer,
)

from factories import make_bundle, make_layer


def profile(name, values):
    return ActivationProfile(name, np.asarray(values, dtype=np.float32))


def test_quality_term_prefers_large_weights():
    # min-activation channel is structurally excluded, so park it on col 0
    layer = make_layer("a", [[2, 1, 5]])
    smap = score_layer(layer, profile("a", [0.5, 1.0, 2.0]), alpha=1.0, beta=0.0)
    assert smap.scores[0, 1] == 1.0
    assert smap.scores[0, 2] == pytest.approx(0.2)
    assert smap.scores[0, 2] < smap.scores[0, 1]


def test_robustness_term_direct_values():
    layer = make_layer("a", [[2, 2, 2]])
    smap = score_layer(layer, profile("a", [1.0, 2.0, 4.0]), alpha=0.0, beta=1.0)
    assert smap.excluded[0, 0]  # min-activation channel
    assert smap.scores[0, 1] == pytest.approx(4.0 / 1.0)
    assert smap.scores[0, 2] == pytest.approx(4.0 / 3.0)
    # channel with the largest activation gets the smallest score
    assert smap.scores[0, 2] == smap.scores[0, ~smap.excluded[0]].min()


@pytest.mark.parametrize("alpha,beta", [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)])
def test_extreme_levels_always_excluded(alpha, beta):
    layer = make_layer("a", [[7, -7, 3]])
    smap = score_layer(layer, profile("a", [0.5, 1.0, 2.0]), alpha, beta)
    assert smap.excluded[0, 0] and smap.excluded[0, 1]
    assert not smap.excluded[0, 2]


def test_zero_weights_excluded():
    # reciprocal magnitude has no finite value at level 0
    layer = make_layer("a", [[0, 3]])
    smap = score_layer(layer, profile("a", [0.5, 1.0]), alpha=0.5, beta=0.5)
    assert smap.excluded[0, 0]
    assert np.isfinite(smap.scores[0, 1])


def test_int8_extremes():
    layer = make_layer("a", [[127, -127, 100]], bit_width=8)
    smap = score_layer(layer, profile("a", [0.5, 1.0, 2.0]), 0.5, 0.5)
    assert list(smap.excluded[0]) == [True, True, False]


def test_non_excluded_scores_finite_and_positive():
    rng = np.random.default_rng(0)
    layer = make_layer("a", rng.integers(-7, 8, (20, 20)))
    smap = score_layer(layer, profile("a", rng.uniform(0.1, 5.0, 20)), 0.5, 0.5)
    vals = smap.scores[~smap.excluded]
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)


def test_degenerate_profile_rejected():
    layer = make_layer("a", [[1, 2]])
    with pytest.raises(DegenerateProfileError, match="degenerate activation profile"):
        score_layer(layer, profile("a", [3.0, 3.0]), 0.5, 0.5)


def test_profile_length_mismatch_rejected():
    layer = make_layer("a", [[1, 2]])
    with pytest.raises(ValueError, match="profile length"):
        score_layer(layer, profile("a", [1.0, 2.0, 3.0]), 0.5, 0.5)


def test_coefficients_validated():
    layer = make_layer("a", [[1, 2]])
    with pytest.raises(ValueError):
        score_layer(layer, profile("a", [1.0, 2.0]), -0.1, 0.5)
    with pytest.raises(ValueError):
        score_layer(layer, profile("a", [1.0, 2.0]), 0.0, 0.0)


# ---------------------------------------------------------------------------
# candidate pool
# ---------------------------------------------------------------------------


def _score_map(scores, alpha=0.5, beta=0.5):
    scores = np.asarray(scores, dtype=np.float64)
    excluded = ~np.isfinite(scores)
    return ScoreMap("test", scores, excluded, alpha, beta)


def test_pool_takes_smallest_scores():
    smap = _score_map([[3.0, 1.0], [2.0, np.inf]])
    pool = build_candidate_pool(smap, 2)
    assert pool.positions == ((0, 1), (1, 0))


def test_pool_tie_breaks_by_flat_index():
    scores = np.full((3, 4), 9.0)
    scores.ravel()[5] = 1.0
    scores.ravel()[9] = 1.0
    pool = build_candidate_pool(_score_map(scores), 1)
    assert pool.positions == ((1, 1),)  # flat index 5
    pool2 = build_candidate_pool(_score_map(scores), 2)
    assert pool2.positions == ((1, 1), (2, 1))  # 5 then 9


def test_pool_matches_full_sort_oracle():
    rng = np.random.default_rng(123)
    layer = make_layer("a", rng.integers(-7, 8, (64, 64)))
    prof = profile("a", rng.uniform(0.1, 10.0, 64))
    smap = score_layer(layer, prof, 0.5, 0.5)
    pool = build_candidate_pool(smap, 100)

    # independent oracle: sort every scored position by (score, flat index)
    entries = []
    for r in range(64):
        for c in range(64):
            if not smap.excluded[r, c]:
                entries.append((smap.scores[r, c], r * 64 + c))
    entries.sort()
    expected = tuple((i // 64, i % 64) for _, i in entries[:100])
    assert pool.positions == expected


def test_pool_scale_invariance():
    rng = np.random.default_rng(7)
    w = rng.integers(-6, 7, (16, 16))
    acts = rng.uniform(0.5, 5.0, 16)
    layer = make_layer("a", w)
    base = build_candidate_pool(score_layer(layer, profile("a", acts), 0.3, 0.7), 40)
    for c in (0.001, 3.0, 1e4):
        scaled = build_candidate_pool(
            score_layer(layer, profile("a", acts * c), 0.3, 0.7), 40
        )
        assert scaled.positions == base.positions


def test_beta_zero_monotonicity():
    rng = np.random.default_rng(3)
    layer = make_layer("a", rng.integers(-6, 7, (10, 10)))
    smap = score_layer(layer, profile("a", rng.uniform(0.1, 5.0, 10)), 1.0, 0.0)
    w = np.abs(layer.weights.astype(int))
    ok = ~smap.excluded
    for (r1, c1) in zip(*np.nonzero(ok)):
        for (r2, c2) in zip(*np.nonzero(ok)):
            if w[r1, c1] > w[r2, c2]:
                assert smap.scores[r1, c1] < smap.scores[r2, c2]


def test_alpha_zero_pool_is_column_aligned_to_top_activations():
    rows, cols = 6, 8
    layer = make_layer("a", np.full((rows, cols), 3))
    acts = np.array([0.2, 1.0, 5.0, 2.0, 7.0, 0.9, 3.0, 6.0])
    smap = score_layer(layer, profile("a", acts), 0.0, 1.0)
    pool = build_candidate_pool(smap, rows * 3)  # three full columns
    selected_cols = {c for _, c in pool.positions}
    assert selected_cols == {4, 7, 2}  # three highest-activation channels
    unselected = set(range(cols)) - selected_cols
    assert min(acts[list(selected_cols)]) >= max(acts[list(unselected)])


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_no_excluded_position_in_any_pool(seed):
    rng = np.random.default_rng(seed)
    rows, cols = int(rng.integers(2, 12)), int(rng.integers(2, 12))
    layer = make_layer("a", rng.integers(-7, 8, (rows, cols)))
    acts = rng.uniform(0.0, 3.0, cols)
    if np.all(acts == acts[0]):
        acts[0] += 1.0
    smap = score_layer(layer, profile("a", acts), 0.5, 0.5)
    available = smap.non_excluded
    if available == 0:
        return
    pool = build_candidate_pool(smap, min(10, available))
    for r, c in pool.positions:
        assert not smap.excluded[r, c]


def test_pool_shortfall_names_layer_and_shortfall():
    layer = make_layer("big", [[1, 2]])
    smap = score_layer(layer, profile("big", [0.5, 1.0]), 0.5, 0.5)
    with pytest.raises(PoolShortfallError, match="'big'.*short by 4"):
        build_candidate_pool(smap, 5)
