import numpy as np
import pytest
from conftest import (
    grid_from,
    oracle_delta,
    oracle_knn_values,
    oracle_local_density,
    oracle_sq_dist,
    random_grid,
)

from setok import density
from setok.errors import KTooLarge


def test_knn_line_grid():
    grid = grid_from([0.0, 1.0, 5.0], 1, 3, 1)
    vals = density.knn_sq_distances(grid, (0, 1), 2)
    assert vals.tolist() == [1.0, 16.0]


def test_knn_uniform_grid_zeros():
    grid = grid_from([2.5] * 12, 3, 4, 1)
    for k in (1, 5, 11):
        assert density.knn_sq_distances(grid, (1, 2), k).tolist() == [0.0] * k


def test_knn_matches_oracle(rng):
    grid = random_grid(rng, 2, 2, 2)
    feats = grid.features64()
    vals = density.knn_sq_distances(grid, (1, 0), 3)
    assert vals.tolist() == oracle_knn_values(feats, 2, 3)


def test_knn_k_too_large():
    grid = grid_from([0.0, 1.0], 1, 2, 1)
    with pytest.raises(KTooLarge):
        density.knn_sq_distances(grid, (0, 0), 2)
    with pytest.raises(KTooLarge):
        density.local_density(grid, 2)


def test_density_uniform_is_one():
    grid = grid_from([7.0] * 16, 4, 4, 1)
    rho = density.local_density(grid, 3)
    assert (rho == 1.0).all()


def test_density_two_points():
    grid = grid_from([0.0, 2.0], 1, 2, 1)
    rho = density.local_density(grid, 1)
    expected = np.exp(np.float64(-4.0))
    assert rho.shape == (1, 2)
    assert (rho == expected).all()


def test_density_line_grid_hand_values():
    grid = grid_from([0.0, 1.0, 5.0], 1, 3, 1)
    rho = density.local_density(grid, 2).reshape(-1)
    expected = np.exp(np.array([-13.0, -8.5, -20.5]))
    assert (rho == expected).all()


def test_delta_line_grid_hand_values():
    grid = grid_from([0.0, 1.0, 5.0], 1, 3, 1)
    rho = density.local_density(grid, 2)
    delta = density.min_distance_to_denser(grid, rho).reshape(-1)
    assert delta.tolist() == [1.0, 16.0, 16.0]


def test_delta_uniform_all_zero():
    grid = grid_from([3.0] * 9, 3, 3, 1)
    rho = density.local_density(grid, 2)
    delta = density.min_distance_to_denser(grid, rho)
    assert (delta == 0.0).all()


def test_delta_otherwise_branch_is_argmax_tie_set(rng):
    # a location has no strictly denser peer iff it sits in the argmax-rho
    # tie set, so exactly that set takes the max-distance branch
    for _ in range(10):
        grid = random_grid(rng, 4, 5, 3)
        rho = density.local_density(grid, 4).reshape(-1)
        delta = density.min_distance_to_denser(grid, rho.reshape(4, 5)).reshape(-1)
        feats = grid.features64()
        max_rho = rho.max()
        for i in range(20):
            denser = [j for j in range(20) if rho[j] > rho[i]]
            assert (len(denser) == 0) == (rho[i] == max_rho)
            dists = [oracle_sq_dist(feats[i], feats[j]) for j in range(20)]
            if denser:
                assert delta[i] == min(dists[j] for j in denser)
            else:
                assert delta[i] == max(dists)
        assert (delta >= 0).all()


def test_density_matches_exhaustive_oracle(rng):
    for _ in range(10):
        h, w, d = int(rng.integers(2, 8)), int(rng.integers(2, 8)), int(rng.integers(1, 6))
        k = int(rng.integers(1, h * w))
        grid = random_grid(rng, h, w, d)
        rho = density.local_density(grid, k).reshape(-1)
        expected = oracle_local_density(grid.features64(), k)
        assert (rho == expected).all()


def test_delta_matches_oracle(rng):
    for _ in range(10):
        grid = random_grid(rng, 5, 5, 2)
        rho = density.local_density(grid, 6)
        delta = density.min_distance_to_denser(grid, rho)
        expected = oracle_delta(grid.features64(), rho.reshape(-1))
        assert (delta.reshape(-1) == expected).all()


def test_scores_line_grid():
    grid = grid_from([0.0, 1.0, 5.0], 1, 3, 1)
    scores = density.seed_scores(grid, 2)
    expected = np.exp(np.array([-13.0, -8.5, -20.5])) * np.array([1.0, 16.0, 16.0])
    assert (scores.score.reshape(-1) == expected).all()
    assert int(np.argmax(scores.score)) == 1
    assert (scores.score == scores.rho * scores.delta).all()
    assert scores.knn_k == 2


def test_scores_uniform_zero():
    grid = grid_from([1.0] * 8, 2, 4, 1)
    scores = density.seed_scores(grid, 3)
    assert (scores.score == 0.0).all()


def test_top_scores_one_per_blob(rng):
    # two tight clusters of unequal size, far apart in feature space
    values = np.zeros((1, 10, 1), dtype=np.float32)
    values[0, :6, 0] = 0.0
    values[0, 6:, 0] = 30.0
    values += rng.normal(0, 1e-3, size=values.shape).astype(np.float32)
    grid = grid_from(values, 1, 10, 1)
    scores = density.seed_scores(grid, 3)
    top2 = np.argsort(-scores.score.reshape(-1), kind="stable")[:2]
    sides = {int(i) < 6 for i in top2}
    assert sides == {True, False}


def test_rho_in_unit_interval(rng):
    grid = random_grid(rng, 6, 6, 4)
    scores = density.seed_scores(grid, 5)
    assert (scores.rho > 0).all() and (scores.rho <= 1).all()
    assert (scores.delta >= 0).all()


def test_spatial_permutation_invariance(rng):
    grid = random_grid(rng, 4, 4, 3)
    scores = density.seed_scores(grid, 5)
    perm = rng.permutation(16)
    permuted = grid_from(grid.features64()[perm].astype(np.float32), 4, 4, 3)
    scores_p = density.seed_scores(permuted, 5)
    assert (scores_p.rho.reshape(-1)[np.argsort(perm)] == scores.rho.reshape(-1)).all()
    assert (scores_p.delta.reshape(-1)[np.argsort(perm)] == scores.delta.reshape(-1)).all()


def test_translation_invariance(rng):
    # sixteenths make the +2 shift exact in float32, so the squared
    # distances (and hence rho/delta/score) are bitwise unchanged
    values = rng.integers(-64, 64, size=(5, 4, 3)).astype(np.float32) / 16.0
    grid = grid_from(values, 5, 4, 3)
    shifted = grid_from(values + np.float32(2.0), 5, 4, 3)
    a = density.seed_scores(grid, 6)
    b = density.seed_scores(shifted, 6)
    assert (a.rho == b.rho).all()
    assert (a.delta == b.delta).all()
    assert (a.score == b.score).all()
