import itertools

import numpy as np
import pytest

from cfbeam.fingerprint import GridMap, from_field
from cfbeam.mobility import BlockageModel, MobilityModel, TransitionKernel, build_transition_kernel
from cfbeam.rbe import (LocationPmf, RbeTracker, rbe_choose_beam, rbe_estimate_gains,
                        rbe_estimate_location, rbe_predict, rbe_select_training, rbe_update)


def brute_predict(p, offsets, probs, velocity):
    """Nested-loop sum over source cells and kernel offsets, clamped at the walls."""
    l1, l2 = p.shape
    out = np.zeros_like(p)
    for x1 in range(l1):
        for x2 in range(l2):
            if p[x1, x2] == 0:
                continue
            for (a, b), q in zip(offsets, probs):
                y1 = min(max(x1 + velocity[0] + a, 0), l1 - 1)
                y2 = min(max(x2 + velocity[1] + b, 0), l2 - 1)
                out[y1, y2] += p[x1, x2] * q
    return out / out.sum()


def brute_update(p, field, training, alpha, sigma_v):
    out = np.zeros_like(p)
    l1, l2 = p.shape
    for x1 in range(l1):
        for x2 in range(l2):
            like = 1.0
            for beam, gamma in training:
                g = field[x1, x2, beam]
                like *= (alpha * np.exp(-(gamma - g) ** 2 / (2 * sigma_v**2))
                         + (1 - alpha) * np.exp(-gamma**2 / (2 * sigma_v**2)))
            out[x1, x2] = like * p[x1, x2]
    return out / out.sum()


def test_point_mass_pure_shift():
    grid = GridMap(30, 40)
    k = build_transition_kernel(MobilityModel(sigma_w=0.0))
    out = rbe_predict(LocationPmf.point_mass(grid, (10, 20)), k, (3, 0))
    assert out.probabilities[13, 20] == 1.0
    assert out.total() == 1.0


def test_uniform_is_invariant_on_torus():
    grid = GridMap(12, 9)
    k = build_transition_kernel(MobilityModel(sigma_w=1.3))
    out = rbe_predict(LocationPmf.uniform(grid), k, (2, -1), boundary="wrap")
    np.testing.assert_allclose(out.probabilities, 1 / grid.num_cells, rtol=1e-12)


def test_hand_kernel_on_7x7_grid():
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=2)))
    probs = np.array([1, 2, 1, 2, 4, 2, 1, 2, 1], dtype=float) / 16
    kernel = TransitionKernel(offsets, probs)
    grid = GridMap(7, 7)
    out = rbe_predict(LocationPmf.point_mass(grid, (3, 3)), kernel, (1, 0)).probabilities
    expected = np.zeros((7, 7))
    expected[3:6, 2:5] = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) / 16
    np.testing.assert_allclose(out, expected, atol=1e-15)
    # against the corner the off-grid mass folds onto the edge cells
    corner = rbe_predict(LocationPmf.point_mass(grid, (6, 0)), kernel, (1, 0)).probabilities
    np.testing.assert_allclose(corner, brute_predict(LocationPmf.point_mass(grid, (6, 0)).probabilities,
                                                     offsets, probs, (1, 0)), atol=1e-15)
    assert corner[6, 0] == pytest.approx(12 / 16)
    assert corner[6, 1] == pytest.approx(4 / 16)


def test_predict_matches_brute_force_random_belief():
    rng = np.random.default_rng(4)
    grid = GridMap(9, 6)
    p = rng.random(grid.shape)
    p[p < 0.4] = 0
    p /= p.sum()
    for model in [MobilityModel((1, 0), sigma_w=0.8),
                  MobilityModel((2, 1), sigma_w=1.0, covariance=[[0.6, 0.2], [0.2, 0.5]])]:
        k = build_transition_kernel(model)
        out = rbe_predict(LocationPmf(p.copy()), k, model.velocity).probabilities
        np.testing.assert_allclose(out, brute_predict(p, k.offsets, k.probabilities,
                                                      model.velocity), atol=1e-13)


def test_unknown_boundary_rule():
    grid = GridMap(3, 3)
    with pytest.raises(ValueError):
        rbe_predict(LocationPmf.uniform(grid), build_transition_kernel(MobilityModel()),
                    (0, 0), boundary="reflect")


def two_cell_db(rows):
    """Two cells along x1, one column; rows[c] are the beam gains at cell c."""
    return from_field(np.array(rows, dtype=float)[:, None, :])


def test_select_point_mass_collapses():
    rng = np.random.default_rng(0)
    db = from_field(rng.uniform(0, 40, (5, 4, 16)))
    sel = rbe_select_training(LocationPmf.point_mass(db.grid, (2, 3)), db, 0.8, 4)
    expected = np.argsort(-db.gain_field[2, 3], kind="stable")[:4]
    assert sel == expected.tolist()


def test_select_two_cell_average():
    db = two_cell_db([[10, 14], [20, 15]])
    belief = LocationPmf(np.array([[0.5], [0.5]]))
    assert rbe_select_training(belief, db, 0.8, 1) == [0]
    assert rbe_select_training(belief, db, 0.8, 2) == [0, 1]


def test_select_budget_limits_and_ties():
    db = from_field(np.full((2, 2, 6), 3.0))
    belief = LocationPmf.uniform(db.grid)
    assert rbe_select_training(belief, db, 0.8, 6) == list(range(6))
    assert rbe_select_training(belief, db, 0.8, 3) == [0, 1, 2]
    with pytest.raises(ValueError):
        rbe_select_training(belief, db, 0.8, 7)


def test_select_invariant_to_belief_scale():
    rng = np.random.default_rng(9)
    db = from_field(rng.uniform(0, 40, (6, 5, 12)))
    p = rng.random(db.grid.shape)
    base = rbe_select_training(LocationPmf(p / p.sum()), db, 0.7, 5)
    for scale in (1e-6, 3.0, 1e8):
        assert rbe_select_training(LocationPmf(p * scale), db, 0.7, 5) == base


def test_two_cell_bayes():
    db = two_cell_db([[10.0], [0.0]])
    prior = LocationPmf(np.array([[0.5], [0.5]]))
    post = rbe_update(prior, [(0, 10.0)], db, BlockageModel(alpha=0.8, sigma_v=6.0))
    like_a = 0.8 * 1.0 + 0.2 * np.exp(-100 / 72)
    like_b = 0.8 * np.exp(-100 / 72) + 0.2 * np.exp(-100 / 72)
    assert post.probabilities[0, 0] == pytest.approx(like_a / (like_a + like_b), rel=1e-12)
    assert post.total() == pytest.approx(1.0, abs=1e-12)


def test_sharp_likelihood_concentrates():
    db = from_field(np.arange(12, dtype=float).reshape(4, 3, 1) * 2.0)
    post = rbe_update(LocationPmf.uniform(db.grid), [(0, 14.0)], db,
                      BlockageModel(alpha=1.0, sigma_v=0.05))
    assert post.probabilities[2, 1] == pytest.approx(1.0, abs=1e-12)


def test_noiseless_injective_column_gives_point_mass():
    db = from_field(np.arange(20, dtype=float).reshape(5, 4, 1) + 1)
    post = rbe_update(LocationPmf.uniform(db.grid), [(0, 8.0)], db,
                      BlockageModel(alpha=1.0, sigma_v=0.0))
    expected = np.zeros((5, 4))
    expected[1, 3] = 1.0
    np.testing.assert_array_equal(post.probabilities, expected)


def test_flat_likelihood_keeps_prior():
    db = from_field(np.full((3, 3, 2), 17.0))
    rng = np.random.default_rng(1)
    p = rng.random((3, 3))
    p /= p.sum()
    post = rbe_update(LocationPmf(p), [(0, 5.0), (1, 30.0)], db, BlockageModel())
    np.testing.assert_allclose(post.probabilities, p, rtol=1e-12)


def test_update_independent_of_result_order():
    rng = np.random.default_rng(2)
    db = from_field(rng.uniform(0, 40, (6, 4, 8)))
    prior = LocationPmf.uniform(db.grid)
    results = [(1, 20.0), (5, 3.5), (7, 31.0)]
    a = rbe_update(prior, results, db, BlockageModel())
    b = rbe_update(prior, results[::-1], db, BlockageModel())
    np.testing.assert_allclose(a.probabilities, b.probabilities, rtol=1e-12, atol=1e-300)


def test_total_underflow_falls_back_to_prior():
    db = from_field(np.array([[[10.0]], [[20.0]]]))
    prior = LocationPmf(np.array([[0.3], [0.7]]))
    post = rbe_update(prior, [(0, 15.0)], db, BlockageModel(alpha=1.0, sigma_v=0.0))
    assert post.underflow
    np.testing.assert_array_equal(post.probabilities, prior.probabilities)


def test_large_mismatch_does_not_underflow_in_log_space():
    db = from_field(np.array([[[0.0]], [[1.0]]]))
    post = rbe_update(LocationPmf(np.array([[0.5], [0.5]])), [(0, 400.0)], db,
                      BlockageModel(alpha=1.0, sigma_v=1.0))
    assert not post.underflow
    # ratio exp(((400)^2 - 399^2) / 2) overwhelms cell 0
    assert post.probabilities[1, 0] == 1.0


def test_update_requires_results():
    db = from_field(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        rbe_update(LocationPmf.uniform(db.grid), [], db, BlockageModel())


def test_filter_matches_brute_force_20_frames():
    rng = np.random.default_rng(123)
    db = from_field(rng.uniform(0, 30, (5, 5, 4)))
    field = db.gain_field  # the stored (float32) fingerprint values
    model = MobilityModel((1, 0), sigma_w=0.7)
    kernel = build_transition_kernel(model)
    blockage = BlockageModel(alpha=0.75, sigma_v=4.0)
    ours = LocationPmf.point_mass(db.grid, (0, 2))
    ref = ours.probabilities.copy()
    for _ in range(20):
        ours = rbe_predict(ours, kernel, model.velocity)
        ref = brute_predict(ref, kernel.offsets, kernel.probabilities, model.velocity)
        np.testing.assert_allclose(ours.probabilities, ref, atol=1e-9, rtol=0)
        beams = rbe_select_training(ours, db, blockage.alpha, 2)
        results = [(b, float(rng.uniform(-5, 35))) for b in beams]
        ours = rbe_update(ours, results, db, blockage)
        ref = brute_update(ref, field, results, blockage.alpha, blockage.sigma_v)
        np.testing.assert_allclose(ours.probabilities, ref, atol=1e-9, rtol=0)


def test_location_estimates():
    grid = GridMap(8, 6)
    np.testing.assert_array_equal(rbe_estimate_location(LocationPmf.point_mass(grid, (5, 3))),
                                  [5, 3])
    p = np.zeros(grid.shape)
    p[0, 0] = p[2, 0] = 0.5
    np.testing.assert_allclose(rbe_estimate_location(LocationPmf(p)), [1, 0])
    p = np.zeros(grid.shape)
    cells = [(1, 1), (4, 2), (7, 5), (3, 0)]
    w = [0.1, 0.2, 0.3, 0.4]
    for c, q in zip(cells, w):
        p[c] = q
    direct = sum(q * np.array(c, dtype=float) for c, q in zip(cells, w))
    np.testing.assert_allclose(rbe_estimate_location(LocationPmf(p)), direct, rtol=1e-14)


def test_gain_estimates():
    field = np.zeros((3, 3, 4))
    field[1, 2] = [10.0, 4.0, 22.0, -3.0]
    db = from_field(field)
    belief = LocationPmf.point_mass(db.grid, (1, 2))
    est = rbe_estimate_gains(belief, db, 0.8, [(2, 17.5)])
    assert est[2] == 17.5
    assert est[0] == pytest.approx(8.0, abs=1e-12)
    est = rbe_estimate_gains(belief, db, 1.0, [])
    np.testing.assert_array_equal(est, field[1, 2])


def test_choose_beam():
    assert rbe_choose_beam(np.array([1.0, 3.0, 2.0])) == 1
    assert rbe_choose_beam(np.full(5, 2.5)) == 0
    g = np.array([4.0, -1.0, 7.5, 7.4])
    assert rbe_choose_beam(g + 123.0) == rbe_choose_beam(g) == 2


def test_tracker_frame_cycle():
    rng = np.random.default_rng(5)
    db = from_field(rng.uniform(0, 40, (20, 5, 8)))
    model = MobilityModel((1, 0), sigma_w=1.0)
    tr = RbeTracker(db, build_transition_kernel(model), model.velocity, BlockageModel(),
                    3, LocationPmf.point_mass(db.grid, (2, 2)))
    for _ in range(5):
        training = tr.begin_frame()
        assert len(training) == 3
        beam = tr.end_frame([(b, float(db.gain_field[5, 2, b])) for b in training])
        assert 0 <= beam < 8
        assert abs(tr.state.belief.total() - 1) <= 1e-9
    assert tr.state.frame == 5
    with pytest.raises(ValueError):
        RbeTracker(db, build_transition_kernel(model), (1, 0), BlockageModel(), 9,
                   LocationPmf.uniform(db.grid))
