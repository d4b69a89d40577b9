"""Lattice windows, window sums, densities, and file formats."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barw.lattice import (
    Boundary,
    Configuration,
    DensityField,
    LatticeShape,
    ball_volume,
    centered_distance_grid,
    compute_density,
    load_snapshot,
    save_snapshot,
    window_counts,
    window_means_float,
    write_pgm,
)
from barw.rng import StreamRng


def brute_window_counts(occ: np.ndarray, R: int, boundary: Boundary) -> np.ndarray:
    """O(sites * volume) reference implementation of sup-norm ball sums."""
    sides = occ.shape
    out = np.zeros(sides, dtype=np.int64)
    for idx in np.ndindex(*sides):
        total = 0
        for off in np.ndindex(*((2 * R + 1,) * len(sides))):
            y = [i + o - R for i, o in zip(idx, off)]
            if boundary is Boundary.PERIODIC:
                y = [c % s for c, s in zip(y, sides)]
            elif any(not 0 <= c < s for c, s in zip(y, sides)):
                continue
            total += int(occ[tuple(y)])
        out[idx] = total
    return out


def test_ball_volume_values():
    assert ball_volume(0, 1) == 1
    assert ball_volume(1, 1) == 3
    assert ball_volume(16, 1) == 33
    assert ball_volume(1, 2) == 9
    assert ball_volume(2, 3) == 125


def test_ball_volume_rejects_bad_args():
    with pytest.raises(ValueError):
        ball_volume(-1, 1)
    with pytest.raises(ValueError):
        ball_volume(1, 0)


def test_window_counts_line_torus_matches_brute_force():
    rng = StreamRng(101)
    occ = (rng.random(17) < 0.5).astype(np.uint8)
    for R in (0, 1, 3, 8, 9):
        fast = window_counts(occ, R, Boundary.PERIODIC)
        slow = brute_window_counts(occ, R, Boundary.PERIODIC)
        np.testing.assert_array_equal(fast, slow)


def test_window_counts_line_zero_matches_brute_force():
    rng = StreamRng(102)
    occ = (rng.random(17) < 0.5).astype(np.uint8)
    for R in (0, 1, 3, 8, 9):
        fast = window_counts(occ, R, Boundary.ZERO_PADDED)
        slow = brute_window_counts(occ, R, Boundary.ZERO_PADDED)
        np.testing.assert_array_equal(fast, slow)


def test_window_counts_plane_matches_brute_force():
    rng = StreamRng(103)
    occ = (rng.random((9, 11)) < 0.4).astype(np.uint8)
    for boundary in Boundary:
        for R in (1, 2, 5):
            fast = window_counts(occ, R, boundary)
            slow = brute_window_counts(occ, R, boundary)
            np.testing.assert_array_equal(fast, slow, err_msg=f"{boundary} R={R}")


def test_window_counts_batch_axis_is_per_replica():
    rng = StreamRng(104)
    occ = (rng.random((4, 13)) < 0.5).astype(np.uint8)
    batched = window_counts(occ, 2, Boundary.PERIODIC, batch_axes=1)
    for r in range(4):
        np.testing.assert_array_equal(
            batched[r], window_counts(occ[r], 2, Boundary.PERIODIC)
        )


@settings(deadline=None, max_examples=40)
@given(
    side=st.integers(min_value=1, max_value=24),
    R=st.integers(min_value=0, max_value=12),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    boundary=st.sampled_from(list(Boundary)),
)
def test_window_counts_property_line(side, R, seed, boundary):
    occ = (StreamRng(seed).random(side) < 0.5).astype(np.uint8)
    np.testing.assert_array_equal(
        window_counts(occ, R, boundary), brute_window_counts(occ, R, boundary)
    )


@settings(deadline=None, max_examples=15)
@given(
    s0=st.integers(min_value=1, max_value=8),
    s1=st.integers(min_value=1, max_value=8),
    R=st.integers(min_value=0, max_value=5),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    boundary=st.sampled_from(list(Boundary)),
)
def test_window_counts_property_plane(s0, s1, R, seed, boundary):
    occ = (StreamRng(seed).random((s0, s1)) < 0.5).astype(np.uint8)
    np.testing.assert_array_equal(
        window_counts(occ, R, boundary), brute_window_counts(occ, R, boundary)
    )


def test_window_means_float_matches_counts_on_binary_input():
    occ = (StreamRng(105).random(31) < 0.5).astype(np.uint8)
    counts = window_counts(occ, 4, Boundary.PERIODIC)
    means = window_means_float(occ.astype(np.float64), 4, Boundary.PERIODIC)
    np.testing.assert_allclose(means, counts / 9.0, rtol=0, atol=1e-12)


def test_compute_density_single_particle():
    shape = LatticeShape.line(21)
    cfg = Configuration.single_at_center(shape)
    dens = compute_density(cfg, 3)
    center = shape.center[0]
    assert dens.values[center] == pytest.approx(1.0 / 7.0)
    assert dens.values[center + 3] == pytest.approx(1.0 / 7.0)
    assert dens.values[center + 4] == 0.0


def test_compute_density_all_ones_is_one():
    shape = LatticeShape.cube(2, 9)
    dens = compute_density(Configuration.all_ones(shape), 2)
    np.testing.assert_allclose(dens.values, 1.0)


def test_coord_to_index_wraps_on_torus_only():
    torus = LatticeShape.line(10)
    assert torus.coord_to_index(6) == (1,)  # 6 + 5 wraps past 10
    hard = LatticeShape.line(10, Boundary.ZERO_PADDED)
    with pytest.raises(ValueError):
        hard.coord_to_index(6)
    assert hard.coord_to_index(-5) == (0,)


def test_contains_ball():
    torus = LatticeShape.line(11)
    assert torus.contains_ball(0, 5)
    assert not torus.contains_ball(0, 6)
    hard = LatticeShape.line(11, Boundary.ZERO_PADDED)
    assert hard.contains_ball(0, 5)
    assert not hard.contains_ball(1, 5)


def test_configuration_validation():
    shape = LatticeShape.line(5)
    with pytest.raises(ValueError):
        Configuration(shape, np.zeros(6, dtype=np.uint8))
    with pytest.raises(ValueError):
        Configuration(shape, np.array([0, 1, 2, 0, 0]))
    cfg = Configuration(shape, np.array([0, 1, 1, 0, 0]))
    assert cfg.particle_count == 2
    assert not cfg.is_empty()


def test_bernoulli_configuration_is_reproducible():
    shape = LatticeShape.line(1000)
    a = Configuration.bernoulli(shape, 0.3, StreamRng(42))
    b = Configuration.bernoulli(shape, 0.3, StreamRng(42))
    np.testing.assert_array_equal(a.occupancy, b.occupancy)
    assert abs(a.particle_count / 1000 - 0.3) < 0.06


def test_snapshot_round_trip_1d(tmp_path):
    shape = LatticeShape.line(12, Boundary.ZERO_PADDED)
    cfg = Configuration.bernoulli(shape, 0.5, StreamRng(7))
    path = tmp_path / "snap.txt"
    save_snapshot(cfg, path)
    back = load_snapshot(path)
    assert back.shape == cfg.shape
    np.testing.assert_array_equal(back.occupancy, cfg.occupancy)


def test_snapshot_round_trip_2d(tmp_path):
    shape = LatticeShape.cube(2, 7)
    cfg = Configuration.bernoulli(shape, 0.4, StreamRng(8))
    path = tmp_path / "snap.txt"
    save_snapshot(cfg, path)
    back = load_snapshot(path)
    assert back.shape == cfg.shape
    np.testing.assert_array_equal(back.occupancy, cfg.occupancy)


def test_load_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a snapshot\n")
    with pytest.raises(ValueError):
        load_snapshot(path)


def test_write_pgm_header_and_scaling(tmp_path):
    path = tmp_path / "img.pgm"
    write_pgm(np.array([[0.0, 0.5], [1.0, 0.25]]), path, max_value=1.0)
    data = path.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    pixels = data.split(b"255\n", 1)[1]
    # np.rint: 0.5 * 255 = 127.5 rounds half-to-even up to 128, 0.25 * 255 to 64
    assert list(pixels) == [0, 128, 255, 64]


def test_write_pgm_1d_is_single_row(tmp_path):
    path = tmp_path / "row.pgm"
    write_pgm(np.array([0.0, 1.0, 0.5]), path, max_value=1.0)
    assert path.read_bytes().startswith(b"P5\n3 1\n255\n")


def test_centered_distance_grid_line():
    shape = LatticeShape.line(7)
    np.testing.assert_array_equal(
        centered_distance_grid(shape), [3, 2, 1, 0, 1, 2, 3]
    )
    # even side: the far cell is at torus distance side // 2
    even = LatticeShape.line(6)
    np.testing.assert_array_equal(centered_distance_grid(even), [3, 2, 1, 0, 1, 2])


def test_centered_distance_grid_plane_sup_norm():
    shape = LatticeShape.cube(2, 5)
    grid = centered_distance_grid(shape)
    assert grid[2, 2] == 0
    assert grid[0, 0] == 2
    assert grid[2, 0] == 2
    assert grid[1, 2] == 1


def test_density_field_validation():
    shape = LatticeShape.line(4)
    with pytest.raises(ValueError):
        DensityField(shape, np.zeros(5))
    field = DensityField(shape, np.array([0.0, 0.5, 1.0, 0.25]))
    assert field.value_at(0) == 1.0  # center of a side-4 line is index 2
