"""Update rules, comparison dynamics, couplings, and the particle route."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barw.cml import phi
from barw.dynamics import (
    CoupledEnsemble,
    EnsembleMember,
    ModelParams,
    Observers,
    PsiSpec,
    batch_update,
    coupled_run,
    particle_step,
    particle_steps_batch,
    pca_step,
    psi_step,
    run_pair_trajectory,
    run_trajectory,
)
from barw.errors import InvariantError
from barw.lattice import Boundary, Configuration, LatticeShape, compute_density
from barw.rng import StreamRng, UniformField, derive_seeds, field_uniforms

CAP_B = 0.14384103622589046  # log(2 / 1.5) / 2, the mu=2 capped-linear cap


def _params(mu=2.0, R=3, side=30, dim=1, boundary=Boundary.PERIODIC):
    shape = LatticeShape(dim, (side,) * dim, boundary)
    return ModelParams(mu=mu, R=R, shape=shape)


def test_model_params_validation():
    with pytest.raises(ValueError):
        _params(mu=0.0)
    with pytest.raises(ValueError):
        _params(R=-1)
    assert _params(R=2).volume == 5
    assert _params(R=2, dim=2, side=9).volume == 25


def test_pca_step_matches_manual_phi_comparison():
    params = _params(mu=2.0, R=3, side=30)
    cfg = Configuration.bernoulli(params.shape, 0.5, StreamRng(5))
    field = UniformField(77)
    stepped = pca_step(cfg, params, field, 4)
    dens = compute_density(cfg, 3).values
    u = field.uniforms(5, np.arange(30, dtype=np.uint64))
    expected = (u < phi(2.0, dens)).astype(np.uint8)
    np.testing.assert_array_equal(stepped.occupancy, expected)


def test_empty_configuration_is_absorbing():
    params = _params()
    cfg = Configuration.empty(params.shape)
    for seed in range(20):
        out = pca_step(cfg, params, UniformField(seed), 0)
        assert out.is_empty()


def test_psi_step_uses_the_same_field_slice_as_pca_step():
    params = _params(mu=2.0, R=2, side=24)
    psi = PsiSpec.cap_linear(1.5, CAP_B, params)
    cfg = Configuration.all_ones(params.shape)
    field = UniformField(3)
    out = psi_step(cfg, psi, params, field, 0)
    u = field.uniforms(1, np.arange(24, dtype=np.uint64))
    expected = (u < psi(np.ones(24))).astype(np.uint8)
    np.testing.assert_array_equal(out.occupancy, expected)


def test_cap_linear_rejects_caps_crossing_phi():
    params = _params(mu=2.0, R=2)
    PsiSpec.cap_linear(1.5, CAP_B, params)  # the valid reference pair
    with pytest.raises(ValueError):
        PsiSpec.cap_linear(1.5, 0.5, params)  # cap lands beyond the crossing
    with pytest.raises(ValueError):
        PsiSpec.cap_linear(1.0, CAP_B, params)  # slope must exceed 1


def test_linear_dominating_is_tight_on_the_grid():
    params = _params(mu=2.0, R=2)
    psi = PsiSpec.linear_dominating(params)
    vol = params.volume
    w = np.arange(vol + 1) / vol
    assert np.all(psi(w) >= phi(2.0, w))
    # one ulp lower must fail the grid check
    with pytest.raises(ValueError):
        PsiSpec.linear(math.nextafter(psi.m, 0.0), params)


def test_linear_extinction_forcing_flag():
    params = _params(mu=0.9, R=2)
    psi = PsiSpec.linear_dominating(params)
    assert psi.m < 1.0
    assert psi.extinction_forcing
    assert not PsiSpec.linear_dominating(_params(mu=2.0, R=2)).extinction_forcing


def test_monotone_coupling_cap_linear_stays_below():
    """psi <= phi on the grid + shared field => sitewise domination forever."""
    params = _params(mu=2.0, R=3, side=60)
    psi = PsiSpec.cap_linear(1.5, CAP_B, params)
    seeds = derive_seeds(17, 25)
    sites = np.arange(params.shape.n_sites, dtype=np.uint64)
    lower = np.ones((25, 60), dtype=np.uint8)
    upper = lower.copy()
    for n in range(60):
        u = field_uniforms(seeds[:, None], n + 1, sites[None, :])
        lower = batch_update(lower, params, u, psi=psi, batch_axes=1)
        upper = batch_update(upper, params, u, batch_axes=1)
        assert np.all(lower <= upper), f"domination broken at generation {n + 1}"


def test_monotone_coupling_linear_stays_above():
    params = _params(mu=2.0, R=3, side=60)
    psi = PsiSpec.linear_dominating(params)
    seeds = derive_seeds(18, 25)
    sites = np.arange(params.shape.n_sites, dtype=np.uint64)
    lower = np.ones((25, 60), dtype=np.uint8)
    upper = lower.copy()
    for n in range(60):
        u = field_uniforms(seeds[:, None], n + 1, sites[None, :])
        lower = batch_update(lower, params, u, batch_axes=1)
        upper = batch_update(upper, params, u, psi=psi, batch_axes=1)
        assert np.all(lower <= upper), f"domination broken at generation {n + 1}"


def test_particle_step_one_step_frequencies_match_phi():
    """Small-scale check of the two-description equivalence."""
    params = _params(mu=2.0, R=2, side=30)
    cfg = Configuration.bernoulli(params.shape, 0.4, StreamRng(9))
    n_reps = 20_000
    occ = np.broadcast_to(cfg.occupancy, (n_reps, 30)).copy()
    out = particle_steps_batch(occ, params, StreamRng(10))
    freq = out.mean(axis=0)
    p = phi(2.0, compute_density(cfg, 2).values)
    se = np.sqrt(p * (1 - p) / n_reps)
    assert np.all(np.abs(freq - p) <= 4 * se + 1e-12)
    # sites with zero update probability must be exactly empty
    assert np.all(out[:, p == 0.0] == 0)


def test_particle_step_single_matches_absorbing_state():
    params = _params()
    empty = particle_step(Configuration.empty(params.shape), params, StreamRng(1))
    assert empty.is_empty()
    out = particle_step(Configuration.all_ones(params.shape), params, StreamRng(2))
    assert out.shape == params.shape


def test_run_trajectory_records_every_frame():
    params = _params(side=40)
    cfg = Configuration.single_at_center(params.shape)
    traj = run_trajectory(cfg, params, UniformField(5), 10)
    assert traj.occupancies.shape == (11, 40)
    np.testing.assert_array_equal(traj.at(0), cfg.occupancy)
    assert traj.t_end == 10
    with pytest.raises(ValueError):
        traj.at(11)
    # restarting from a recorded frame reproduces the rest of the run,
    # because t0 addresses the same field slices the original consumed
    resumed = run_trajectory(
        Configuration(params.shape, traj.at(4)), params, UniformField(5), 6, t0=4
    )
    np.testing.assert_array_equal(resumed.occupancies, traj.occupancies[4:])


def test_run_pair_trajectory_same_start_stays_identical():
    params = _params(side=40)
    cfg = Configuration.bernoulli(params.shape, 0.5, StreamRng(3))
    pair = run_pair_trajectory(cfg, cfg.copy(), params, UniformField(8), 12)
    np.testing.assert_array_equal(pair.members[0], pair.members[1])
    assert pair.t_end == 12


def test_run_pair_trajectory_matches_two_single_runs():
    params = _params(side=40)
    a = Configuration.single_at_center(params.shape)
    b = Configuration.all_ones(params.shape)
    pair = run_pair_trajectory(a, b, params, UniformField(21), 15)
    solo_a = run_trajectory(a, params, UniformField(21), 15)
    solo_b = run_trajectory(b, params, UniformField(21), 15)
    np.testing.assert_array_equal(pair.members[0], solo_a.occupancies)
    np.testing.assert_array_equal(pair.members[1], solo_b.occupancies)


def test_coupled_run_observes_counts_and_agreement():
    params = _params(mu=2.0, R=3, side=50)
    ens = CoupledEnsemble(
        params=params,
        field=UniformField(4),
        members=[
            EnsembleMember("seeded", Configuration.single_at_center(params.shape)),
            EnsembleMember("full", Configuration.all_ones(params.shape)),
        ],
    )
    obs = Observers(
        density_sites=(0,),
        pairs=(("seeded", "full"),),
        agreement_windows=(5,),
        record_occupancy=True,
    )
    report = coupled_run(ens, 40, obs)
    assert report.times == list(range(41))
    assert len(report.counts["seeded"]) == 41
    assert report.history["full"].shape == (41, 50)
    key = "seeded|full"
    assert len(report.agreed_radius[key]) == 41
    # ndjson lines parse and carry the recorded counts
    row0 = json.loads(report.to_ndjson_lines()[0])
    assert row0["counts"] == {"seeded": 1, "full": 50}
    # density probes: one row per (time, member)
    assert len(report.density_csv_rows()) == 41 * 2


def test_coupled_run_identical_members_agree_everywhere():
    params = _params(side=30)
    cfg = Configuration.bernoulli(params.shape, 0.5, StreamRng(6))
    ens = CoupledEnsemble(
        params=params,
        field=UniformField(9),
        members=[
            EnsembleMember("left", cfg.copy()),
            EnsembleMember("right", cfg.copy()),
        ],
    )
    report = coupled_run(ens, 10, Observers(pairs=(("left", "right"),)))
    r_max = 15  # farthest torus distance on a side-30 line
    assert report.agreed_radius["left|right"] == [r_max] * 11
    assert report.agreement_fraction["left|right"] == [1.0] * 11


def test_coupled_ensemble_rejects_duplicate_labels():
    params = _params(side=10)
    cfg = Configuration.empty(params.shape)
    with pytest.raises(ValueError):
        CoupledEnsemble(
            params=params,
            field=UniformField(0),
            members=[EnsembleMember("x", cfg), EnsembleMember("x", cfg.copy())],
        )


@settings(deadline=None, max_examples=20)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    mu=st.floats(min_value=1.2, max_value=6.0),
    R=st.integers(min_value=1, max_value=5),
)
def test_batch_update_output_is_binary_and_deterministic(seed, mu, R):
    params = _params(mu=mu, R=R, side=20)
    occ = (StreamRng(seed).random(20) < 0.5).astype(np.uint8)
    u = field_uniforms(np.uint64(seed), 1, np.arange(20, dtype=np.uint64))
    a = batch_update(occ, params, u)
    b = batch_update(occ, params, u)
    assert a.dtype == np.uint8
    assert set(np.unique(a)).issubset({0, 1})
    np.testing.assert_array_equal(a, b)
