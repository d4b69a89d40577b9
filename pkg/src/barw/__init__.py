"""Branching annihilating random walks: simulator and verification toolkit.

The package implements a discrete-time interacting particle system on
d-dimensional lattice windows — each generation, every particle scatters a
Poisson number of offspring uniformly over a sup-norm ball, and sites hit by
more than one arrival annihilate — together with the probabilistic
cellular-automaton form of the same process, its deterministic coupled-map
companion, and the comparison machinery (monotone couplings, traveling
profiles, renormalization blocks, Lambert-W phase boundaries) used to verify
survival and coexistence claims about it.
"""

from ._version import __version__
from .blocks import (
    BlockCensus,
    BlockVerdict,
    CCBlockGeometry,
    SurvivalBlockGeometry,
    block_census,
    cc_block_check,
    cc_block_geometry,
    cc_detector,
    pyramid_check,
    survival_block_check,
    survival_block_geometry,
    survival_detector,
)
from .cml import (
    BracketSequences,
    CmlReport,
    bracket_sequences,
    cml_lower_bound,
    cml_run,
    contraction_constant,
    phi,
    phi_range,
    theta,
)
from .dynamics import (
    CoupledEnsemble,
    EnsembleMember,
    ModelParams,
    Observers,
    PairTrajectory,
    PsiSpec,
    Trajectory,
    coupled_run,
    particle_step,
    pca_step,
    psi_step,
    run_pair_trajectory,
    run_trajectory,
)
from .errors import InvariantError
from .experiments import (
    RUNNERS,
    RunManifest,
    SurvivalEstimate,
    estimate_survival,
    load_manifest,
    rerun_from_manifest,
    wilson_interval,
)
from .lattice import (
    Boundary,
    Configuration,
    DensityField,
    LatticeShape,
    ball_volume,
    compute_density,
    load_snapshot,
    save_snapshot,
    window_counts,
    write_pgm,
)
from .profiles import (
    RingProfile,
    WaveShape,
    XiMinusProfile,
    build_wave_shape,
    build_xi_minus,
    build_zeta_profiles,
    find_min_radius,
    verify_density_domination,
    verify_profile_pair,
)
from .rng import (
    KEY_LAYOUT_VERSION,
    StreamRng,
    UniformField,
    derive_seed,
    derive_seeds,
    field_uniforms,
    poisson_samples,
)
from .thresholds import (
    ExtinctionBand,
    bernstein_bound,
    density_concentration,
    extinction_band,
    lambert_w0,
    lambert_wm1,
    mu1_asymptotic,
    mutilde,
)

__all__ = [
    "__version__",
    "BlockCensus",
    "BlockVerdict",
    "Boundary",
    "BracketSequences",
    "CCBlockGeometry",
    "CmlReport",
    "Configuration",
    "CoupledEnsemble",
    "DensityField",
    "EnsembleMember",
    "ExtinctionBand",
    "InvariantError",
    "KEY_LAYOUT_VERSION",
    "LatticeShape",
    "ModelParams",
    "Observers",
    "PairTrajectory",
    "PsiSpec",
    "RingProfile",
    "RUNNERS",
    "RunManifest",
    "SurvivalBlockGeometry",
    "SurvivalEstimate",
    "StreamRng",
    "Trajectory",
    "UniformField",
    "WaveShape",
    "XiMinusProfile",
    "ball_volume",
    "bernstein_bound",
    "block_census",
    "bracket_sequences",
    "build_wave_shape",
    "build_xi_minus",
    "build_zeta_profiles",
    "cc_block_check",
    "cc_block_geometry",
    "cc_detector",
    "cml_lower_bound",
    "cml_run",
    "compute_density",
    "contraction_constant",
    "coupled_run",
    "density_concentration",
    "derive_seed",
    "derive_seeds",
    "estimate_survival",
    "extinction_band",
    "field_uniforms",
    "find_min_radius",
    "lambert_w0",
    "lambert_wm1",
    "load_manifest",
    "load_snapshot",
    "mu1_asymptotic",
    "mutilde",
    "particle_step",
    "pca_step",
    "phi",
    "phi_range",
    "poisson_samples",
    "psi_step",
    "pyramid_check",
    "rerun_from_manifest",
    "run_pair_trajectory",
    "run_trajectory",
    "save_snapshot",
    "survival_block_check",
    "survival_block_geometry",
    "survival_detector",
    "theta",
    "verify_density_domination",
    "verify_profile_pair",
    "wilson_interval",
    "window_counts",
    "write_pgm",
]
