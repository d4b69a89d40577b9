"""One-generation updates of the branching annihilating walk, three ways.

All updates share the skeleton: look at the local density delta_R, turn it
into an occupation probability, compare with a uniform.

* pca_step: the site-map form.  eta_{n+1}(x) = 1 iff U(x, n+1) < phi_mu of
  the local density.  Sites are conditionally independent given eta_n
  because the field U supplies one fresh uniform per (site, generation).
* particle_step: the particle form.  Every occupied site emits a Poisson(mu)
  number of children, each landing uniformly in B_R(parent); a site is
  occupied next generation iff exactly one child lands on it.  Superposition
  of independent Poisson placements makes the arrival counts at distinct
  sites independent Poisson(mu * delta_R), so this agrees with pca_step in
  distribution while consuming a sequential stream instead of the field.
* psi_step: same skeleton with a comparison probability psi instead of phi.
  When psi <= phi pointwise the psi-process sits below the phi-process under
  the *same* field, uniform by uniform; when psi >= phi it sits above.  That
  is the monotone coupling: run several rules against one field and the
  order is exact, not statistical.

The strict inequality U < p (rather than <=) keeps p = 0 absorbing exactly:
a zero-density site can never switch on, even at the measure-zero event
U = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .cml import phi
from .errors import InvariantError
from .lattice import (
    Boundary,
    Configuration,
    DensityField,
    LatticeShape,
    ball_volume,
    centered_distance_grid,
    window_counts,
)
from .rng import UniformField, poisson_samples


@dataclass(frozen=True)
class ModelParams:
    """Branching rate mu, interaction radius R, and the window they act on."""

    mu: float
    R: int
    shape: LatticeShape

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0.0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu}")
        object.__setattr__(self, "R", int(self.R))
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        # materializes the volume guard early
        ball_volume(self.R, self.shape.dim)

    @property
    def volume(self) -> int:
        return ball_volume(self.R, self.shape.dim)


@dataclass(frozen=True)
class PsiSpec:
    """A comparison update probability psi, validated against phi on the grid.

    Local densities live on the grid {k / V : k = 0..V}, V = (2R+1)^d, so
    psi <= phi (or >=) is checked exactly there, in the same float arithmetic
    the steppers use.  Variants:

    * cap_linear: psi(w) = a * min(w, b), a > 1.  Sits below phi when the
      cap lands before phi bends down; drives survival lower bounds.
    * linear: psi(w) = min(1, m * w).  Sits above phi exactly when
      m * w >= phi(w) on the grid (the clip never hurts, phi < 1).  The
      expected particle count multiplies by at most m per generation, so
      m < 1 forces extinction; larger m still gives a valid upper coupling.
    """

    variant: str
    a: float = 0.0
    b: float = 0.0
    m: float = 0.0

    def __call__(self, w):
        arr = np.asarray(w, dtype=np.float64)
        if self.variant == "cap_linear":
            out = self.a * np.minimum(arr, self.b)
        elif self.variant == "linear":
            out = np.minimum(1.0, self.m * arr)
        else:
            raise ValueError(f"unknown psi variant {self.variant!r}")
        return float(out) if np.isscalar(w) or arr.ndim == 0 else out

    @property
    def extinction_forcing(self) -> bool:
        return self.variant == "linear" and self.m < 1.0

    @classmethod
    def cap_linear(cls, a: float, b: float, params: ModelParams) -> "PsiSpec":
        if not a > 1.0:
            raise ValueError(f"cap-linear slope must be > 1, got {a}")
        if not 0.0 < b <= 1.0:
            raise ValueError(f"cap must be in (0, 1], got {b}")
        spec = cls(variant="cap_linear", a=a, b=b)
        _check_on_grid(spec, params, below=True)
        return spec

    @classmethod
    def linear(cls, m: float, params: ModelParams) -> "PsiSpec":
        if not m > 0.0:
            raise ValueError(f"linear comparison slope must be > 0, got {m}")
        spec = cls(variant="linear", m=m)
        _check_on_grid(spec, params, below=False)
        return spec

    @classmethod
    def linear_dominating(cls, params: ModelParams) -> "PsiSpec":
        """The tightest linear rule above phi on this window's density grid.

        Starts from the exact-arithmetic threshold mu * exp(-mu / V) and, if
        float rounding leaves the grid check short by an ulp at w = 1/V,
        nudges the slope up to the first float that passes exactly.
        """
        m = params.mu * math.exp(-params.mu / params.volume)
        for _ in range(64):
            try:
                return cls.linear(m, params)
            except ValueError:
                m = math.nextafter(m, math.inf)
        raise InvariantError(
            "could not establish a dominating linear slope within 64 ulps"
        )


def _check_on_grid(spec: PsiSpec, params: ModelParams, below: bool) -> None:
    vol = params.volume
    w = np.arange(vol + 1, dtype=np.float64) / float(vol)
    psi_vals = spec(w)
    phi_vals = phi(params.mu, w)
    if np.any(psi_vals > 1.0):
        k = int(np.argmax(psi_vals > 1.0))
        raise ValueError(f"psi exceeds 1 at w = {w[k]:.6g}")
    if below:
        bad = psi_vals > phi_vals
        if bad.any():
            k = int(np.argmax(bad))
            raise ValueError(
                f"psi is not below phi on the density grid: at w = {w[k]:.6g}, "
                f"psi = {psi_vals[k]:.6g} > phi = {phi_vals[k]:.6g}"
            )
    else:
        bad = psi_vals < phi_vals
        if bad.any():
            k = int(np.argmax(bad))
            raise ValueError(
                f"psi is not above phi on the density grid: at w = {w[k]:.6g}, "
                f"psi = {psi_vals[k]:.6g} < phi = {phi_vals[k]:.6g}"
            )


def _check_member(cfg: Configuration, params: ModelParams) -> None:
    if cfg.shape != params.shape:
        raise ValueError(
            f"configuration window {cfg.shape} does not match model window "
            f"{params.shape}"
        )


def batch_densities(
    occ: np.ndarray, params: ModelParams, batch_axes: int = 0
) -> np.ndarray:
    """Local densities for a (possibly batched) occupancy array."""
    counts = window_counts(occ, params.R, params.shape.boundary, batch_axes)
    return counts / float(params.volume)


def batch_update(
    occ: np.ndarray,
    params: ModelParams,
    uniforms: np.ndarray,
    psi: PsiSpec | None = None,
    batch_axes: int = 0,
) -> np.ndarray:
    """One synchronous update of a batched occupancy against given uniforms."""
    dens = batch_densities(occ, params, batch_axes)
    p = psi(dens) if psi is not None else phi(params.mu, dens)
    return (uniforms.reshape(occ.shape) < p).astype(np.uint8)


def pca_step(
    cfg: Configuration, params: ModelParams, field: UniformField, n: int
) -> Configuration:
    """Advance one generation from time n: compare U(., n+1) with phi(delta_R)."""
    _check_member(cfg, params)
    u = field.uniforms(n + 1, np.arange(cfg.shape.n_sites, dtype=np.uint64))
    return Configuration(cfg.shape, batch_update(cfg.occupancy, params, u))


def psi_step(
    cfg: Configuration,
    psi: PsiSpec,
    params: ModelParams,
    field: UniformField,
    n: int,
) -> Configuration:
    """Advance one generation under the comparison rule psi, same field."""
    _check_member(cfg, params)
    u = field.uniforms(n + 1, np.arange(cfg.shape.n_sites, dtype=np.uint64))
    return Configuration(cfg.shape, batch_update(cfg.occupancy, params, u, psi=psi))


def particle_steps_batch(
    occ: np.ndarray, params: ModelParams, rng
) -> np.ndarray:
    """One particle-description generation for a batch of replicas.

    occ has shape (replicas, *sides).  Children are drawn replica-major in a
    fixed order, so results are reproducible for a given stream.
    """
    shape = params.shape
    reps = occ.shape[0]
    sides = np.array(shape.sides, dtype=np.int64)
    n_sites = shape.n_sites
    out = np.zeros((reps, n_sites), dtype=np.uint8)

    occupied = np.argwhere(occ.reshape(reps, *shape.sides))
    if occupied.size == 0:
        return out.reshape(occ.shape)
    rep_of_parent = occupied[:, 0]
    parent_coords = occupied[:, 1:]

    n_children = poisson_samples(params.mu, len(occupied), rng)
    total = int(n_children.sum())
    if total:
        parent_idx = np.repeat(np.arange(len(occupied)), n_children)
        disp = rng.integers(-params.R, params.R + 1, size=(total, shape.dim))
        targets = parent_coords[parent_idx] + disp
        child_rep = rep_of_parent[parent_idx]
        if shape.boundary is Boundary.PERIODIC:
            targets %= sides
        else:
            keep = np.all((targets >= 0) & (targets < sides), axis=1)
            targets = targets[keep]
            child_rep = child_rep[keep]
        flat = np.ravel_multi_index(tuple(targets.T), shape.sides)
        arrivals = np.bincount(
            child_rep * n_sites + flat, minlength=reps * n_sites
        ).reshape(reps, n_sites)
        out = (arrivals == 1).astype(np.uint8)
    return out.reshape(occ.shape)


def particle_step(cfg: Configuration, params: ModelParams, rng) -> Configuration:
    """One generation of the particle description for a single configuration."""
    _check_member(cfg, params)
    new_occ = particle_steps_batch(
        cfg.occupancy[np.newaxis, ...], params, rng
    )[0]
    return Configuration(cfg.shape, new_occ)


@dataclass
class EnsembleMember:
    """One process in a coupled ensemble: a label, a state, an update rule."""

    label: str
    cfg: Configuration
    psi: PsiSpec | None = None  # None means the phi dynamics


@dataclass
class CoupledEnsemble:
    """Several processes driven by one shared uniform field."""

    params: ModelParams
    field: UniformField
    members: list[EnsembleMember]
    time: int = 0

    def __post_init__(self) -> None:
        labels = [m.label for m in self.members]
        if len(set(labels)) != len(labels):
            raise ValueError(f"member labels must be unique, got {labels}")
        for m in self.members:
            _check_member(m.cfg, self.params)

    def member(self, label: str) -> EnsembleMember:
        for m in self.members:
            if m.label == label:
                return m
        raise ValueError(f"no ensemble member labeled {label!r}")


@dataclass(frozen=True)
class Observers:
    """What coupled_run should watch.

    density_sites: centered coordinates probed for local density each step.
    pairs: member-label pairs whose sitewise agreement is tracked.
    agreement_windows: centered window radii; for each pair and radius the
    report records the first generation at which the two members agree on
    every site of the window.
    record_occupancy: keep the full space-time occupancy of every member
    (needed by block detectors; off by default to save memory).
    """

    density_sites: tuple = ()
    density_radius: int | None = None
    pairs: tuple = ()
    agreement_windows: tuple = ()
    record_occupancy: bool = False


@dataclass
class TrajectoryReport:
    """Everything coupled_run observed, step by step."""

    params: ModelParams
    field_seed: int
    labels: tuple
    times: list = dataclass_field(default_factory=list)
    counts: dict = dataclass_field(default_factory=dict)
    density_rows: list = dataclass_field(default_factory=list)
    agreement_fraction: dict = dataclass_field(default_factory=dict)
    agreed_radius: dict = dataclass_field(default_factory=dict)
    first_agreement: dict = dataclass_field(default_factory=dict)
    final: dict = dataclass_field(default_factory=dict)
    history: dict = dataclass_field(default_factory=dict)

    def to_ndjson_lines(self) -> list[str]:
        lines = []
        for i, t in enumerate(self.times):
            row = {
                "t": t,
                "counts": {lab: self.counts[lab][i] for lab in self.labels},
            }
            if self.agreed_radius:
                row["agreed_radius"] = {
                    pair: series[i] for pair, series in self.agreed_radius.items()
                }
            if self.agreement_fraction:
                row["agreement_fraction"] = {
                    key: series[i]
                    for key, series in self.agreement_fraction.items()
                }
            lines.append(json.dumps(row, sort_keys=True))
        return lines

    def density_csv_rows(self) -> list[tuple]:
        return list(self.density_rows)


def _pair_key(a: str, b: str) -> str:
    return f"{a}|{b}"


def coupled_run(
    ensemble: CoupledEnsemble, steps: int, observers: Observers | None = None
) -> TrajectoryReport:
    """Advance every member `steps` generations under the shared field.

    Per generation the report records member particle counts, probed local
    densities, and for each watched pair the sitewise agreement fraction,
    the agreed radius (largest centered ball on which the members coincide),
    and the first generation of full agreement on each requested window.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    obs = observers or Observers()
    params = ensemble.params
    shape = params.shape
    labels = tuple(m.label for m in ensemble.members)
    for a, b in obs.pairs:
        ensemble.member(a)
        ensemble.member(b)

    report = TrajectoryReport(
        params=params, field_seed=ensemble.field.seed, labels=labels
    )
    report.counts = {lab: [] for lab in labels}
    pair_keys = [_pair_key(a, b) for a, b in obs.pairs]
    report.agreed_radius = {k: [] for k in pair_keys}
    report.agreement_fraction = {k: [] for k in pair_keys}
    report.first_agreement = {
        (k, int(w)): None for k in pair_keys for w in obs.agreement_windows
    }
    dist = centered_distance_grid(shape)
    r_max = int(dist.max())
    probe_radius = params.R if obs.density_radius is None else int(obs.density_radius)

    states = {m.label: m.cfg.occupancy.copy() for m in ensemble.members}
    if obs.record_occupancy:
        report.history = {
            lab: [states[lab].copy()] for lab in labels
        }

    def observe(t: int) -> None:
        report.times.append(t)
        for lab in labels:
            report.counts[lab].append(int(states[lab].sum(dtype=np.int64)))
        if obs.density_sites:
            probe_vol = float(ball_volume(probe_radius, shape.dim))
            for lab in labels:
                dens = (
                    window_counts(states[lab], probe_radius, shape.boundary)
                    / probe_vol
                )
                for site in obs.density_sites:
                    coord = tuple(int(c) for c in np.atleast_1d(site))
                    report.density_rows.append(
                        (t, lab, coord, float(dens[shape.coord_to_index(coord)]))
                    )
        for (a, b), key in zip(obs.pairs, pair_keys):
            diff = states[a] != states[b]
            if diff.any():
                radius = int(dist[diff].min()) - 1
            else:
                radius = r_max
            report.agreed_radius[key].append(radius)
            report.agreement_fraction[key].append(
                float(1.0 - diff.mean())
            )
            for w in obs.agreement_windows:
                w = int(w)
                if report.first_agreement[(key, w)] is None and radius >= w:
                    report.first_agreement[(key, w)] = t

    observe(ensemble.time)
    site_indices = np.arange(shape.n_sites, dtype=np.uint64)
    for _ in range(steps):
        t_next = ensemble.time + 1
        u = ensemble.field.uniforms(t_next, site_indices)
        for m in ensemble.members:
            states[m.label] = batch_update(states[m.label], params, u, psi=m.psi)
        ensemble.time = t_next
        if obs.record_occupancy:
            for lab in labels:
                report.history[lab].append(states[lab].copy())
        observe(t_next)

    for m in ensemble.members:
        m.cfg = Configuration(shape, states[m.label])
        report.final[m.label] = m.cfg
    if obs.record_occupancy:
        report.history = {
            lab: np.stack(frames) for lab, frames in report.history.items()
        }
    return report


@dataclass
class Trajectory:
    """The full space-time occupancy of one run: frame i is time t0 + i."""

    shape: LatticeShape
    t0: int
    occupancies: np.ndarray  # (steps + 1, *sides) uint8

    def at(self, t: int) -> np.ndarray:
        i = t - self.t0
        if not 0 <= i < len(self.occupancies):
            raise ValueError(
                f"time {t} outside the recorded range "
                f"[{self.t0}, {self.t0 + len(self.occupancies) - 1}]"
            )
        return self.occupancies[i]

    @property
    def t_end(self) -> int:
        return self.t0 + len(self.occupancies) - 1


@dataclass
class PairTrajectory:
    """Space-time occupancies of two processes run on the same field."""

    shape: LatticeShape
    t0: int
    labels: tuple
    members: tuple  # two arrays, each (steps + 1, *sides) uint8

    def at(self, t: int, member: int) -> np.ndarray:
        i = t - self.t0
        if not 0 <= i < len(self.members[member]):
            raise ValueError(
                f"time {t} outside the recorded range "
                f"[{self.t0}, {self.t0 + len(self.members[member]) - 1}]"
            )
        return self.members[member][i]

    @property
    def t_end(self) -> int:
        return self.t0 + len(self.members[0]) - 1


def run_trajectory(
    cfg: Configuration,
    params: ModelParams,
    field: UniformField,
    steps: int,
    psi: PsiSpec | None = None,
    t0: int = 0,
) -> Trajectory:
    """Run one process for `steps` generations, recording every frame."""
    _check_member(cfg, params)
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    frames = np.empty((steps + 1, *params.shape.sides), dtype=np.uint8)
    frames[0] = cfg.occupancy
    site_indices = np.arange(params.shape.n_sites, dtype=np.uint64)
    occ = cfg.occupancy
    for i in range(steps):
        u = field.uniforms(t0 + i + 1, site_indices)
        occ = batch_update(occ, params, u, psi=psi)
        frames[i + 1] = occ
    return Trajectory(params.shape, t0, frames)


def run_pair_trajectory(
    cfg_a: Configuration,
    cfg_b: Configuration,
    params: ModelParams,
    field: UniformField,
    steps: int,
    labels: tuple = ("first", "second"),
    t0: int = 0,
) -> PairTrajectory:
    """Run two phi-processes on one shared field, recording every frame."""
    _check_member(cfg_a, params)
    _check_member(cfg_b, params)
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    shape = params.shape
    frames_a = np.empty((steps + 1, *shape.sides), dtype=np.uint8)
    frames_b = np.empty_like(frames_a)
    frames_a[0] = cfg_a.occupancy
    frames_b[0] = cfg_b.occupancy
    site_indices = np.arange(shape.n_sites, dtype=np.uint64)
    occ_a, occ_b = cfg_a.occupancy, cfg_b.occupancy
    for i in range(steps):
        u = field.uniforms(t0 + i + 1, site_indices)
        occ_a = batch_update(occ_a, params, u)
        occ_b = batch_update(occ_b, params, u)
        frames_a[i + 1] = occ_a
        frames_b[i + 1] = occ_b
    return PairTrajectory(shape, t0, tuple(labels), (frames_a, frames_b))


def write_trajectory_ndjson(report: TrajectoryReport, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for line in report.to_ndjson_lines():
            fh.write(line + "\n")


def write_density_csv(report: TrajectoryReport, path) -> None:
    """Density probe rows as CSV: generation, member, site, local density."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,member,site,density\n")
        for t, lab, coord, value in report.density_rows:
            site = ":".join(str(c) for c in coord)
            fh.write(f"{t},{lab},{site},{value!r}\n")
