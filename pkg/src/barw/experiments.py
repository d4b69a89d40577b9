"""Reproducible experiment harnesses: manifests, survival sweeps, coupling runs.

Every experiment follows the same protocol:

1. a manifest (experiment name, complete parameter set, seed, generator and
   code version) is written to `manifest.json` in the output directory
   before any computation starts;
2. outputs are produced as deterministic byte strings (no timestamps inside,
   floats via repr) and their sha256 digests are appended to the manifest as
   they land.

`rerun_from_manifest` re-executes any experiment from its stored parameters;
identical digests are the package's reproducibility check.  Randomness comes
exclusively from the keyed uniform field and from numpy Philox streams, both
derived from the manifest seed via splitmix64, so replicas can run and merge
in any order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._version import __version__ as _code_version
from .blocks import block_census, survival_block_geometry, survival_detector, write_geometry_ndjson
from .cml import cml_run, theta
from .dynamics import ModelParams, PsiSpec, Trajectory, batch_update
from .errors import InvariantError
from .lattice import (
    Boundary,
    Configuration,
    DensityField,
    LatticeShape,
    centered_distance_grid,
    compute_density,
    save_snapshot,
    window_counts,
    write_pgm,
)
from .profiles import build_wave_shape, build_xi_minus, verify_density_domination
from .rng import KEY_LAYOUT_VERSION, derive_seed, derive_seeds, field_uniforms
from .thresholds import extinction_band, mu1_asymptotic

#: Two-sided 95% normal quantile, frozen so intervals never drift.
Z95 = 1.9599639845400542


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""

    if n <= 0:
        raise ValueError(f"need at least one trial, got n={n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes={successes} outside [0, {n}]")
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom
    # At the boundaries the exact interval endpoint is the proportion itself;
    # computing it through center/half leaves ulp-level residue.
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return (lo, hi)


@dataclass
class RunManifest:
    """Self-contained record of one experiment run."""

    experiment: str
    parameters: dict
    seed: int
    generator: str
    code_version: str
    created_utc: str
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def load_manifest(path) -> RunManifest:
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    return RunManifest(**raw)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ExperimentRun:
    """Output-directory handle enforcing the manifest-first protocol."""

    def __init__(self, experiment: str, out_dir, parameters: dict):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        seed = int(parameters.get("seed", 0))
        self.manifest = RunManifest(
            experiment=experiment,
            parameters=parameters,
            seed=seed,
            generator=KEY_LAYOUT_VERSION,
            code_version=_code_version,
            created_utc=datetime.now(timezone.utc).isoformat(),
        )
        self._flush_manifest()

    def _flush_manifest(self) -> None:
        (self.out_dir / "manifest.json").write_text(
            self.manifest.to_json(), encoding="ascii"
        )

    def write_text(self, name: str, text: str) -> Path:
        data = text.encode("ascii")
        path = self.out_dir / name
        path.write_bytes(data)
        self.manifest.outputs[name] = _sha256(data)
        self._flush_manifest()
        return path

    def track_file(self, name: str) -> None:
        """Digest a file produced by a writer that needed a real path."""

        data = (self.out_dir / name).read_bytes()
        self.manifest.outputs[name] = _sha256(data)
        self._flush_manifest()

    def finish(self) -> RunManifest:
        self._flush_manifest()
        return self.manifest


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_text(fieldnames: list[str], rows: list[dict], fmt: str) -> str:
    """Render dict rows as CSV (header + lines) or NDJSON, both deterministic."""

    if fmt == "csv":
        lines = [",".join(fieldnames)]
        for row in rows:
            lines.append(",".join(_format_value(row[k]) for k in fieldnames))
        return "\n".join(lines) + "\n"
    if fmt == "ndjson":
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)
    raise ValueError(f"format must be 'csv' or 'ndjson', got {fmt!r}")


def _table_name(base: str, fmt: str) -> str:
    return f"{base}.{'csv' if fmt == 'csv' else 'ndjson'}"


def _make_shape(dim: int, side: int, boundary: str) -> LatticeShape:
    return LatticeShape(dim, (side,) * dim, Boundary(boundary))


def parse_init(init: str) -> tuple[str, float | None]:
    """Split an init spec 'single' | 'ones' | 'bernoulli:p' into kind and p."""

    if init in ("single", "ones"):
        return init, None
    if init.startswith("bernoulli:"):
        p = float(init.split(":", 1)[1])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli density must be in [0,1], got {p}")
        return "bernoulli", p
    raise ValueError(f"init must be 'single', 'ones' or 'bernoulli:p', got {init!r}")


def initial_batch(shape: LatticeShape, init: str, seeds: np.ndarray) -> np.ndarray:
    """Batched initial occupancies, one replica per seed.

    Bernoulli initials consume the generation-0 slice of each replica's
    uniform field (the update rule only ever reads generations >= 1), so the
    whole run stays a pure function of the replica seed.
    """

    kind, p = parse_init(init)
    reps = len(seeds)
    if kind == "single":
        occ = np.zeros((reps, *shape.sides), dtype=np.uint8)
        occ[(slice(None), *shape.center)] = 1
        return occ
    if kind == "ones":
        return np.ones((reps, *shape.sides), dtype=np.uint8)
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    u = field_uniforms(np.asarray(seeds, dtype=np.uint64)[:, None], 0, sites[None, :])
    return (u < p).astype(np.uint8).reshape(reps, *shape.sides)


def _batched_survival(
    params: ModelParams,
    generations: int,
    seeds: np.ndarray,
    init: str,
    psi: PsiSpec | None = None,
) -> np.ndarray:
    """Boolean survival flags (nonempty at the horizon) for one seed batch.

    Dead replicas are compacted away each step; the absorbing state makes
    that exact, and per-replica keyed fields make it order-independent.
    """

    reps = len(seeds)
    occ = initial_batch(params.shape, init, seeds)
    alive = np.arange(reps)
    sites = np.arange(params.shape.n_sites, dtype=np.uint64)
    survived = np.zeros(reps, dtype=bool)
    for n in range(generations):
        nonzero = occ.reshape(len(alive), -1).any(axis=1)
        alive, occ = alive[nonzero], occ[nonzero]
        if len(alive) == 0:
            return survived
        u = field_uniforms(
            np.asarray(seeds[alive], dtype=np.uint64)[:, None], n + 1, sites[None, :]
        )
        occ = batch_update(occ, params, u, psi=psi, batch_axes=1)
    nonzero = occ.reshape(len(alive), -1).any(axis=1)
    survived[alive[nonzero]] = True
    return survived


@dataclass(frozen=True)
class SurvivalEstimate:
    """Proportion of replicas alive at the horizon, with a Wilson interval."""

    proportion: float
    lower: float
    upper: float
    replicas: int
    survivors: int

    def __post_init__(self) -> None:
        if not self.lower <= self.proportion <= self.upper:
            raise InvariantError(
                f"interval [{self.lower}, {self.upper}] misses {self.proportion}"
            )


def estimate_survival(
    mu: float,
    R: int,
    dim: int,
    side: int,
    generations: int,
    replicas: int,
    seed: int,
    init: str = "single",
    boundary: str = "torus",
) -> SurvivalEstimate:
    """Run independent replicas and estimate the survival proportion."""

    if replicas < 1:
        raise ValueError(f"need at least one replica, got {replicas}")
    shape = _make_shape(dim, side, boundary)
    params = ModelParams(mu=mu, R=R, shape=shape)
    seeds = derive_seeds(seed, replicas)
    survived = _batched_survival(params, generations, seeds, init)
    k = int(survived.sum())
    lo, hi = wilson_interval(k, replicas)
    return SurvivalEstimate(
        proportion=k / replicas, lower=lo, upper=hi, replicas=replicas, survivors=k
    )


@dataclass(frozen=True)
class PhaseDiagramSpec:
    """Grid specification for the survival phase diagram."""

    dim: int
    side: int
    mus: tuple
    Rs: tuple
    generations: int
    replicas: int
    init: str = "single"
    boundary: str = "torus"

    def __post_init__(self) -> None:
        if not self.mus or not self.Rs:
            raise ValueError("phase diagram grids must be nonempty")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


def run_survival(
    out_dir,
    *,
    mu: float,
    R: int,
    dim: int = 1,
    side: int = 1000,
    generations: int = 250,
    replicas: int = 200,
    seed: int = 0,
    init: str = "single",
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Single-cell survival estimate, written as a one-row table."""

    params = dict(
        mu=mu, R=R, dim=dim, side=side, generations=generations,
        replicas=replicas, seed=seed, init=init, boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("survival", out_dir, params)
    est = estimate_survival(
        mu, R, dim, side, generations, replicas, seed, init, boundary
    )
    rows = [
        dict(
            mu=mu, R=R, proportion=est.proportion, wilson_lower=est.lower,
            wilson_upper=est.upper, survivors=est.survivors, replicas=est.replicas,
        )
    ]
    run.write_text(
        _table_name("survival", fmt),
        rows_to_text(
            ["mu", "R", "proportion", "wilson_lower", "wilson_upper",
             "survivors", "replicas"],
            rows,
            fmt,
        ),
    )
    return run.finish()


def phase_diagram_cells(spec: PhaseDiagramSpec, seed: int):
    """Iterate ((i, j), R, mu, cell_seed) row-major over (Rs, mus)."""

    for i, R in enumerate(spec.Rs):
        for j, mu in enumerate(spec.mus):
            cell = derive_seed(seed, i * len(spec.mus) + j)
            yield (i, j), int(R), float(mu), cell


def run_phase_diagram(
    out_dir,
    *,
    mus: list,
    Rs: list,
    dim: int = 1,
    side: int = 1000,
    generations: int = 250,
    replicas: int = 200,
    seed: int = 0,
    init: str = "single",
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Survival sweep over a (mu, R) grid plus the theoretical band overlay.

    Outputs: the per-cell survival table, the Lambert band per R, and a PGM
    heat map (rows follow the R grid, columns the mu grid, white = all
    replicas survived).
    """

    params = dict(
        mus=list(map(float, mus)), Rs=list(map(int, Rs)), dim=dim, side=side,
        generations=generations, replicas=replicas, seed=seed, init=init,
        boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("phase-diagram", out_dir, params)
    spec = PhaseDiagramSpec(
        dim=dim, side=side, mus=tuple(params["mus"]), Rs=tuple(params["Rs"]),
        generations=generations, replicas=replicas, init=init, boundary=boundary,
    )
    heat = np.zeros((len(spec.Rs), len(spec.mus)))
    rows = []
    for (i, j), R, mu, cell_seed in phase_diagram_cells(spec, seed):
        est = estimate_survival(
            mu, R, dim, side, generations, replicas, cell_seed, init, boundary
        )
        heat[i, j] = est.proportion
        rows.append(
            dict(
                R=R, mu=mu, proportion=est.proportion, wilson_lower=est.lower,
                wilson_upper=est.upper, survivors=est.survivors,
                replicas=est.replicas,
            )
        )
    run.write_text(
        _table_name("survival", fmt),
        rows_to_text(
            ["R", "mu", "proportion", "wilson_lower", "wilson_upper",
             "survivors", "replicas"],
            rows,
            fmt,
        ),
    )
    band_rows = []
    for R in spec.Rs:
        band = extinction_band(int(R), dim)
        band_rows.append(
            dict(R=int(R), mu1=band.mu1, mu2=band.mu2,
                 mu1_series=mu1_asymptotic(int(R), dim))
        )
    run.write_text(
        _table_name("band", fmt),
        rows_to_text(["R", "mu1", "mu2", "mu1_series"], band_rows, fmt),
    )
    write_pgm(heat, run.out_dir / "heat.pgm", max_value=1.0)
    run.track_file("heat.pgm")
    return run.finish()


def _agreed_radius(
    occ_a: np.ndarray, occ_b: np.ndarray, dist_flat: np.ndarray, r_max: int
) -> np.ndarray:
    """Per-replica agreement radius: min distance of a disagreement minus one."""

    diff = (occ_a != occ_b).reshape(occ_a.shape[0], -1)
    masked = np.where(diff, dist_flat[None, :], np.iinfo(np.int64).max)
    nearest = masked.min(axis=1)
    return np.where(diff.any(axis=1), nearest - 1, r_max).astype(np.int64)


def run_coupling(
    out_dir,
    *,
    mu: float,
    R: int,
    dim: int = 1,
    side: int = 1000,
    horizon: int = 500,
    replicas: int = 100,
    seed: int = 0,
    init_a: str = "single",
    init_b: str = "ones",
    window: int = 50,
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Coupled pairs on shared fields: agreement radii, coupling times, slope.

    Each replica runs two processes with the stated initial conditions on
    one uniform field.  The table reports, per replica, survival of both
    members, the first time the centered window of the given radius agrees
    sitewise, the final agreement fraction, and the least-squares slope of
    the agreed-radius series; the cone table pools the series over replicas
    with both members alive at the horizon.
    """

    params = dict(
        mu=mu, R=R, dim=dim, side=side, horizon=horizon, replicas=replicas,
        seed=seed, init_a=init_a, init_b=init_b, window=window,
        boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("coupling", out_dir, params)
    shape = _make_shape(dim, side, boundary)
    model = ModelParams(mu=mu, R=R, shape=shape)
    seeds = derive_seeds(seed, replicas)
    # Distinct derivation indices keep the two initial draws independent.
    occ_a = initial_batch(shape, init_a, seeds)
    occ_b = initial_batch(shape, init_b, derive_seeds(derive_seed(seed, replicas), replicas))

    dist_flat = centered_distance_grid(shape).reshape(-1)
    r_max = int(dist_flat.max())
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    radii = np.empty((horizon + 1, replicas), dtype=np.int64)
    radii[0] = _agreed_radius(occ_a, occ_b, dist_flat, r_max)
    for n in range(horizon):
        u = field_uniforms(
            np.asarray(seeds, dtype=np.uint64)[:, None], n + 1, sites[None, :]
        )
        occ_a = batch_update(occ_a, model, u, batch_axes=1)
        occ_b = batch_update(occ_b, model, u, batch_axes=1)
        radii[n + 1] = _agreed_radius(occ_a, occ_b, dist_flat, r_max)

    alive_a = occ_a.reshape(replicas, -1).any(axis=1)
    alive_b = occ_b.reshape(replicas, -1).any(axis=1)
    both = alive_a & alive_b
    final_equal = (occ_a == occ_b).reshape(replicas, -1).mean(axis=1)
    window_hits = radii >= window
    ever = window_hits.any(axis=0)
    first_t = np.where(ever, window_hits.argmax(axis=0), -1)
    times = np.arange(horizon + 1, dtype=np.float64)
    t_center = times - times.mean()
    slopes = (t_center @ (radii - radii.mean(axis=0))) / (t_center @ t_center)

    rows = []
    for r in range(replicas):
        rows.append(
            dict(
                replica=r,
                survived_a=bool(alive_a[r]),
                survived_b=bool(alive_b[r]),
                survived_both=bool(both[r]),
                window_coupling_time=int(first_t[r]),
                window_agreed_at_horizon=bool(radii[horizon, r] >= window),
                final_agreement_fraction=float(final_equal[r]),
                final_agreed_radius=int(radii[horizon, r]),
                radius_slope=float(slopes[r]),
            )
        )
    run.write_text(
        _table_name("agreement", fmt),
        rows_to_text(
            ["replica", "survived_a", "survived_b", "survived_both",
             "window_coupling_time", "window_agreed_at_horizon",
             "final_agreement_fraction", "final_agreed_radius", "radius_slope"],
            rows,
            fmt,
        ),
    )
    cone_rows = []
    n_both = int(both.sum())
    for t in range(horizon + 1):
        mean_r = float(radii[t, both].mean()) if n_both else 0.0
        cone_rows.append(dict(t=t, mean_agreed_radius=mean_r, replicas=n_both))
    run.write_text(
        _table_name("cone", fmt),
        rows_to_text(["t", "mean_agreed_radius", "replicas"], cone_rows, fmt),
    )
    return run.finish()


def run_density(
    out_dir,
    *,
    mu: float,
    R: int,
    dim: int = 1,
    side: int = 1000,
    horizon: int = 500,
    seed: int = 0,
    init: str = "ones",
    probes: list | None = None,
    eps: float = 0.1,
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Window-density time series at probe sites for a single run."""

    probe_list = [[0] * dim] if probes is None else [list(map(int, p)) for p in probes]
    params = dict(
        mu=mu, R=R, dim=dim, side=side, horizon=horizon, seed=seed, init=init,
        probes=probe_list, eps=eps, boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("density", out_dir, params)
    shape = _make_shape(dim, side, boundary)
    model = ModelParams(mu=mu, R=R, shape=shape)
    seeds = derive_seeds(seed, 1)
    occ = initial_batch(shape, init, seeds)[0]
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    probe_idx = [shape.coord_to_index(p) for p in probe_list]

    th = theta(mu) if mu > 1.0 else None
    series = np.empty((horizon + 1, len(probe_idx)))
    for t in range(horizon + 1):
        if t:
            u = field_uniforms(np.uint64(int(seeds[0])), t, sites)
            occ = batch_update(occ, model, u)
        dens = compute_density(Configuration(shape, occ), R).values
        for k, idx in enumerate(probe_idx):
            series[t, k] = dens[idx]

    rows = []
    for t in range(horizon + 1):
        for k, p in enumerate(probe_list):
            rows.append(
                dict(t=t, probe=k, x=":".join(map(str, p)), density=float(series[t, k]))
            )
    run.write_text(
        _table_name("density", fmt),
        rows_to_text(["t", "probe", "x", "density"], rows, fmt),
    )
    half = series[(horizon + 1) // 2 :]
    summary = []
    for k, p in enumerate(probe_list):
        entry = dict(
            probe=k,
            x=":".join(map(str, p)),
            mean_last_half=float(half[:, k].mean()),
            eps=eps,
        )
        if th is not None:
            entry["theta"] = th
            entry["frac_eps_close"] = float((np.abs(series[:, k] - th) < eps).mean())
        else:
            entry["theta"] = float("nan")
            entry["frac_eps_close"] = float("nan")
        summary.append(entry)
    run.write_text(
        _table_name("summary", fmt),
        rows_to_text(
            ["probe", "x", "mean_last_half", "eps", "theta", "frac_eps_close"],
            summary,
            fmt,
        ),
    )
    return run.finish()


def run_percolation(
    out_dir,
    *,
    R: int,
    dim: int = 1,
    side: int = 400,
    p_grid: list | None = None,
    generations: int = 100,
    replicas: int = 200,
    seed: int = 0,
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Oriented site percolation with spread R: crossing curve and p_c estimate.

    A site is wet at time n+1 iff its own coin (uniform < p) is open and
    some site within distance R was wet at time n.  Crossing = the single
    seeded origin's cluster is still alive after `generations` layers.  The
    p_c estimate interpolates the 50% crossing point of the curve; the
    scaled value (2R+1)^d * p_c probes the large-R conjecture that the
    product tends to 1.
    """

    if dim > 2:
        raise ValueError("percolation sweeps are exploratory and support d <= 2")
    if p_grid is None:
        p_grid = [round(0.02 * k, 4) for k in range(1, 26)]
    params = dict(
        R=R, dim=dim, side=side, p_grid=[float(p) for p in p_grid],
        generations=generations, replicas=replicas, seed=seed,
        boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("percolation", out_dir, params)
    shape = _make_shape(dim, side, boundary)
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    rows = []
    curve = []
    for gi, p in enumerate(params["p_grid"]):
        seeds = derive_seeds(derive_seed(seed, gi), replicas)
        wet = initial_batch(shape, "single", seeds)
        alive = np.arange(replicas)
        crossed = np.zeros(replicas, dtype=bool)
        for n in range(generations):
            nonzero = wet.reshape(len(alive), -1).any(axis=1)
            alive, wet = alive[nonzero], wet[nonzero]
            if len(alive) == 0:
                break
            u = field_uniforms(
                np.asarray(seeds[alive], dtype=np.uint64)[:, None], n + 1,
                sites[None, :],
            )
            parents = window_counts(wet, R, shape.boundary, batch_axes=1) >= 1
            wet = ((u.reshape(wet.shape) < p) & parents).astype(np.uint8)
        if len(alive):
            nonzero = wet.reshape(len(alive), -1).any(axis=1)
            crossed[alive[nonzero]] = True
        k = int(crossed.sum())
        lo, hi = wilson_interval(k, replicas)
        frac = k / replicas
        curve.append(frac)
        rows.append(
            dict(p=float(p), crossing=frac, wilson_lower=lo, wilson_upper=hi,
                 survivors=k, replicas=replicas)
        )
    run.write_text(
        _table_name("crossing", fmt),
        rows_to_text(
            ["p", "crossing", "wilson_lower", "wilson_upper", "survivors", "replicas"],
            rows,
            fmt,
        ),
    )
    pc = _crossing_point(params["p_grid"], curve, 0.5)
    volume = (2 * R + 1) ** dim
    summary = [
        dict(
            R=R, dim=dim, p_c=pc if pc is not None else float("nan"),
            scaled_p_c=(volume * pc) if pc is not None else float("nan"),
            volume=volume, generations=generations, side=side,
        )
    ]
    run.write_text(
        _table_name("pc", fmt),
        rows_to_text(
            ["R", "dim", "p_c", "scaled_p_c", "volume", "generations", "side"],
            summary,
            fmt,
        ),
    )
    return run.finish()


def _crossing_point(ps: list, fracs: list, level: float) -> float | None:
    """First linear interpolation of the curve through `level`, or None."""

    for (p0, f0), (p1, f1) in zip(zip(ps, fracs), zip(ps[1:], fracs[1:])):
        if (f0 - level) * (f1 - level) <= 0.0 and f0 != f1:
            return p0 + (level - f0) * (p1 - p0) / (f1 - f0)
        if f0 == level == f1:
            return p0
    return None


def run_cml_front(
    out_dir,
    *,
    mu: float,
    R: int,
    window: int = 200,
    steps: int = 2000,
    tol: float = 0.05,
    init_value: float = 0.01,
    a: float = 1.1,
    fmt: str = "csv",
) -> RunManifest:
    """Deterministic CML front: radius series, fitted speed, profile speed.

    The fitted speed is a least-squares slope over the strictly pre-saturation
    part of the front-radius series; alongside it the table reports the
    profile machinery's guaranteed advance shift/T_block for the same (a, R).
    """

    params = dict(
        mu=mu, R=R, window=window, steps=steps, tol=tol,
        init_value=init_value, a=a, fmt=fmt,
    )
    run = ExperimentRun("cml-front", out_dir, params)
    shape = LatticeShape.line(2 * window + 1)
    values = np.zeros(shape.sides, dtype=np.float64)
    values[shape.center] = init_value
    xi0 = DensityField(shape, values)
    _, report = cml_run(xi0, mu, R, steps, tol=tol, windows=(min(50, window), window))
    field_names = ["n", "front_radius"] + [
        k for k in report.rows[0] if k.startswith("sup_dist")
    ]
    run.write_text(
        _table_name("front", fmt), rows_to_text(field_names, report.rows, fmt)
    )

    r_series = [(row["n"], row["front_radius"]) for row in report.rows]
    interior = [(n, r) for n, r in r_series if 0 <= r < window - R]
    if len(interior) >= 2:
        ns = np.array([n for n, _ in interior], dtype=np.float64)
        rs = np.array([r for _, r in interior], dtype=np.float64)
        nc = ns - ns.mean()
        speed = float((nc @ (rs - rs.mean())) / (nc @ nc))
    else:
        speed = float("nan")
    wave = build_wave_shape(a, R)
    geom = survival_block_geometry(wave)
    summary = [
        dict(
            mu=mu, R=R, fitted_speed=speed,
            profile_speed=geom.shift / geom.T_block,
            shift=geom.shift, T_block=geom.T_block,
            theta=report.theta, converged_at=report.converged_at,
        )
    ]
    run.write_text(
        _table_name("speed", fmt),
        rows_to_text(
            ["mu", "R", "fitted_speed", "profile_speed", "shift", "T_block",
             "theta", "converged_at"],
            summary,
            fmt,
        ),
    )
    return run.finish()


def run_simulate(
    out_dir,
    *,
    mu: float,
    R: int,
    dim: int = 1,
    side: int = 200,
    generations: int = 100,
    seed: int = 0,
    init: str = "single",
    boundary: str = "torus",
    fmt: str = "csv",
) -> RunManifest:
    """Single trajectory: particle counts, center density, final snapshot."""

    params = dict(
        mu=mu, R=R, dim=dim, side=side, generations=generations, seed=seed,
        init=init, boundary=boundary, fmt=fmt,
    )
    run = ExperimentRun("simulate", out_dir, params)
    shape = _make_shape(dim, side, boundary)
    model = ModelParams(mu=mu, R=R, shape=shape)
    seeds = derive_seeds(seed, 1)
    occ = initial_batch(shape, init, seeds)[0]
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    center = shape.center
    rows = []
    for t in range(generations + 1):
        if t:
            u = field_uniforms(np.uint64(int(seeds[0])), t, sites)
            occ = batch_update(occ, model, u)
        dens = compute_density(Configuration(shape, occ), R).values
        rows.append(
            dict(
                t=t,
                particles=int(occ.sum(dtype=np.int64)),
                center_density=float(dens[center]),
            )
        )
    run.write_text(
        _table_name("trajectory", fmt),
        rows_to_text(["t", "particles", "center_density"], rows, fmt),
    )
    final = Configuration(shape, occ)
    save_snapshot(final, run.out_dir / "final.txt")
    run.track_file("final.txt")
    dens = compute_density(final, R).values
    write_pgm(dens, run.out_dir / "final.pgm", max_value=1.0)
    run.track_file("final.pgm")
    return run.finish()


def run_blocks_census(
    out_dir,
    *,
    mu: float,
    R: int,
    a: float = 1.1,
    a_tilde: float = 1.5,
    layers: int = 2,
    side: int | None = None,
    seed: int = 0,
    init: str = "ones",
    fmt: str = "csv",
) -> RunManifest:
    """Survival block census over a monotone comparison run.

    Runs the capped-linear comparison process from the given initial
    condition and evaluates the survival block detector on every anchor of
    `layers` consecutive block layers.  side defaults to the smallest torus
    holding one block plus a ring of neighbour anchors.
    """

    wave = build_wave_shape(a, R)
    geom = survival_block_geometry(wave)
    if side is None:
        side = 2 * geom.R_block + 1 + 2 * geom.L_prime_block
    params = dict(
        mu=mu, R=R, a=a, a_tilde=a_tilde, layers=layers, side=int(side),
        seed=seed, init=init, fmt=fmt,
    )
    run = ExperimentRun("blocks-census", out_dir, params)
    shape = LatticeShape.line(int(side))
    model = ModelParams(mu=mu, R=R, shape=shape)
    b = math.log(mu / a_tilde) / mu
    psi = PsiSpec.cap_linear(a_tilde, b, model)
    seeds = derive_seeds(seed, 1)
    occ = initial_batch(shape, init, seeds)[0]
    steps = layers * geom.T_block
    frames = np.empty((steps + 1, *shape.sides), dtype=np.uint8)
    frames[0] = occ
    sites = np.arange(shape.n_sites, dtype=np.uint64)
    for t in range(steps):
        u = field_uniforms(np.uint64(int(seeds[0])), t + 1, sites)
        occ = batch_update(occ, model, u, psi=psi)
        frames[t + 1] = occ
    traj = Trajectory(shape, 0, frames)
    xi = build_xi_minus(1, R, geom.R_init, psi.b, 0, wave)
    census = block_census(traj, geom, survival_detector(traj, geom, xi))

    write_geometry_ndjson(geom, run.out_dir / "geometry.ndjson")
    run.track_file("geometry.ndjson")
    run.write_text("census.csv", "\n".join(census.csv_rows()) + "\n")
    summary = [
        dict(
            layers=len(census.layers),
            anchors_per_layer=len(census.layers[0].anchors),
            good_fraction=census.good_fraction,
            path_exists=census.path_exists,
        )
    ]
    run.write_text(
        _table_name("summary", fmt),
        rows_to_text(
            ["layers", "anchors_per_layer", "good_fraction", "path_exists"],
            summary,
            fmt,
        ),
    )
    return run.finish()


def run_profiles_verify(
    out_dir,
    *,
    a: float,
    R: int,
    exact: bool = False,
    fmt: str = "csv",
) -> RunManifest:
    """Wave-shape domination report at one (a, R)."""

    params = dict(a=a, R=R, exact=exact, fmt=fmt)
    run = ExperimentRun("profiles-verify", out_dir, params)
    wave = build_wave_shape(a, R)
    report = verify_density_domination(wave, exact=exact)
    rows = [
        dict(
            a=a, a_effective=wave.a, R=R, eps0=wave.eps0, width=wave.width,
            shift=wave.shift, holds=report.holds,
            first_failure=report.first_failure,
            min_margin=report.min_margin, exact=exact,
        )
    ]
    run.write_text(
        _table_name("domination", fmt),
        rows_to_text(
            ["a", "a_effective", "R", "eps0", "width", "shift", "holds",
             "first_failure", "min_margin", "exact"],
            rows,
            fmt,
        ),
    )
    return run.finish()


#: Experiment registry: every runner is re-invocable from its manifest.
RUNNERS = {
    "survival": run_survival,
    "phase-diagram": run_phase_diagram,
    "coupling": run_coupling,
    "density": run_density,
    "percolation": run_percolation,
    "cml-front": run_cml_front,
    "simulate": run_simulate,
    "blocks-census": run_blocks_census,
    "profiles-verify": run_profiles_verify,
}


def rerun_from_manifest(manifest_path, out_dir) -> RunManifest:
    """Re-execute an experiment from its manifest into a fresh directory."""

    manifest = load_manifest(manifest_path)
    if manifest.experiment not in RUNNERS:
        raise ValueError(f"unknown experiment {manifest.experiment!r} in manifest")
    runner = RUNNERS[manifest.experiment]
    return runner(out_dir, **manifest.parameters)


def digests_match(a: RunManifest, b: RunManifest) -> bool:
    """Whether two runs produced byte-identical outputs."""

    return a.outputs == b.outputs
