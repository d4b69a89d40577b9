"""Coarse-grained block geometry and detectors for renormalized survival.

Long-run statements about the lattice process are reduced to finitely
checkable events on space-time blocks.  Two block systems are implemented:

* survival blocks: the monotone comparison process must dominate the moving
  lower profile xi_n across the block, which renews the domination at the
  3^d neighbouring anchors one block-time later;

* complete-convergence blocks: a coupled pair of processes must keep both
  densities inside the two-sided ring profile band and agree sitewise on a
  growing central region.

Detectors are pure functions of a stored trajectory; a census evaluates
them on a grid of anchors and reports per-layer statistics plus whether an
open oriented path of good blocks spans the simulated window (the finite
stand-in for percolation to infinity).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cml import contraction_constant, theta
from .dynamics import PairTrajectory, Trajectory
from .errors import InvariantError
from .lattice import Boundary, Configuration, LatticeShape, compute_density
from .profiles import RingProfile, WaveShape, XiMinusProfile, _ceil_guarded, box_coords


@dataclass(frozen=True)
class SurvivalBlockGeometry:
    """Block extents for the survival construction, all derived from the wave.

    The spatial anchor grid has pitch L_prime_block; a block covers the box
    of radius R_block = L_block/2 around its anchor and spans T_block
    generations, the time the ramped profile needs to advance by one full
    width.
    """

    R: int
    w: float
    s: float
    width: int
    shift: int
    R_prime_block: int
    L_prime_block: int
    L_block: int
    R_block: int
    T_block: int
    R_init: int

    def as_record(self) -> dict:
        return {
            "kind": "survival",
            "R": self.R,
            "w": self.w,
            "s": self.s,
            "width": self.width,
            "shift": self.shift,
            "R_prime_block": self.R_prime_block,
            "L_prime_block": self.L_prime_block,
            "L_block": self.L_block,
            "R_block": self.R_block,
            "T_block": self.T_block,
            "R_init": self.R_init,
        }


def survival_block_geometry(wave: WaveShape) -> SurvivalBlockGeometry:
    """Derive the survival block extents from a wave shape.

    R_prime_block = ceil(w R / 2), L_prime_block = 2 R_prime_block,
    L_block = 5 L_prime_block, T_block = ceil(width / shift), and the
    profile seed radius R_init equals R_prime_block.
    """

    r_prime = _ceil_guarded(wave.w * wave.R / 2.0)
    l_prime = 2 * r_prime
    l_block = 5 * l_prime
    t_block = -(-wave.width // wave.shift)
    geom = SurvivalBlockGeometry(
        R=wave.R,
        w=wave.w,
        s=wave.s,
        width=wave.width,
        shift=wave.shift,
        R_prime_block=r_prime,
        L_prime_block=l_prime,
        L_block=l_block,
        R_block=l_block // 2,
        T_block=t_block,
        R_init=r_prime,
    )
    if geom.R_init <= 2 * wave.R:
        raise InvariantError(
            f"survival geometry needs R_init > 2R, got {geom.R_init} <= {2 * wave.R}"
        )
    return geom


@dataclass(frozen=True)
class CCBlockGeometry:
    """Block extents for the complete-convergence construction.

    The constants follow the fixed recipe: c_time is the smallest integer
    strictly above -(d+1)/ln(kappa), c_dens = 1 + 2 c_time, and
    c_space = 4 (1 + c_time); lengths use the natural logarithm (the
    convention is recorded in the geometry dump).
    """

    mu: float
    R: int
    d: int
    eps: float
    kappa: float
    shift: int
    c_time: int
    c_space: int
    c_dens: int
    L_prime_block: int
    L_block: int
    T_block: int
    R_dens: int
    R_init: int
    m0: int

    @property
    def R_prime_block(self) -> int:
        return self.L_prime_block // 2

    @property
    def R_block(self) -> int:
        return self.L_block // 2

    def R_prime_of_k(self, k: int) -> int:
        """Radius of the agreement region grown for k steps."""

        return self.R_prime_block + k * self.shift

    @property
    def contraction_bound(self) -> float:
        """Union bound kappa^T * (2 R'(T) + 1)^d on a coupling failure."""

        volume = float(2 * self.R_prime_of_k(self.T_block) + 1) ** self.d
        return self.kappa**self.T_block * volume

    def as_record(self) -> dict:
        return {
            "kind": "complete-convergence",
            "mu": self.mu,
            "R": self.R,
            "d": self.d,
            "eps": self.eps,
            "kappa": self.kappa,
            "shift": self.shift,
            "c_time": self.c_time,
            "c_space": self.c_space,
            "c_dens": self.c_dens,
            "L_prime_block": self.L_prime_block,
            "L_block": self.L_block,
            "T_block": self.T_block,
            "R_dens": self.R_dens,
            "R_init": self.R_init,
            "m0": self.m0,
            "contraction_bound": self.contraction_bound,
            "log_convention": "natural",
        }


def cc_block_geometry(
    mu: float, R: int, d: int, eps: float, wave: WaveShape, m0: int
) -> CCBlockGeometry:
    """Build the complete-convergence block extents.

    m0 is the ring count, i.e. the length of the bracket sequences used by
    the ring profiles; R_init = R_dens + m0 * R seeds the outer lower tail.
    """

    if R < 2:
        raise ValueError(f"block coarse-graining needs R >= 2, got {R}")
    if wave.R != R:
        raise ValueError(f"wave was built for R={wave.R}, geometry wants R={R}")
    if m0 < 1:
        raise ValueError(f"m0 must be >= 1, got {m0}")
    kappa = contraction_constant(mu, eps)
    c_time = math.floor(-(d + 1) / math.log(kappa)) + 1
    c_dens = 1 + 2 * c_time
    c_space = 4 * (1 + c_time)
    l_prime = 2 * _ceil_guarded(R * math.log(R))
    r_prime = l_prime // 2
    t_block = c_time * _ceil_guarded(math.log(R))
    r_dens = 2 * c_dens * r_prime
    geom = CCBlockGeometry(
        mu=mu,
        R=R,
        d=d,
        eps=eps,
        kappa=kappa,
        shift=wave.shift,
        c_time=c_time,
        c_space=c_space,
        c_dens=c_dens,
        L_prime_block=l_prime,
        L_block=c_space * l_prime,
        T_block=t_block,
        R_dens=r_dens,
        R_init=r_dens + m0 * R,
        m0=m0,
    )
    needed = r_prime + t_block * wave.shift + t_block * R
    if not r_dens > needed:
        raise InvariantError(
            f"R_dens={r_dens} must exceed R'+T*shift+T*R={needed} "
            f"(mu={mu}, R={R}, d={d}, eps={eps})"
        )
    return geom


@dataclass(frozen=True)
class BlockVerdict:
    """Outcome of a block detector at one anchor."""

    z: tuple
    t: int
    well_started: bool
    good: bool
    failure: str | None = None
    first_violation: tuple | None = None

    def __post_init__(self) -> None:
        if self.good and not self.well_started:
            raise InvariantError("a good block must be well-started")


def _gather(values: np.ndarray, shape: LatticeShape, coords: np.ndarray) -> np.ndarray:
    """Read a lattice array at centered coordinates, shape (..., dim)."""

    idx = np.asarray(coords, dtype=np.int64) + np.asarray(shape.center, dtype=np.int64)
    sides = np.asarray(shape.sides, dtype=np.int64)
    if shape.boundary is Boundary.PERIODIC:
        idx = idx % sides
    elif np.any(idx < 0) or np.any(idx >= sides):
        raise ValueError("block footprint leaves the zero-padded window")
    flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), shape.sides)
    return values.reshape(-1)[flat]


def _require_box(shape: LatticeShape, z: tuple, radius: int) -> None:
    if shape.boundary is Boundary.PERIODIC:
        if any(2 * radius + 1 > s for s in shape.sides):
            raise ValueError(
                f"torus sides {shape.sides} cannot hold a block of radius {radius}"
            )
    else:
        center = shape.center
        for zi, ci, si in zip(z, center, shape.sides):
            if zi + ci - radius < 0 or zi + ci + radius > si - 1:
                raise ValueError(
                    f"block at {z} with radius {radius} leaves the window"
                )


def _require_span(t0: int, t_end: int, t: int, horizon: int) -> None:
    if t < t0 or t + horizon > t_end:
        raise ValueError(
            f"detector needs frames [{t}, {t + horizon}] but the trajectory "
            f"covers [{t0}, {t_end}]"
        )


def _frame_density(
    traj, time: int, member: int | None, R: int, cache: dict | None
) -> np.ndarray:
    key = (time, member)
    if cache is not None and key in cache:
        return cache[key]
    occ = traj.at(time) if member is None else traj.at(time, member)
    dens = compute_density(Configuration(traj.shape, occ), R).values
    if cache is not None:
        cache[key] = dens
    return dens


def survival_block_check(
    traj: Trajectory,
    geom: SurvivalBlockGeometry,
    xi: XiMinusProfile,
    z,
    t: int,
    density_cache: dict | None = None,
) -> BlockVerdict:
    """Check the survival block anchored at (z, t) on a stored trajectory.

    Well-started: the window density at time t dominates xi_0(. - z) on the
    box of radius R_block.  Good: the domination holds for the advanced
    profiles xi_n at every n = 0..T_block.
    """

    z = tuple(int(c) for c in np.atleast_1d(z))
    shape = traj.shape
    if len(z) != shape.dim:
        raise ValueError(f"anchor {z} has wrong dimension for {shape.dim}-d lattice")
    if xi.d != shape.dim or xi.wave.R != geom.R:
        raise ValueError("profile family does not match the block geometry")
    _require_span(traj.t0, traj.t_end, t, geom.T_block)
    _require_box(shape, z, geom.R_block)

    offsets = box_coords(geom.R_block, shape.dim)
    coords = offsets + np.asarray(z, dtype=np.int64)
    well_started = False
    for n in range(geom.T_block + 1):
        dens = _frame_density(traj, t + n, None, geom.R, density_cache)
        profile_vals = xi.advanced(n).value(offsets) if n else xi.value(offsets)
        ok = _gather(dens, shape, coords) >= profile_vals
        if not ok.all():
            i = int(np.argmin(ok))
            violation = (tuple(int(c) for c in coords[i]), n)
            return BlockVerdict(
                z=z,
                t=t,
                well_started=well_started,
                good=False,
                failure="domination",
                first_violation=violation,
            )
        if n == 0:
            well_started = True
    return BlockVerdict(z=z, t=t, well_started=True, good=True)


def _band_ok(
    dens: np.ndarray,
    shape: LatticeShape,
    coords: np.ndarray,
    lower_vals: np.ndarray,
    upper_vals: np.ndarray,
) -> int | None:
    """Index of the first out-of-band site, or None if all are inside."""

    vals = _gather(dens, shape, coords)
    ok = (vals >= lower_vals) & (vals <= upper_vals)
    if ok.all():
        return None
    return int(np.argmin(ok))


def cc_block_check(
    pair: PairTrajectory,
    geom: CCBlockGeometry,
    ring: RingProfile,
    z,
    t: int,
    density_cache: dict | None = None,
) -> BlockVerdict:
    """Check the complete-convergence block anchored at (z, t).

    Well-started (i): both members' densities sit in [zeta_0^-, zeta_0^+]
    around z and the members agree sitewise on B_{R'_block}(z).  Good adds
    (ii) agreement on B_{3 R'_block}(z) at time t + T_block and (iii) the
    density band re-established around all 3^d shifted anchors z + L' e.
    """

    z = tuple(int(c) for c in np.atleast_1d(z))
    shape = pair.shape
    if len(z) != shape.dim:
        raise ValueError(f"anchor {z} has wrong dimension for {shape.dim}-d lattice")
    if ring.d != shape.dim or ring.R != geom.R:
        raise ValueError("ring profile does not match the block geometry")
    _require_span(pair.t0, pair.t_end, t, geom.T_block)
    support = ring.lower_support
    _require_box(shape, z, support + geom.L_prime_block)

    sup_offsets = box_coords(support, shape.dim)
    lower_vals = ring.lower(sup_offsets)
    upper_vals = ring.upper(sup_offsets)
    z_arr = np.asarray(z, dtype=np.int64)

    def verdict(well: bool, failure: str, violation: tuple) -> BlockVerdict:
        return BlockVerdict(
            z=z, t=t, well_started=well, good=False,
            failure=failure, first_violation=violation,
        )

    # (i) density band at time t for both members.
    coords0 = sup_offsets + z_arr
    for member in (0, 1):
        dens = _frame_density(pair, t, member, geom.R, density_cache)
        bad = _band_ok(dens, shape, coords0, lower_vals, upper_vals)
        if bad is not None:
            x = tuple(int(c) for c in coords0[bad])
            return verdict(False, "i:density-band", (x, t, member))
    # (i) sitewise agreement on B_{R'}(z) at time t.
    agree_coords = box_coords(geom.R_prime_block, shape.dim) + z_arr
    a0 = _gather(pair.at(t, 0), shape, agree_coords)
    b0 = _gather(pair.at(t, 1), shape, agree_coords)
    eq = a0 == b0
    if not eq.all():
        i = int(np.argmin(eq))
        x = tuple(int(c) for c in agree_coords[i])
        return verdict(False, "i:agreement", (x, t, None))

    top = t + geom.T_block
    # (ii) agreement on B_{3R'}(z) at the top of the block.
    wide_coords = box_coords(3 * geom.R_prime_block, shape.dim) + z_arr
    a1 = _gather(pair.at(top, 0), shape, wide_coords)
    b1 = _gather(pair.at(top, 1), shape, wide_coords)
    eq = a1 == b1
    if not eq.all():
        i = int(np.argmin(eq))
        x = tuple(int(c) for c in wide_coords[i])
        return verdict(True, "ii:agreement", (x, top, None))
    # (iii) density band around every shifted anchor z + L' e.
    dim = shape.dim
    for e in box_coords(1, dim):
        shifted = sup_offsets + z_arr + e * geom.L_prime_block
        for member in (0, 1):
            dens = _frame_density(pair, top, member, geom.R, density_cache)
            bad = _band_ok(dens, shape, shifted, lower_vals, upper_vals)
            if bad is not None:
                x = tuple(int(c) for c in shifted[bad])
                return verdict(True, "iii:density-band", (x, top, member))
    return BlockVerdict(z=z, t=t, well_started=True, good=True)


@dataclass(frozen=True)
class PyramidResult:
    """Outcome of the shrinking space-time pyramid scan."""

    ok: bool
    theta: float
    eps: float
    contraction_bound: float
    first_violation: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def pyramid_check(
    pair: PairTrajectory,
    geom: CCBlockGeometry,
    eps: float,
    z,
    t: int,
    density_cache: dict | None = None,
) -> PyramidResult:
    """Check |density - theta| < eps on the pyramid over (z, t).

    At time t + j (j = 1..T_block) the required radius is
    R'(T_block) + (T_block - j) R, so the controlled region shrinks toward
    the top of the block.  The union bound kappa^T * V_{R'(T)} on the
    failure probability is reported alongside the verdict.
    """

    z = tuple(int(c) for c in np.atleast_1d(z))
    shape = pair.shape
    _require_span(pair.t0, pair.t_end, t, geom.T_block)
    base_radius = geom.R_prime_of_k(geom.T_block)
    _require_box(shape, z, base_radius + (geom.T_block - 1) * geom.R)
    th = theta(geom.mu)
    z_arr = np.asarray(z, dtype=np.int64)
    for j in range(1, geom.T_block + 1):
        radius = base_radius + (geom.T_block - j) * geom.R
        coords = box_coords(radius, shape.dim) + z_arr
        for member in (0, 1):
            dens = _frame_density(pair, t + j, member, geom.R, density_cache)
            vals = _gather(dens, shape, coords)
            ok = np.abs(vals - th) < eps
            if not ok.all():
                i = int(np.argmin(ok))
                x = tuple(int(c) for c in coords[i])
                return PyramidResult(
                    ok=False,
                    theta=th,
                    eps=eps,
                    contraction_bound=geom.contraction_bound,
                    first_violation=(x, t + j, member),
                )
    return PyramidResult(
        ok=True, theta=th, eps=eps, contraction_bound=geom.contraction_bound
    )


@dataclass
class CensusLayer:
    """Detector outcomes for one anchor layer."""

    t: int
    anchors: list
    well_started: list
    good: list

    @property
    def n_good(self) -> int:
        return sum(self.good)

    @property
    def n_well_started(self) -> int:
        return sum(self.well_started)


@dataclass
class BlockCensus:
    """Layered detector statistics plus open-path reachability."""

    layers: list = field(default_factory=list)
    good_fraction: float = 0.0
    path_exists: bool = False

    def csv_rows(self) -> list[str]:
        dim = len(self.layers[0].anchors[0]) if self.layers and self.layers[0].anchors else 1
        header = "t," + ",".join(f"z{i}" for i in range(dim)) + ",well_started,good"
        rows = [header]
        for layer in self.layers:
            for anchor, well, good in zip(layer.anchors, layer.well_started, layer.good):
                coords = ",".join(str(c) for c in anchor)
                rows.append(f"{layer.t},{coords},{int(well)},{int(good)}")
        return rows


def _anchor_grid(shape: LatticeShape, pitch: int, radius: int) -> list[tuple]:
    """Anchors on pitch*Z^d whose detector box of `radius` fits the window."""

    per_axis = []
    for ctr, side in zip(shape.center, shape.sides):
        lo, hi = -ctr, side - 1 - ctr
        if shape.boundary is not Boundary.PERIODIC:
            lo, hi = lo + radius, hi - radius
        ks = range(-(-lo // pitch), hi // pitch + 1)
        per_axis.append([k * pitch for k in ks])
    if any(not axis for axis in per_axis):
        return []
    mesh = np.meshgrid(*per_axis, indexing="ij")
    return [tuple(int(c) for c in row) for row in np.stack(mesh, axis=-1).reshape(-1, shape.dim)]


def _adjacent(a: tuple, b: tuple, pitch: int, shape: LatticeShape) -> bool:
    for ai, bi, side in zip(a, b, shape.sides):
        diff = abs(ai - bi)
        if shape.boundary is Boundary.PERIODIC:
            diff = min(diff, side - diff)
        if diff > pitch:
            return False
    return True


def block_census(traj, geom, detector, t_start: int | None = None) -> BlockCensus:
    """Evaluate a block detector on every anchor layer of a trajectory.

    `detector` maps (z, t) to a BlockVerdict; layers sit at t_start + i*T_block.
    The census records per-layer counts and whether an open oriented path of
    good blocks (steps of at most L'_block per layer) connects the first
    layer to the last one inside the window.
    """

    t0 = traj.t0 if t_start is None else t_start
    if t0 + geom.T_block > traj.t_end:
        raise ValueError(
            f"trajectory [{traj.t0}, {traj.t_end}] is too short for one block "
            f"of depth {geom.T_block} starting at {t0}"
        )
    radius = geom.R_block
    anchors = _anchor_grid(traj.shape, geom.L_prime_block, radius)
    if not anchors:
        raise ValueError("no block anchor fits in the lattice window")

    census = BlockCensus()
    times = range(t0, traj.t_end - geom.T_block + 1, geom.T_block)
    for t in times:
        layer = CensusLayer(t=t, anchors=list(anchors), well_started=[], good=[])
        for z in anchors:
            v = detector(z, t)
            layer.well_started.append(bool(v.well_started))
            layer.good.append(bool(v.good))
        census.layers.append(layer)

    total = sum(len(layer.anchors) for layer in census.layers)
    census.good_fraction = (
        sum(layer.n_good for layer in census.layers) / total if total else 0.0
    )

    # Forward reachability through good blocks, one layer per block-time.
    current = {
        z for z, good in zip(census.layers[0].anchors, census.layers[0].good) if good
    }
    for layer in census.layers[1:]:
        goods = [z for z, good in zip(layer.anchors, layer.good) if good]
        current = {
            z
            for z in goods
            if any(_adjacent(z, prev, geom.L_prime_block, traj.shape) for prev in current)
        }
        if not current:
            break
    census.path_exists = bool(current)
    return census


def survival_detector(traj: Trajectory, geom: SurvivalBlockGeometry, xi: XiMinusProfile):
    """Bind a survival detector to one trajectory with a shared density cache."""

    cache: dict = {}
    return lambda z, t: survival_block_check(traj, geom, xi, z, t, density_cache=cache)


def cc_detector(pair: PairTrajectory, geom: CCBlockGeometry, ring: RingProfile):
    """Bind a complete-convergence detector to one pair trajectory."""

    cache: dict = {}
    return lambda z, t: cc_block_check(pair, geom, ring, z, t, density_cache=cache)


def write_census_csv(census: BlockCensus, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for row in census.csv_rows():
            fh.write(row + "\n")


def write_geometry_ndjson(geom, path) -> None:
    """Dump one geometry record as a single NDJSON line."""

    with open(path, "w", encoding="ascii") as fh:
        fh.write(json.dumps(geom.as_record(), sort_keys=True) + "\n")
