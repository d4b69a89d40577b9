"""Finite lattice windows, occupancy configurations, and exact local densities.

The simulator works on a finite d-dimensional window of side lengths
``sides``, standing in for Z^d.  Sites are addressed two ways:

* array indices, the obvious row-major tuple into the occupancy array;
* centered coordinates, integer offsets from the window center, so that
  "site 0" in a 1-d experiment means the central site.

The local density of a {0,1} configuration at x is the fraction of occupied
sites in the sup-norm ball B_R(x), a ball that contains (2R+1)^d sites.
Window sums are accumulated in int64 with one running-sum pass per axis and
divided by the ball volume exactly once at the end, so reported densities
are the correctly rounded floats of exact rationals k/(2R+1)^d and two
evaluation orders can never disagree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Flattened site indices are packed into 64-bit counters elsewhere and the
# windowed prefix sums must stay inside int64, so refuse absurd geometries
# up front instead of wrapping silently somewhere downstream.
MAX_SITES = 1 << 31
MAX_BALL_VOLUME = 1 << 62


class Boundary(enum.Enum):
    """How window sums treat sites beyond the edge of the window."""

    PERIODIC = "torus"
    ZERO_PADDED = "zero"


def ball_volume(R: int, d: int) -> int:
    """Number of lattice sites in a sup-norm ball of radius R in d dimensions.

    Exact integer (2R+1)^d.  Volumes beyond the supported integer range are
    an explicit error, never a silent wrap.
    """
    R = int(R)
    d = int(d)
    if R < 0:
        raise ValueError(f"interaction radius must be >= 0, got {R}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    vol = (2 * R + 1) ** d
    if vol > MAX_BALL_VOLUME:
        raise ValueError(
            f"ball volume (2*{R}+1)^{d} = {vol} exceeds the supported range 2^62"
        )
    return vol


@dataclass(frozen=True)
class LatticeShape:
    """Geometry of the finite window: dimension, side lengths, boundary rule."""

    dim: int
    sides: tuple[int, ...]
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if len(self.sides) != self.dim:
            raise ValueError(
                f"expected {self.dim} side lengths, got {len(self.sides)}"
            )
        if any(s < 1 for s in self.sides):
            raise ValueError(f"side lengths must be >= 1, got {self.sides}")
        if not isinstance(self.boundary, Boundary):
            raise ValueError(f"boundary must be a Boundary, got {self.boundary!r}")
        total = 1
        for s in self.sides:
            total *= s
        if total > MAX_SITES:
            raise ValueError(
                f"window with {total} sites exceeds the supported {MAX_SITES}"
            )

    @classmethod
    def line(cls, side: int, boundary: Boundary = Boundary.PERIODIC) -> "LatticeShape":
        return cls(1, (side,), boundary)

    @classmethod
    def cube(
        cls, dim: int, side: int, boundary: Boundary = Boundary.PERIODIC
    ) -> "LatticeShape":
        return cls(dim, (side,) * dim, boundary)

    @property
    def n_sites(self) -> int:
        return int(np.prod([*self.sides], dtype=object))

    @property
    def center(self) -> tuple[int, ...]:
        return tuple(s // 2 for s in self.sides)

    def coord_to_index(self, coord) -> tuple[int, ...]:
        """Centered coordinate -> array index tuple (wrapping on the torus)."""
        coord = tuple(int(c) for c in np.atleast_1d(coord))
        if len(coord) != self.dim:
            raise ValueError(f"coordinate {coord} has wrong dimension")
        idx = []
        for c, ctr, s in zip(coord, self.center, self.sides):
            j = c + ctr
            if self.boundary is Boundary.PERIODIC:
                j %= s
            elif not 0 <= j < s:
                raise ValueError(f"coordinate {coord} falls outside the window")
            idx.append(j)
        return tuple(idx)

    def coord_to_flat(self, coord) -> int:
        return int(np.ravel_multi_index(self.coord_to_index(coord), self.sides))

    def contains_ball(self, coord, radius: int) -> bool:
        """Whether B_radius(coord) fits in the window without touching the edge rule."""
        if self.boundary is Boundary.PERIODIC:
            return all(2 * radius + 1 <= s for s in self.sides)
        idx = self.coord_to_index(coord)
        return all(
            j - radius >= 0 and j + radius <= s - 1 for j, s in zip(idx, self.sides)
        )


@dataclass
class Configuration:
    """A {0,1} occupancy over a window."""

    shape: LatticeShape
    occupancy: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancy)
        if occ.shape != self.shape.sides:
            raise ValueError(
                f"occupancy shape {occ.shape} does not match window {self.shape.sides}"
            )
        if occ.dtype != np.uint8:
            if occ.size and (occ.min() < 0 or occ.max() > 1):
                raise ValueError("occupancy entries must be 0 or 1")
            occ = occ.astype(np.uint8)
        self.occupancy = occ

    @classmethod
    def empty(cls, shape: LatticeShape) -> "Configuration":
        return cls(shape, np.zeros(shape.sides, dtype=np.uint8))

    @classmethod
    def all_ones(cls, shape: LatticeShape) -> "Configuration":
        return cls(shape, np.ones(shape.sides, dtype=np.uint8))

    @classmethod
    def single_at_center(cls, shape: LatticeShape) -> "Configuration":
        occ = np.zeros(shape.sides, dtype=np.uint8)
        occ[shape.center] = 1
        return cls(shape, occ)

    @classmethod
    def bernoulli(cls, shape: LatticeShape, p: float, rng) -> "Configuration":
        """Independent occupation with probability p; rng needs .random(size)."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"occupation probability must be in [0, 1], got {p}")
        u = rng.random(shape.sides)
        return cls(shape, (u < p).astype(np.uint8))

    @property
    def particle_count(self) -> int:
        return int(self.occupancy.sum(dtype=np.int64))

    def is_empty(self) -> bool:
        return not self.occupancy.any()

    def copy(self) -> "Configuration":
        return Configuration(self.shape, self.occupancy.copy())


@dataclass
class DensityField:
    """A real-valued field over a window (local densities, coupled-map states)."""

    shape: LatticeShape
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.shape.sides:
            raise ValueError(
                f"field shape {vals.shape} does not match window {self.shape.sides}"
            )
        self.values = vals

    def value_at(self, coord) -> float:
        return float(self.values[self.shape.coord_to_index(coord)])


def _extend_axis(arr: np.ndarray, R: int, boundary: Boundary) -> np.ndarray:
    """Append R wrapped or zero entries on both ends of the last axis."""
    L = arr.shape[-1]
    if boundary is Boundary.PERIODIC:
        idx = np.arange(-R, L + R) % L
        return arr[..., idx]
    pad = [(0, 0)] * (arr.ndim - 1) + [(R, R)]
    return np.pad(arr, pad, mode="constant")


def _axis_window_sum_int(arr: np.ndarray, R: int, axis: int, boundary: Boundary) -> np.ndarray:
    if R == 0:
        return arr
    arr = np.moveaxis(arr, axis, -1)
    L = arr.shape[-1]
    ext = _extend_axis(arr, R, boundary)
    csum = np.cumsum(ext, axis=-1, dtype=np.int64)
    out = csum[..., 2 * R :].copy()
    out[..., 1:] -= csum[..., : L - 1]
    return np.moveaxis(out, -1, axis)


def window_counts(
    occ: np.ndarray, R: int, boundary: Boundary, batch_axes: int = 0
) -> np.ndarray:
    """Exact int64 sums over sup-norm balls B_R, one value per site.

    The trailing ``occ.ndim - batch_axes`` axes are lattice axes; any leading
    axes are independent batch lanes (replicas, ensemble members).  One
    running-sum pass per lattice axis, so the cost is linear in the array
    size and independent of R.
    """
    if R < 0:
        raise ValueError(f"window radius must be >= 0, got {R}")
    if not 0 <= batch_axes < occ.ndim or occ.ndim - batch_axes < 1:
        raise ValueError(f"batch_axes={batch_axes} leaves no lattice axes")
    out = occ.astype(np.int64)
    for ax in range(batch_axes, occ.ndim):
        out = _axis_window_sum_int(out, R, ax, boundary)
    return out


def window_means_float(
    values: np.ndarray, R: int, boundary: Boundary, batch_axes: int = 0
) -> np.ndarray:
    """Mean over B_R per site for a real field.

    Accumulates by shifting and adding in a fixed order, (2R+1) terms per
    axis, so the float rounding error is O(V) per entry rather than the O(L)
    a running-sum scheme would give, and results are order-independent.
    """
    if R < 0:
        raise ValueError(f"window radius must be >= 0, got {R}")
    out = np.asarray(values, dtype=np.float64)
    d = out.ndim - batch_axes
    if d < 1:
        raise ValueError(f"batch_axes={batch_axes} leaves no lattice axes")
    for ax in range(batch_axes, out.ndim):
        moved = np.moveaxis(out, ax, -1)
        L = moved.shape[-1]
        ext = _extend_axis(moved, R, boundary)
        acc = np.zeros_like(moved)
        for k in range(2 * R + 1):
            acc += ext[..., k : k + L]
        out = np.moveaxis(acc, -1, ax)
    return out / float(ball_volume(R, d))


def compute_density(cfg: Configuration, R: int) -> DensityField:
    """Local density delta_R: fraction of occupied sites in each B_R(x).

    Values are exact multiples of (2R+1)^-dim up to a single correctly
    rounded float division per site.
    """
    vol = ball_volume(R, cfg.shape.dim)
    # The per-axis running sums stay below vol * (longest extended axis).
    longest = max(cfg.shape.sides) + 2 * R
    if vol * longest >= 1 << 63:
        raise ValueError("window sums for this geometry would overflow int64")
    counts = window_counts(cfg.occupancy, R, cfg.shape.boundary)
    return DensityField(cfg.shape, counts / float(vol))


def _kernel_counts_1d(R: int, n: int) -> list[int]:
    """Exact path counts after n steps of a 1-d jump uniform on {-R..R}."""
    counts = [1]
    width = 2 * R + 1
    for _ in range(n):
        new_len = len(counts) + width - 1
        new = [0] * new_len
        for i, c in enumerate(counts):
            for j in range(width):
                new[i + j] += c
        counts = new
    return counts


def random_walk_kernel(R: int, d: int, n: int) -> np.ndarray:
    """n-step transition kernel of the walk whose single step is uniform on B_R.

    Returns a d-dimensional array over the natural support box, side 2nR+1
    per axis, centered at the origin; entry [i_1,...,i_d] is the probability
    of displacement (i_1 - nR, ..., i_d - nR).  The kernel factorizes across
    axes, so it is built as an outer product of the exact 1-d kernel; each
    1-d weight is an exact integer path count divided once by (2R+1)^n.
    """
    R = int(R)
    n = int(n)
    if R < 0:
        raise ValueError(f"walk radius must be >= 0, got {R}")
    if n < 0:
        raise ValueError(f"step count must be >= 0, got {n}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    side = 2 * n * R + 1
    if side**d > (1 << 26):
        raise ValueError(
            f"kernel support {side}^{d} is too large to materialize"
        )
    denom = (2 * R + 1) ** n
    probs = np.array([c / denom for c in _kernel_counts_1d(R, n)], dtype=np.float64)
    kernel = probs
    for _ in range(d - 1):
        kernel = np.multiply.outer(kernel, probs)
    return kernel


def embed_kernel(kernel: np.ndarray, shape: LatticeShape) -> np.ndarray:
    """Place an origin-centered kernel into a window, wrapping on the torus.

    With zero-padded boundaries the support must fit inside the window around
    its center; mass falling outside is an error, not a silent loss.
    """
    if kernel.ndim != shape.dim:
        raise ValueError(
            f"kernel dimension {kernel.ndim} does not match window dimension {shape.dim}"
        )
    radii = []
    for ax, k_side in enumerate(kernel.shape):
        if k_side % 2 != 1:
            raise ValueError("kernel sides must be odd (origin-centered support)")
        radii.append(k_side // 2)
    center = shape.center
    if shape.boundary is Boundary.ZERO_PADDED:
        for ax, r in enumerate(radii):
            if center[ax] - r < 0 or center[ax] + r > shape.sides[ax] - 1:
                raise ValueError(
                    f"kernel support radius {r} along axis {ax} does not fit in a "
                    f"zero-padded window of side {shape.sides[ax]}"
                )
    out = np.zeros(shape.sides, dtype=np.float64)
    grids = np.meshgrid(
        *[
            (np.arange(-r, r + 1) + c) % s
            for r, c, s in zip(radii, center, shape.sides)
        ],
        indexing="ij",
    )
    np.add.at(out, tuple(g for g in grids), kernel)
    return out


SNAPSHOT_MAGIC = "#barw-snapshot"


def save_snapshot(cfg: Configuration, path) -> None:
    """Write a text snapshot: a geometry header line, then 0/1 rows."""
    shape = cfg.shape
    lines = [
        f"{SNAPSHOT_MAGIC} dim={shape.dim} sides={','.join(map(str, shape.sides))} "
        f"boundary={shape.boundary.value}"
    ]
    flat_rows = cfg.occupancy.reshape(-1, shape.sides[-1])
    for row in flat_rows:
        lines.append("".join("1" if v else "0" for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_snapshot(path) -> Configuration:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(SNAPSHOT_MAGIC):
        raise ValueError(f"{path} is not a snapshot file (missing header)")
    fields = dict(
        item.split("=", 1) for item in lines[0][len(SNAPSHOT_MAGIC) :].split()
    )
    dim = int(fields["dim"])
    sides = tuple(int(s) for s in fields["sides"].split(","))
    boundary = Boundary(fields["boundary"])
    shape = LatticeShape(dim, sides, boundary)
    rows = [ln for ln in lines[1:] if ln]
    expected_rows = shape.n_sites // sides[-1]
    if len(rows) != expected_rows:
        raise ValueError(
            f"snapshot body has {len(rows)} rows, expected {expected_rows}"
        )
    data = np.array(
        [[int(ch) for ch in row] for row in rows], dtype=np.uint8
    ).reshape(sides)
    return Configuration(shape, data)


def write_pgm(values: np.ndarray, path, max_value: float | None = None) -> None:
    """Write a binary (P5) PGM image of a 1-d or 2-d nonnegative array.

    Values are scaled so max_value maps to gray level 255; max_value defaults
    to the array maximum (or 1 for an all-zero array).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"PGM output needs a 1-d or 2-d array, got {arr.ndim}-d")
    if max_value is None:
        max_value = float(arr.max()) if arr.size and arr.max() > 0 else 1.0
    scaled = np.clip(np.rint(arr / max_value * 255.0), 0, 255).astype(np.uint8)
    h, w = scaled.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())


def centered_distance_grid(shape: LatticeShape) -> np.ndarray:
    """Sup-norm distance of every site from the window center, as int64."""
    axes = [np.abs(np.arange(s) - c) for s, c in zip(shape.sides, shape.center)]
    if shape.boundary is Boundary.PERIODIC:
        axes = [np.minimum(a, s - a) for a, s in zip(axes, shape.sides)]
    grid = axes[0]
    for a in axes[1:]:
        grid = np.maximum(grid[..., np.newaxis], a)
    return grid.astype(np.int64)
