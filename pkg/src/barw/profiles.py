"""Traveling wave shapes, block profiles, and the one-step profile verifier.

A wave shape is the clipped ramp

    f(x) = min(eps0 + x / ceil(w R), 1) for x >= 0,   f(x) = 0 for x < 0,

with eps0, w, s derived from a growth factor a > 1.  Its one job: windowed
averages of f, multiplied by a, dominate f shifted ceil(s R) sites forward.
That single 1-d inequality is what pushes a density lower bound outward one
shift per generation, and everything here either builds shapes with that
property or checks it.

Profiles assemble shapes into space bounds.  The survival profile xi_minus
is a plateau of height b with ramped edges, widening by the shift each
generation.  The ring profile zeta sandwiches the density between bracket
values: the innermost plateau carries the deepest bracket pair, concentric
R-thick shells carry progressively earlier pairs, and beyond the rings the
lower bound hands off to xi_minus while the upper bound relaxes to a
constant.

verify_profile_pair is the numeric auditor: given the profile pair at one
generation and the claimed pair at the next, it bounds the update map over
the per-site band [lower(y), upper(y)], window-averages those bounds, and
reports the largest margin delta for which the claimed pair still clears
(1 + delta) / (1 - delta) factors.  No step of the bound chain is taken on
faith; the auditor recomputes it on every site of the claimed support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cml import phi
from .dynamics import PsiSpec
from .errors import InvariantError
from .lattice import Boundary, ball_volume, window_means_float

INV_E = math.exp(-1.0)


def _ceil_guarded(x: float) -> int:
    """Ceiling with a tiny downward nudge so 20.000000000000004 -> 20."""
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True)
class WaveShape:
    """A clipped-ramp shape together with its growth and shift parameters.

    a_input is the requested growth factor; a is the effective one after
    the flattening reduction a -> 1 + sqrt(eps0), which only bites when
    a_input > 11/10.  width = ceil(w R) sites of ramp, shift = ceil(s R)
    sites of advance per generation.
    """

    a_input: float
    a: float
    eps0: float
    w: float
    s: float
    R: int
    width: int
    shift: int

    def f(self, x):
        """The shape at integer offsets: 0 left of 0, ramp, then plateau 1."""
        arr = np.asarray(x, dtype=np.int64)
        ramp = self.eps0 + arr / float(self.width)
        out = np.where(arr < 0, 0.0, np.minimum(ramp, 1.0))
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    def f_fraction(self, x: int) -> Fraction:
        """Exact rational value of f at one offset (eps0 taken as its float)."""
        x = int(x)
        if x < 0:
            return Fraction(0)
        return min(Fraction(self.eps0) + Fraction(x, self.width), Fraction(1))


def build_wave_shape(a: float, R: int) -> WaveShape:
    """Derive (eps0, w, s) from the growth factor and discretize at radius R.

    eps0 = min((a - 1)^2, 1/100); the effective growth factor is
    1 + sqrt(eps0) (never more than 11/10, flattening stronger growth);
    w = 1 / sqrt(eps0); s = sqrt(eps0) / (1 + sqrt(eps0)) - eps0 > 0.
    """
    if not (math.isfinite(a) and a > 1.0):
        raise ValueError(f"growth factor must be > 1, got {a}")
    R = int(R)
    if R < 1:
        raise ValueError(f"radius must be >= 1, got {R}")
    eps0 = min((a - 1.0) ** 2, 0.01)
    root = math.sqrt(eps0)
    a_eff = 1.0 + root
    w = 1.0 / root
    s = root / (1.0 + root) - eps0
    width = _ceil_guarded(w * R)
    shift = _ceil_guarded(s * R)
    if shift < 1:
        raise InvariantError(f"wave shift collapsed to {shift} at a={a}, R={R}")
    return WaveShape(
        a_input=float(a), a=a_eff, eps0=eps0, w=w, s=s, R=R, width=width, shift=shift
    )


@dataclass(frozen=True)
class DominationReport:
    """Outcome of checking a * (window mean of f) >= f(. + shift)."""

    holds: bool
    first_failure: int | None
    min_margin: float
    checked_lo: int
    checked_hi: int
    exact: bool


def verify_density_domination(shape: WaveShape, exact: bool = False) -> DominationReport:
    """Check the advance inequality for one wave shape.

    The inequality a * mean(f over [x-R, x+R]) >= f(x + shift) is trivial
    far left (both sides 0) and far right (left side -> a > 1, right side
    1), so it is checked on x in [-R - shift - 1, width + R + 1], which
    covers every site where either side is away from its limit, plus a
    sanity margin.  exact=True redoes the comparison in rational arithmetic
    (floats of eps0 and a taken as exact rationals); the float path allows
    1e-12 slack for rounding.
    """
    R = shape.R
    lo = -R - shape.shift - 1
    hi = shape.width + R + 1
    xs = np.arange(lo, hi + 1)
    grid = np.arange(lo - R, hi + R + 1)
    f_grid = shape.f(grid)
    win = np.lib.stride_tricks.sliding_window_view(f_grid, 2 * R + 1)
    means = win.sum(axis=-1) / float(2 * R + 1)
    lhs = shape.a * means
    rhs = shape.f(xs + shape.shift)
    margins = lhs - rhs
    bad = margins < -1e-12
    holds = not bad.any()
    first_failure = int(xs[bad][0]) if bad.any() else None
    if exact:
        a_frac = Fraction(shape.a)
        vol = 2 * R + 1
        first_failure = None
        min_margin = None
        for x in range(lo, hi + 1):
            total = sum(shape.f_fraction(y) for y in range(x - R, x + R + 1))
            margin = a_frac * total / vol - shape.f_fraction(x + shape.shift)
            if min_margin is None or margin < min_margin:
                min_margin = margin
            if margin < 0 and first_failure is None:
                first_failure = x
        holds = first_failure is None
        return DominationReport(
            holds=holds,
            first_failure=first_failure,
            min_margin=float(min_margin),
            checked_lo=lo,
            checked_hi=hi,
            exact=True,
        )
    return DominationReport(
        holds=holds,
        first_failure=first_failure,
        min_margin=float(margins.min()),
        checked_lo=lo,
        checked_hi=hi,
        exact=False,
    )


def find_min_radius(a: float, R_max: int = 4096) -> int | None:
    """Smallest radius whose wave shape passes the advance inequality.

    Doubles R until the check passes, then bisects down.  Returns None if
    nothing passes up to R_max.  Monotonicity in R is empirical, so the
    result is guaranteed passing with a failing predecessor, not a proven
    global minimum.
    """

    def passes(R: int) -> bool:
        return verify_density_domination(build_wave_shape(a, R)).holds

    hi = 1
    while hi <= R_max and not passes(hi):
        hi *= 2
    if hi > R_max:
        return None
    lo = hi // 2  # lo of 0 means hi == 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= 1 and passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class XiMinusProfile:
    """The survival lower profile: plateau b, ramped edge, product over axes.

    xi_n(x) = b * prod_i f(R_init + n*shift + width - |x_i|); equals b on
    the sup-norm ball of radius R_init + n*shift, falls to 0 beyond
    support_radius = plateau + width, and its positive values never drop
    below b * eps0^d.
    """

    wave: WaveShape
    d: int
    R_init: int
    b: float
    n: int

    @property
    def plateau_radius(self) -> int:
        return self.R_init + self.n * self.wave.shift

    @property
    def support_radius(self) -> int:
        return self.plateau_radius + self.wave.width

    @property
    def floor(self) -> float:
        return self.b * self.wave.eps0**self.d

    def value(self, coords) -> np.ndarray:
        """Evaluate at integer coordinates, last axis indexing the dimension."""
        arr = np.asarray(coords, dtype=np.int64)
        if arr.shape[-1] != self.d:
            raise ValueError(
                f"coordinates have dimension {arr.shape[-1]}, profile has {self.d}"
            )
        offsets = self.support_radius - np.abs(arr)
        return self.b * np.prod(self.wave.f(offsets), axis=-1)

    def values_on_box(self, radius: int) -> np.ndarray:
        """Dense values on the centered box [-radius, radius]^d."""
        axis = self.wave.f(self.support_radius - np.abs(np.arange(-radius, radius + 1)))
        out = axis
        for _ in range(self.d - 1):
            out = np.multiply.outer(out, axis)
        return self.b * out

    def advanced(self, steps: int = 1) -> "XiMinusProfile":
        return XiMinusProfile(self.wave, self.d, self.R_init, self.b, self.n + steps)


def build_xi_minus(
    d: int, R: int, R_init: int, b: float, n: int, wave: WaveShape
) -> XiMinusProfile:
    """Construct and sanity-check a survival lower profile."""
    if wave.R != R:
        raise ValueError(f"wave was built at radius {wave.R}, not {R}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if R_init <= 2 * R:
        raise ValueError(f"R_init must exceed 2R = {2 * R}, got {R_init}")
    if not 0.0 < b <= 1.0:
        raise ValueError(f"plateau height must be in (0, 1], got {b}")
    if n < 0:
        raise ValueError(f"profile index must be >= 0, got {n}")
    prof = XiMinusProfile(wave=wave, d=d, R_init=R_init, b=float(b), n=int(n))
    # cheap construction-time checks of the advertised geometry
    origin = np.zeros((1, d), dtype=np.int64)
    edge = np.zeros((1, d), dtype=np.int64)
    edge[0, 0] = prof.plateau_radius
    beyond = np.zeros((1, d), dtype=np.int64)
    beyond[0, 0] = prof.support_radius + 1
    if not (
        prof.value(origin)[0] == prof.b
        and prof.value(edge)[0] == prof.b
        and prof.value(beyond)[0] == 0.0
    ):
        raise InvariantError("xi profile does not match its advertised geometry")
    return prof


@dataclass(frozen=True)
class RingProfile:
    """The two-sided density profile: bracket plateau, bracket rings, tails.

    Within radius R_dens + k*shift both bounds sit at the deepest bracket
    pair (alpha_{m0}, beta_{m0}); the j-th surrounding R-thick shell carries
    (alpha_{m0-j+1}, beta_{m0-j+1}); past the rings the lower bound becomes
    the survival profile xi_k seeded at R_dens + m0*R and the upper bound
    the constant max(1, beta_1).
    """

    mu: float
    R: int
    d: int
    k: int
    alphas: tuple
    betas: tuple
    R_dens: int
    wave: WaveShape
    xi_tail: XiMinusProfile

    @property
    def m0(self) -> int:
        return len(self.alphas)

    @property
    def plateau_radius(self) -> int:
        return self.R_dens + self.k * self.wave.shift

    @property
    def ring_radius(self) -> int:
        return self.plateau_radius + self.m0 * self.R

    @property
    def lower_support(self) -> int:
        return self.xi_tail.support_radius

    @property
    def floor(self) -> float:
        return self.xi_tail.floor

    def _radii(self, coords) -> np.ndarray:
        arr = np.asarray(coords, dtype=np.int64)
        if arr.shape[-1] != self.d:
            raise ValueError(
                f"coordinates have dimension {arr.shape[-1]}, profile has {self.d}"
            )
        return np.abs(arr).max(axis=-1)

    def _ring_values(self, coords, levels, tail) -> np.ndarray:
        r = self._radii(coords)
        shell = np.clip(
            np.ceil((r - self.plateau_radius) / self.R).astype(np.int64), 0, self.m0
        )
        # shell 0 is the plateau; shell j carries levels[m0 - j] (0-based)
        idx = np.where(shell == 0, self.m0 - 1, self.m0 - shell)
        vals = np.asarray(levels, dtype=np.float64)[idx]
        return np.where(r <= self.ring_radius, vals, tail)

    def lower(self, coords) -> np.ndarray:
        tail = self.xi_tail.value(coords)
        return self._ring_values(coords, self.alphas, tail)

    def upper(self, coords) -> np.ndarray:
        tail_const = max(1.0, self.betas[0])
        r = self._radii(coords)
        return self._ring_values(coords, self.betas, np.full(r.shape, tail_const))

    def advanced(self, steps: int = 1) -> "RingProfile":
        return RingProfile(
            mu=self.mu,
            R=self.R,
            d=self.d,
            k=self.k + steps,
            alphas=self.alphas,
            betas=self.betas,
            R_dens=self.R_dens,
            wave=self.wave,
            xi_tail=self.xi_tail.advanced(steps),
        )


def build_zeta_profiles(
    mu: float,
    R: int,
    brackets,
    k: int,
    wave: WaveShape,
    R_dens: int,
    d: int = 1,
    m0: int | None = None,
) -> RingProfile:
    """Construct the two-sided ring profile at generation offset k.

    brackets supplies the nested (alpha, beta) pairs; m0 defaults to all of
    them and may be reduced, never extended past what brackets holds.
    """
    if wave.R != R:
        raise ValueError(f"wave was built at radius {wave.R}, not {R}")
    if k < 0:
        raise ValueError(f"generation offset must be >= 0, got {k}")
    if m0 is None:
        m0 = len(brackets.alphas)
    if m0 < 1:
        raise ValueError(f"need at least one bracket pair, got m0={m0}")
    if m0 > len(brackets.alphas):
        raise ValueError(
            f"brackets hold {len(brackets.alphas)} pairs, fewer than the "
            f"requested m0 = {m0}"
        )
    if R_dens < 1:
        raise ValueError(f"R_dens must be >= 1, got {R_dens}")
    alphas = tuple(brackets.alphas[:m0])
    betas = tuple(brackets.betas[:m0])
    b = alphas[0]
    xi_tail = build_xi_minus(d, R, R_dens + m0 * R, b, k, wave)
    prof = RingProfile(
        mu=float(mu),
        R=int(R),
        d=int(d),
        k=int(k),
        alphas=alphas,
        betas=betas,
        R_dens=int(R_dens),
        wave=wave,
        xi_tail=xi_tail,
    )
    # lower <= upper must hold everywhere; sample the plateau, every shell,
    # the hand-off to the tail, and beyond.
    radii = [0, prof.plateau_radius] + [
        min(prof.plateau_radius + j * R, prof.ring_radius) for j in range(1, m0 + 1)
    ] + [prof.ring_radius + 1, prof.lower_support, prof.lower_support + 1]
    probe = np.zeros((len(radii), d), dtype=np.int64)
    probe[:, 0] = radii
    if np.any(prof.lower(probe) > prof.upper(probe) + 1e-15):
        raise InvariantError("ring profile lower bound exceeds its upper bound")
    return prof


@dataclass(frozen=True)
class ProfilePair:
    """A lower/upper profile pair at one generation, with its claims.

    lower and upper map integer coordinate arrays (..., d) to values; lower
    vanishes outside the sup-norm ball of radius lower_support; delta is
    the claimed verification margin (None for unclaimed); eps_floor the
    claimed positive floor of lower.  upper_trivial marks the flat upper
    bound e^{-1}/(1 - delta), in which case only the lower inequality is
    meaningful for the next pair.
    """

    dim: int
    lower: object
    upper: object
    lower_support: int
    delta: float | None = None
    eps_floor: float | None = None
    upper_trivial: bool = False
    label: str = ""


def make_survival_pair(xi: XiMinusProfile, delta: float) -> ProfilePair:
    """Pair a survival lower profile with the flat upper cap e^{-1}/(1-delta)."""
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    cap = INV_E / (1.0 - delta)

    def upper(coords, _cap=cap, _d=xi.d):
        arr = np.asarray(coords, dtype=np.int64)
        return np.full(arr.shape[:-1], _cap)

    return ProfilePair(
        dim=xi.d,
        lower=xi.value,
        upper=upper,
        lower_support=xi.support_radius,
        delta=delta,
        eps_floor=xi.floor,
        upper_trivial=True,
        label=f"xi-minus(n={xi.n})",
    )


def make_ring_pair(ring: RingProfile, delta: float | None = None) -> ProfilePair:
    """Pair the two sides of a ring profile."""
    return ProfilePair(
        dim=ring.d,
        lower=ring.lower,
        upper=ring.upper,
        lower_support=ring.lower_support,
        delta=delta,
        eps_floor=ring.floor,
        upper_trivial=False,
        label=f"zeta(k={ring.k})",
    )


@dataclass(frozen=True)
class PhiMap:
    """The phi update map, with unimodal interval extrema."""

    mu: float

    def interval_extrema(self, lo: np.ndarray, hi: np.ndarray):
        f_lo = phi(self.mu, lo)
        f_hi = phi(self.mu, hi)
        peak = 1.0 / self.mu
        peak_val = phi(self.mu, peak)
        inside = (lo <= peak) & (peak <= hi)
        mx = np.where(inside, peak_val, np.maximum(f_lo, f_hi))
        return np.minimum(f_lo, f_hi), mx


@dataclass(frozen=True)
class PsiMap:
    """A comparison update map; both variants are nondecreasing."""

    psi: PsiSpec

    def interval_extrema(self, lo: np.ndarray, hi: np.ndarray):
        return self.psi(lo), self.psi(hi)


@dataclass
class PairReport:
    """Margins achieved when auditing one profile-pair step."""

    holds: bool
    achieved_delta: float
    claimed_delta: float | None
    delta_lower: float
    delta_upper: float
    worst_lower: tuple | None
    worst_upper: tuple | None
    sites_checked: int
    rows: list | None = None

    def to_ndjson_lines(self) -> list[str]:
        if self.rows is None:
            return []
        return [json.dumps(row, sort_keys=True) for row in self.rows]


def box_coords(radius: int, d: int) -> np.ndarray:
    """Integer coordinates of the centered box [-radius, radius]^d, coords-last."""
    axes = [np.arange(-radius, radius + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def verify_profile_pair(
    pair: ProfilePair,
    map_spec,
    R: int,
    next_pair: ProfilePair,
    collect_rows: bool = False,
) -> PairReport:
    """Audit one generation of the profile bound chain.

    For every x in the support of next_pair.lower, bound the update
    probability over the band [pair.lower(y), pair.upper(y)] at each
    y in B_R(x), window-average the two bounds, and compare:

        mean of per-site minima >= (1 + delta) * next_pair.lower(x)
        mean of per-site maxima <= (1 - delta) * next_pair.upper(x)

    The upper inequality is skipped when next_pair carries the trivial flat
    cap.  Reports the largest delta both inequalities tolerate, and whether
    that clears the pair's claimed delta (plain domination when unclaimed).
    """
    if pair.dim != next_pair.dim:
        raise ValueError("profile pairs live in different dimensions")
    d = pair.dim
    inner = int(next_pair.lower_support)
    outer = inner + int(R)
    coords = box_coords(outer, d)
    lo = np.asarray(pair.lower(coords), dtype=np.float64)
    hi = np.asarray(pair.upper(coords), dtype=np.float64)
    if np.any(lo > hi + 1e-12):
        raise ValueError("pair is invalid: lower exceeds upper on the audit box")
    if np.any(lo < 0.0):
        raise ValueError("pair is invalid: lower takes negative values")
    if pair.eps_floor is not None:
        positive = lo > 0.0
        if positive.any() and float(lo[positive].min()) < pair.eps_floor - 1e-12:
            raise ValueError(
                f"pair is invalid: positive lower values fall below the claimed "
                f"floor {pair.eps_floor}"
            )
    mn, mx = map_spec.interval_extrema(lo, hi)
    mean_min = window_means_float(mn, R, Boundary.ZERO_PADDED)
    mean_max = window_means_float(mx, R, Boundary.ZERO_PADDED)
    central = tuple(slice(outer - inner, outer + inner + 1) for _ in range(d))
    mean_min_c = mean_min[central]
    mean_max_c = mean_max[central]
    inner_coords = box_coords(inner, d)
    next_lo = np.asarray(next_pair.lower(inner_coords), dtype=np.float64)
    next_hi = np.asarray(next_pair.upper(inner_coords), dtype=np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        margins_lower = np.where(
            next_lo > 0.0, mean_min_c / next_lo - 1.0, np.inf
        )
    delta_lower = float(margins_lower.min())
    if margins_lower.min() == np.inf:
        worst_lower = None
    else:
        flat = int(np.argmin(margins_lower))
        worst_lower = (
            tuple(int(c) for c in inner_coords.reshape(-1, d)[flat]),
            float(margins_lower.reshape(-1)[flat]),
        )

    if next_pair.upper_trivial:
        delta_upper = math.inf
        worst_upper = None
    else:
        if np.any(next_hi <= 0.0):
            raise ValueError("pair is invalid: next upper bound is not positive")
        margins_upper = 1.0 - mean_max_c / next_hi
        delta_upper = float(margins_upper.min())
        flat = int(np.argmin(margins_upper))
        worst_upper = (
            tuple(int(c) for c in inner_coords.reshape(-1, d)[flat]),
            float(margins_upper.reshape(-1)[flat]),
        )

    achieved = min(delta_lower, delta_upper)
    required = pair.delta if pair.delta is not None else 0.0
    holds = achieved >= required

    rows = None
    if collect_rows:
        rows = []
        flat_coords = inner_coords.reshape(-1, d)
        ml = margins_lower.reshape(-1)
        mu_rows = None if next_pair.upper_trivial else margins_upper.reshape(-1)
        for i in range(len(flat_coords)):
            row = {
                "x": [int(c) for c in flat_coords[i]],
                "margin_lower": None if math.isinf(ml[i]) else float(ml[i]),
            }
            if mu_rows is not None:
                row["margin_upper"] = float(mu_rows[i])
            rows.append(row)

    return PairReport(
        holds=bool(holds),
        achieved_delta=float(achieved),
        claimed_delta=pair.delta,
        delta_lower=delta_lower,
        delta_upper=delta_upper,
        worst_lower=worst_lower,
        worst_upper=worst_upper,
        sites_checked=int(np.prod(next_lo.shape)),
        rows=rows,
    )


def write_profile_csv(pair: ProfilePair, radius: int, path) -> None:
    """Dump lower/upper values on a centered box as CSV rows."""
    coords = box_coords(radius, pair.dim)
    lo = np.asarray(pair.lower(coords), dtype=np.float64).reshape(-1)
    hi = np.asarray(pair.upper(coords), dtype=np.float64).reshape(-1)
    flat = coords.reshape(-1, pair.dim)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("site,lower,upper\n")
        for i in range(len(flat)):
            site = ":".join(str(int(c)) for c in flat[i])
            fh.write(f"{site},{lo[i]!r},{hi[i]!r}\n")
