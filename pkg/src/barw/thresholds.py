"""Extinction thresholds via Lambert W, the effective mean, and Bernstein bounds.

For a fixed interaction radius R in dimension d the one-step offspring
surviving a collision-free landing has effective mean

    mutilde = V * phi_mu(1/V) = mu * exp(-mu / V),   V = (2R+1)**d.

The process dies out whenever mutilde < 1, which happens exactly for mu
outside the band [mu1, mu2] whose endpoints are the two real solutions of
mu * exp(-mu/V) = 1.  Both solutions are Lambert W values:

    mu1 = -V * W0(-1/V),        mu2 = -V * W_{-1}(-1/V).

The module implements both real branches of Lambert W from scratch (Halley
iteration inside a safeguarded bracket) because the band endpoints are part
of the verified numerics: every value is substituted back into the defining
equation before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvariantError
from .lattice import ball_volume

_BRANCH_POINT = -math.exp(-1.0)

#: Residual tolerance for the Lambert W defining identity |w e^w - x| <= tol*|x|.
LAMBERT_TOLERANCE = 1.0e-12

#: Substitution tolerance for the band roots |mu exp(-mu/V) - 1|.
BAND_TOLERANCE = 1.0e-10


def _halley_refine(w: float, x: float, lo: float, hi: float) -> float:
    """Refine a Lambert W estimate by Halley steps inside the bracket [lo, hi].

    The bracket must contain the root; any step that leaves it (or fails to
    be finite) falls back to bisection, so the iteration cannot diverge.
    """

    f_lo = lo * math.exp(lo) - x
    for _ in range(128):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= LAMBERT_TOLERANCE * abs(x) * 0.01 or hi - lo <= 4.0 * math.ulp(max(abs(lo), abs(hi))):
            break
        # Maintain the sign bracket before stepping.
        if (f < 0.0) == (f_lo < 0.0):
            lo, f_lo = w, f
        else:
            hi = w
        fp = ew * (w + 1.0)
        step_ok = False
        if fp != 0.0:
            # Halley's method: w' = w - f / (f' - f*f''/(2 f')).
            denom = fp - f * ew * (w + 2.0) / (2.0 * fp)
            if denom != 0.0:
                cand = w - f / denom
                if math.isfinite(cand) and lo < cand < hi:
                    w = cand
                    step_ok = True
        if not step_ok:
            w = 0.5 * (lo + hi)
    return w


def lambert_w0(x: float) -> float:
    """Principal branch W0 on [-1/e, inf); W0(x) * exp(W0(x)) = x, W0 >= -1."""

    if not math.isfinite(x) or x < _BRANCH_POINT:
        raise ValueError(f"lambert_w0 requires x >= -1/e, got {x!r}")
    if x == 0.0:
        return 0.0
    if x <= _BRANCH_POINT:
        return -1.0
    if x < -0.25:
        # Branch-point expansion in p = sqrt(2(1 + e x)).
        p = math.sqrt(2.0 * (1.0 + math.e * x))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p ** 3 / 72.0
    elif x < 1.0:
        # Series around 0: W0(x) = x - x^2 + (3/2) x^3 - ...
        w = x * (1.0 - x * (1.0 - 1.5 * x))
    else:
        lx = math.log(x)
        llx = math.log(lx) if lx > 0.0 else 0.0
        w = lx - llx + (llx / lx if lx != 0.0 else 0.0)
    w = max(w, -1.0)
    # W0 is increasing; bracket the root generously around the guess.
    lo, hi = -1.0, max(w + 2.0, 2.0)
    while hi * math.exp(hi) < x:
        hi *= 2.0
    w = min(max(w, lo), hi)
    w = _halley_refine(w, x, lo, hi)
    _check_residual(w, x, "lambert_w0")
    if w < -1.0:
        raise InvariantError(f"lambert_w0({x!r}) produced {w!r} below -1")
    return w


def lambert_wm1(x: float) -> float:
    """Secondary real branch W_{-1} on [-1/e, 0); values in (-inf, -1]."""

    if not math.isfinite(x) or x < _BRANCH_POINT or x >= 0.0:
        raise ValueError(f"lambert_wm1 requires -1/e <= x < 0, got {x!r}")
    if x <= _BRANCH_POINT:
        return -1.0
    if x > -0.25:
        # Log-log asymptotic: W_{-1}(x) ~ ln(-x) - ln(-ln(-x)) as x -> 0^-.
        u = math.log(-x)
        w = u - math.log(-u)
    else:
        p = math.sqrt(2.0 * (1.0 + math.e * x))
        w = -1.0 - p - p * p / 3.0
    # w e^w - x is decreasing on (-inf, -1]: positive far left, negative at -1.
    hi = -1.0
    lo = min(w - 2.0, -2.0)
    while lo * math.exp(lo) - x < 0.0:
        lo *= 2.0
    w = min(max(w, lo), hi)
    w = _halley_refine(w, x, lo, hi)
    _check_residual(w, x, "lambert_wm1")
    if w > -1.0:
        raise InvariantError(f"lambert_wm1({x!r}) produced {w!r} above -1")
    return w


def _check_residual(w: float, x: float, name: str) -> None:
    residual = abs(w * math.exp(w) - x)
    if residual > LAMBERT_TOLERANCE * abs(x):
        raise InvariantError(
            f"{name}({x!r}) did not converge: residual {residual:.3e} "
            f"exceeds {LAMBERT_TOLERANCE:.0e} relative"
        )


def wm1_bounds(u: float) -> tuple[float, float]:
    """Two-sided bounds for W_{-1}(-e^{-u-1}) valid for every u > 0.

    Returns (lower, upper) with lower < W_{-1}(-e^{-u-1}) < upper:

        -1 - sqrt(2u) - u  <  W_{-1}(-exp(-u-1))  <  -1 - sqrt(2u) - 2u/3.
    """

    if not u > 0.0:
        raise ValueError(f"wm1_bounds requires u > 0, got {u!r}")
    root = math.sqrt(2.0 * u)
    return (-1.0 - root - u, -1.0 - root - 2.0 * u / 3.0)


@dataclass(frozen=True)
class ExtinctionBand:
    """Interval [mu1, mu2] of branching means compatible with survival.

    Outside the band the effective mean mu*exp(-mu/V) drops below one and
    the population dies out regardless of the initial condition.
    """

    R: int
    d: int
    mu1: float
    mu2: float

    @property
    def volume(self) -> int:
        return ball_volume(self.R, self.d)

    def contains(self, mu: float) -> bool:
        """Whether mu lies in the closed band [mu1, mu2]."""

        return self.mu1 <= mu <= self.mu2

    def __post_init__(self) -> None:
        if not (1.0 < self.mu1 < self.mu2):
            raise InvariantError(
                f"extinction band must satisfy 1 < mu1 < mu2, got "
                f"({self.mu1!r}, {self.mu2!r})"
            )


def extinction_band(R: int, d: int = 1) -> ExtinctionBand:
    """Band endpoints mu1 = -V W0(-1/V), mu2 = -V W_{-1}(-1/V), V = (2R+1)^d.

    Both endpoints are substituted back into mu*exp(-mu/V) = 1 and must agree
    to within BAND_TOLERANCE before the band is returned.
    """

    if R == 0:
        raise ValueError(
            "extinction_band requires R >= 1: when R=0 there is always "
            "extinction (every offspring lands on the parent site)"
        )
    volume = ball_volume(R, d)
    x = -1.0 / volume
    mu1 = -volume * lambert_w0(x)
    mu2 = -volume * lambert_wm1(x)
    band = ExtinctionBand(R=R, d=d, mu1=mu1, mu2=mu2)
    for root in (mu1, mu2):
        residual = abs(root * math.exp(-root / volume) - 1.0)
        if residual > BAND_TOLERANCE:
            raise InvariantError(
                f"band root {root!r} fails mu*exp(-mu/V)=1 by {residual:.3e} "
                f"(R={R}, d={d})"
            )
    return band


def mutilde(mu: float, R: int, d: int = 1) -> float:
    """Effective offspring mean mu * exp(-mu / V) with V = (2R+1)^d.

    Computed in two algebraically equal forms (closed form and V*phi(1/V))
    which must agree to 1e-14 relative; a disagreement means a transcription
    error somewhere, not a numerical artifact, hence the hard failure.
    """

    if not mu > 0.0:
        raise ValueError(f"mutilde requires mu > 0, got {mu!r}")
    volume = ball_volume(R, d)
    closed = mu * math.exp(-mu / volume)
    w = 1.0 / volume
    via_phi = volume * (mu * w * math.exp(-mu * w))
    if abs(closed - via_phi) > 1.0e-14 * max(abs(closed), 1.0):
        raise InvariantError(
            f"mutilde forms disagree: {closed!r} vs {via_phi!r} "
            f"(mu={mu}, R={R}, d={d})"
        )
    return closed


def mu1_asymptotic(R: int, d: int = 1) -> float:
    """Three-term expansion of mu1 in powers of 1/V: 1 + V^-1 + (3/2) V^-2.

    Here V stands for the full ball volume (2R+1)^d.  The truncation error
    is below 5 V^-3 once V >= 100.
    """

    if R == 0:
        raise ValueError("mu1_asymptotic requires R >= 1")
    x = 1.0 / ball_volume(R, d)
    return 1.0 + x + 1.5 * x * x


@dataclass(frozen=True)
class BernsteinParams:
    """Inputs to the Bernstein tail bound for a sum of bounded summands.

    sigma2 is the variance of the sum, m the maximal absolute deviation of a
    single summand from its mean (at most 1 for indicator variables), and w
    the absolute deviation the bound is evaluated at.
    """

    sigma2: float
    m: float
    w: float

    def __post_init__(self) -> None:
        if self.sigma2 < 0.0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2!r}")
        if not (0.0 < self.m <= 1.0):
            raise ValueError(f"m must lie in (0, 1], got {self.m!r}")
        if self.w < 0.0:
            raise ValueError(f"w must be >= 0, got {self.w!r}")


def bernstein_bound(params: BernsteinParams) -> float:
    """One-sided tail bound exp(-w^2 / (2 sigma^2 + (2/3) m w)).

    Equals 1 at w = 0 and is strictly decreasing in w.  The symmetric
    two-sided version is twice this value.
    """

    if params.w == 0.0:
        return 1.0
    denom = 2.0 * params.sigma2 + (2.0 / 3.0) * params.m * params.w
    return math.exp(-params.w * params.w / denom)


@dataclass(frozen=True)
class ConcentrationBound:
    """Failure-probability bound for one-step density band propagation."""

    c: float
    bound: float
    volume: int


def density_concentration(delta: float, eps: float, R: int, d: int = 1) -> ConcentrationBound:
    """Exponent c = (delta*eps) / (1/(2*delta*eps) + 2/3) and bound 2 exp(-c V).

    The bound controls the per-site probability that a window density leaves
    a (1 +- delta) band around profiles with floor eps after one update.  It
    only becomes informative (< 1) for fairly large windows; callers should
    check `bound` before leaning on it.
    """

    if not (delta > 0.0 and eps > 0.0):
        raise ValueError(f"delta and eps must be positive, got ({delta!r}, {eps!r})")
    de = delta * eps
    c = de / (1.0 / (2.0 * de) + 2.0 / 3.0)
    volume = ball_volume(R, d)
    return ConcentrationBound(c=c, bound=2.0 * math.exp(-c * volume), volume=volume)


def band_table_rows(r_values, d: int = 1) -> list[tuple[int, int, int, float, float, float]]:
    """Rows (R, d, V, mu1, mu2, series_error) for the thresholds CSV export."""

    rows = []
    for R in r_values:
        band = extinction_band(int(R), d)
        err = abs(band.mu1 - mu1_asymptotic(int(R), d))
        rows.append((int(R), d, band.volume, band.mu1, band.mu2, err))
    return rows
