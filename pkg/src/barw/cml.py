"""The one-site update map phi and its coupled-lattice iteration.

Everything downstream hangs off the scalar map

    phi_mu(w) = mu * w * exp(-mu * w),

the probability that a site holding a Poisson(mu * w) number of arrivals
holds exactly one.  Its fixpoints are 0 and theta_mu = ln(mu)/mu; the latter
exists for mu > 1 and attracts for mu in (1, e^2) where |phi'(theta)| =
|1 - ln(mu)| < 1.  The bracket construction pins nested intervals
[alpha_m, beta_m] around theta with phi([alpha_m, beta_m]) inside the open
next interval, which is what turns pointwise control of a density profile
into control after one more generation.

The coupled map lattice replaces the hard 0/1 occupancy with a real state
and iterates Xi_{n+1} = phi_mu(averages of Xi_n over B_R); it is the
deterministic skeleton of the particle model and a cheap way to watch the
flat fixpoint invade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError
from .lattice import (
    Boundary,
    DensityField,
    _kernel_counts_1d,
    centered_distance_grid,
    window_means_float,
)

E = math.e
E_SQUARED = math.e**2
INV_E = math.exp(-1.0)


def phi(mu: float, w):
    """phi_mu(w) = mu * w * exp(-mu * w) for scalar or array w >= 0."""
    if not (math.isfinite(mu) and mu > 0.0):
        raise ValueError(f"mu must be finite and > 0, got {mu}")
    arr = np.asarray(w, dtype=np.float64)
    if arr.size and (not np.isfinite(arr).all() or (arr < 0.0).any()):
        raise ValueError("phi needs finite arguments >= 0")
    out = mu * arr * np.exp(-mu * arr)
    return float(out) if np.isscalar(w) or arr.ndim == 0 else out


def theta(mu: float) -> float:
    """The nontrivial fixpoint ln(mu)/mu; exists only for mu > 1."""
    if not (math.isfinite(mu) and mu > 1.0):
        raise ValueError(f"no nontrivial fixpoint for mu <= 1 (got mu={mu})")
    return math.log(mu) / mu


def phi_derivative(mu: float, w):
    """phi'_mu(w) = mu * exp(-mu * w) * (1 - mu * w)."""
    if not (math.isfinite(mu) and mu > 0.0):
        raise ValueError(f"mu must be finite and > 0, got {mu}")
    arr = np.asarray(w, dtype=np.float64)
    if arr.size and (not np.isfinite(arr).all() or (arr < 0.0).any()):
        raise ValueError("phi_derivative needs finite arguments >= 0")
    out = mu * np.exp(-mu * arr) * (1.0 - mu * arr)
    return float(out) if np.isscalar(w) or arr.ndim == 0 else out


def phi_range(mu: float, lo: float, hi: float) -> tuple[float, float]:
    """(min, max) of phi_mu over [lo, hi], by unimodality.

    phi increases up to 1/mu and decreases after, so the maximum is the
    interior peak phi(1/mu) = 1/e when 1/mu lies inside, else the larger
    endpoint value; the minimum is always at an endpoint.
    """
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    f_lo = phi(mu, lo)
    f_hi = phi(mu, hi)
    peak = 1.0 / mu
    if lo <= peak <= hi:
        mx = phi(mu, peak)
    else:
        mx = max(f_lo, f_hi)
    return min(f_lo, f_hi), mx


def contraction_constant(mu: float, eps: float) -> float:
    """max |phi'| over [theta - eps, theta + eps], required < 1.

    |phi'| on an interval peaks either at an endpoint or at the interior
    critical point w = 2/mu of |phi'| (where |phi'| = mu/e^2); w = 1/mu is a
    zero of phi', never a maximum.
    """
    if not (1.0 < mu < E_SQUARED):
        raise ValueError(
            f"attractive fixpoint needs mu in (1, e^2), got mu={mu}"
        )
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    th = theta(mu)
    lo, hi = th - eps, th + eps
    if lo <= 0.0:
        raise ValueError(
            f"interval [theta - eps, theta + eps] = [{lo}, {hi}] leaves (0, inf)"
        )
    candidates = [abs(phi_derivative(mu, lo)), abs(phi_derivative(mu, hi))]
    crit = 2.0 / mu
    if lo <= crit <= hi:
        candidates.append(abs(phi_derivative(mu, crit)))
    kappa = max(candidates)
    if kappa >= 1.0:
        raise ValueError(
            f"phi is not a contraction on [{lo:.6g}, {hi:.6g}]: "
            f"max |phi'| = {kappa:.6g} >= 1 (mu={mu}, eps={eps})"
        )
    return kappa


@dataclass(frozen=True)
class BracketSequences:
    """Nested bracketing sequences around theta_mu.

    alphas increase toward theta from below, betas decrease from above, and
    every consecutive pair satisfies phi([alpha_m, beta_m]) contained in the
    open interval (alpha_{m+1}, beta_{m+1}).  m_star is the first (1-based)
    index whose gap beta - alpha drops below the requested eps; construction
    stops there, so m_star == len(alphas).
    """

    mu: float
    eps: float
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    m_star: int
    case: int
    swap_index: int | None = None

    def __len__(self) -> int:
        return len(self.alphas)

    def interval(self, m: int) -> tuple[float, float]:
        """[alpha_m, beta_m] for 1-based index m."""
        return self.alphas[m - 1], self.betas[m - 1]


def _largest_phi_preimage(mu: float, target: float, tol: float = 1e-12) -> float:
    """Largest w with phi_mu(w) = target: the decreasing-branch preimage.

    Requires 0 < target < phi(1/mu) = 1/e.  Bisection on [1/mu, hi] where hi
    doubles until phi(hi) < target.
    """
    peak = 1.0 / mu
    peak_val = phi(mu, peak)
    if not 0.0 < target < peak_val:
        raise ValueError(
            f"no decreasing-branch preimage: target {target} outside (0, {peak_val})"
        )
    hi = max(1.0, 2.0 * peak)
    for _ in range(200):
        if phi(mu, hi) < target:
            break
        hi *= 2.0
    else:
        raise InvariantError("failed to bracket the decreasing-branch preimage")
    lo = peak
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi(mu, mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def _check_containment(mu, a_cur, b_cur, a_next, b_next, m):
    mn, mx = phi_range(mu, a_cur, b_cur)
    if not (a_next < mn and mx < b_next):
        raise InvariantError(
            f"bracket containment broke at step {m}: phi([{a_cur:.12g}, {b_cur:.12g}]) "
            f"spans [{mn:.12g}, {mx:.12g}], not inside ({a_next:.12g}, {b_next:.12g})"
        )


def bracket_sequences(
    mu: float, alpha1: float, beta1: float, eps: float, max_steps: int = 1_000_000
) -> BracketSequences:
    """Build the nested bracketing sequences around theta_mu.

    Preconditions: mu in (1, e^2); 0 < alpha1 < min(theta, 1/mu);
    beta1 > 1/e; and for mu < e additionally phi(beta1) >= phi(alpha1).
    The recursion differs by regime:

    * mu < e: averaged updates x -> (x + phi(x))/2 on both ends, except that
      a beta1 above the peak 1/mu is first replaced by (1/e + 1/mu)/2.
    * mu = e: alphas averaged; beta_m is the decreasing-branch preimage of
      phi(alpha_m), clamped below (beta_{m-1} + 1/e)/2 to force strict
      decrease whatever beta1 was.
    * mu > e: a ramp alpha -> lam*phi(alpha) + (1-lam)*alpha with lam half
      the admissible slack lifts alpha past the peak 1/mu while betas slide
      toward the decreasing-branch preimage z of the swap value; after the
      ramp, the swapped averages alpha' = (phi(beta) + alpha)/2,
      beta' = (phi(alpha) + beta)/2 squeeze both ends together.

    Every step re-checks monotonicity and the containment invariant
    numerically and raises InvariantError if either breaks.
    """
    if not (1.0 < mu < E_SQUARED):
        raise ValueError(f"bracket construction needs mu in (1, e^2), got {mu}")
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    th = theta(mu)
    peak = 1.0 / mu
    if not 0.0 < alpha1 < min(th, peak):
        raise ValueError(
            f"alpha1 must lie in (0, min(theta, 1/mu)) = (0, {min(th, peak):.6g}), "
            f"got {alpha1}"
        )
    if not beta1 > INV_E:
        raise ValueError(f"beta1 must exceed 1/e = {INV_E:.6g}, got {beta1}")

    alphas = [float(alpha1)]
    betas = [float(beta1)]
    case = 1 if mu < E else (2 if mu == E else 3)
    swap_index: int | None = None

    def step_to(a_next: float, b_next: float) -> None:
        m = len(alphas)
        if not (alphas[-1] < a_next < th < b_next < betas[-1]):
            raise InvariantError(
                f"bracket monotonicity broke at step {m}: "
                f"({alphas[-1]:.12g}, {betas[-1]:.12g}) -> ({a_next:.12g}, {b_next:.12g})"
            )
        _check_containment(mu, alphas[-1], betas[-1], a_next, b_next, m)
        alphas.append(a_next)
        betas.append(b_next)

    if case == 1:
        if phi(mu, beta1) < phi(mu, alpha1):
            raise ValueError(
                f"for mu < e the start must satisfy phi(beta1) >= phi(alpha1); "
                f"got phi({beta1}) = {phi(mu, beta1):.6g} < phi({alpha1}) = "
                f"{phi(mu, alpha1):.6g}"
            )
        first = True
        while betas[-1] - alphas[-1] >= eps and len(alphas) < max_steps:
            a = alphas[-1]
            b = betas[-1]
            a_next = 0.5 * (a + phi(mu, a))
            if first and b > peak:
                b_next = 0.5 * (INV_E + peak)
            else:
                b_next = 0.5 * (b + phi(mu, b))
            first = False
            step_to(a_next, b_next)
    elif case == 2:
        alpha2 = 0.5 * (alpha1 + phi(mu, alpha1))
        if phi(mu, beta1) <= alpha2:
            raise ValueError(
                f"beta1 = {beta1} is too deep on the decreasing branch: "
                f"phi(beta1) = {phi(mu, beta1):.6g} does not stay above the "
                f"second alpha {alpha2:.6g}"
            )
        while betas[-1] - alphas[-1] >= eps and len(alphas) < max_steps:
            a = alphas[-1]
            b = betas[-1]
            a_next = 0.5 * (a + phi(mu, a))
            b_next = min(
                _largest_phi_preimage(mu, phi(mu, a_next)),
                0.5 * (b + INV_E),
            )
            step_to(a_next, b_next)
    else:
        phi_at_inv_e = phi(mu, INV_E)
        slack = min(th - peak, phi_at_inv_e - peak)
        lam = 0.5 * E * slack
        if not 0.0 < lam:
            raise InvariantError(f"ramp rate lam = {lam} is not positive")
        lam = min(lam, 1.0)
        # Pass 1: the alpha ramp, up to the first value beyond the peak.
        ramp = [alphas[0]]
        while ramp[-1] <= peak:
            if len(ramp) >= max_steps:
                raise InvariantError("alpha ramp failed to clear the peak")
            a = ramp[-1]
            ramp.append(lam * phi(mu, a) + (1.0 - lam) * a)
        swap_value = ramp[-1]
        if not swap_value < min(th, phi_at_inv_e):
            raise InvariantError(
                f"ramp overshot: alpha = {swap_value} not below "
                f"min(theta, phi(1/e)) = {min(th, phi_at_inv_e):.12g}"
            )
        z = _largest_phi_preimage(mu, swap_value)
        if phi(mu, beta1) <= ramp[1]:
            raise ValueError(
                f"beta1 = {beta1} is too deep on the decreasing branch: "
                f"phi(beta1) = {phi(mu, beta1):.6g} does not stay above the "
                f"second alpha {ramp[1]:.6g}"
            )
        swap_index = len(ramp)
        # Pass 2: replay the ramp with the beta updates, checking as we go.
        for m in range(1, len(ramp)):
            if betas[-1] - alphas[-1] < eps:
                break
            b = betas[-1]
            b_next = 0.5 * (INV_E + min(b, z))
            step_to(ramp[m], b_next)
        while betas[-1] - alphas[-1] >= eps and len(alphas) < max_steps:
            a = alphas[-1]
            b = betas[-1]
            step_to(0.5 * (phi(mu, b) + a), 0.5 * (phi(mu, a) + b))

    if betas[-1] - alphas[-1] >= eps:
        raise InvariantError(
            f"bracket sequences did not reach gap < {eps} within {max_steps} steps"
        )
    return BracketSequences(
        mu=mu,
        eps=eps,
        alphas=tuple(alphas),
        betas=tuple(betas),
        m_star=len(alphas),
        case=case,
        swap_index=swap_index,
    )


@dataclass
class CmlReport:
    """Convergence summary of a coupled-map run."""

    mu: float
    R: int
    steps_run: int
    theta: float | None
    attractive: bool
    note: str
    rows: list[dict] = field(default_factory=list)
    converged_at: int | None = None


def _front_radius(
    values: np.ndarray, dist: np.ndarray, th: float, tol: float, r_max: int
) -> int:
    """Largest r <= r_max with |value - theta| < tol everywhere on B_r(center).

    -1 when even the center misses.
    """
    bad = np.abs(values - th) >= tol
    if not bad.any():
        return int(r_max)
    nearest_bad = int(dist[bad].min())
    return nearest_bad - 1


def cml_run(
    xi0: DensityField,
    mu: float,
    R: int,
    steps: int,
    tol: float,
    windows: tuple[int, ...] = (12, 25, 50, 100, 200),
    stop_window: int | None = None,
    stop_tol: float | None = None,
) -> tuple[list[DensityField], CmlReport]:
    """Iterate Xi -> phi_mu(mean of Xi over B_R) from xi0.

    Records, per generation: the front radius (largest centered ball where
    the state is within tol of theta) and the sup distance to theta over
    each requested centered window.  If stop_window and stop_tol are given,
    stops early once the sup distance over that window falls below stop_tol.
    For mu outside (1, e^2] the fixpoint is repelling or absent and the
    report says so; the iteration itself runs regardless.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    shape = xi0.shape
    values = np.asarray(xi0.values, dtype=np.float64)
    if (values < 0.0).any():
        raise ValueError("initial coupled-map state must be nonnegative")

    has_theta = mu > 1.0
    th = theta(mu) if has_theta else None
    attractive = 1.0 < mu < E_SQUARED
    if not has_theta:
        note = "no nontrivial fixpoint (mu <= 1) -- diagnostics only"
    elif not attractive:
        note = "no attractive fixpoint -- diagnostics only"
    else:
        note = "attractive fixpoint regime"

    dist = centered_distance_grid(shape)
    r_max = int(dist.max())
    windows = tuple(sorted({int(w) for w in windows if 0 <= int(w) <= r_max}))
    window_masks = {w: dist <= w for w in windows}

    def record(n: int, vals: np.ndarray) -> dict:
        row: dict = {"n": n}
        if has_theta:
            row["front_radius"] = _front_radius(vals, dist, th, tol, r_max)
            for w in windows:
                row[f"sup_dist_w{w}"] = float(
                    np.abs(vals[window_masks[w]] - th).max()
                )
        return row

    report = CmlReport(
        mu=mu, R=R, steps_run=0, theta=th, attractive=attractive, note=note
    )
    trajectory = [DensityField(shape, values.copy())]
    report.rows.append(record(0, values))

    def stopped(row: dict) -> bool:
        if stop_window is None or stop_tol is None or not has_theta:
            return False
        key = f"sup_dist_w{int(stop_window)}"
        return key in row and row[key] < stop_tol

    if stopped(report.rows[0]):
        report.converged_at = 0
        return trajectory, report

    for n in range(1, steps + 1):
        values = phi(mu, window_means_float(values, R, shape.boundary))
        trajectory.append(DensityField(shape, values.copy()))
        row = record(n, values)
        report.rows.append(row)
        report.steps_run = n
        if stopped(row):
            report.converged_at = n
            break
    return trajectory, report


def _psi_cap_linear_dominates(mu: float, a: float, b: float) -> None:
    """Check a * min(w, b) <= phi_mu(w) on [0, 1]; raise ValueError if not."""
    grid = np.linspace(0.0, 1.0, 100_001)
    # include the cap kink and the point where phi(w)/w crosses the slope a,
    # the tightest spot of the linear part
    extras = [b]
    if a < mu:
        extras.append(math.log(mu / a) / mu)
    ws = np.unique(np.concatenate([grid, np.clip(extras, 0.0, 1.0)]))
    psi_vals = a * np.minimum(ws, b)
    phi_vals = phi(mu, ws)
    bad = psi_vals > phi_vals
    if bad.any():
        w_bad = float(ws[bad][0])
        raise ValueError(
            f"a*min(w, b) with a={a}, b={b} exceeds phi at w={w_bad:.6g}: "
            f"{float(psi_vals[bad][0]):.6g} > {float(phi_vals[bad][0]):.6g}"
        )


def cml_lower_bound(
    xi0: DensityField, mu: float, a: float, b: float, n: int, R: int
) -> DensityField:
    """Closed-form lower envelope for the coupled map after n steps.

    If a * min(w, b) <= phi_mu(w) on [0, 1], then n iterations of the
    coupled map dominate z -> sum_y p^(n)(z, y) * min(a^n * xi0(y), b),
    where p^(n) is the n-step kernel of the walk with uniform jumps on B_R.
    The cap is applied before the smoothing, and the kernel weights are
    exact integer path counts divided once by their total.
    """
    if n < 0:
        raise ValueError(f"step count must be >= 0, got {n}")
    if not (a > 0.0 and 0.0 < b <= 1.0):
        raise ValueError(f"need a > 0 and b in (0, 1], got a={a}, b={b}")
    _psi_cap_linear_dominates(mu, a, b)
    shape = xi0.shape
    vals = np.asarray(xi0.values, dtype=np.float64)
    with np.errstate(over="ignore"):
        grown = np.where(vals > 0.0, (a**n) * vals, 0.0)
    capped = np.minimum(grown, b)
    if n == 0:
        return DensityField(shape, capped)

    denom = (2 * R + 1) ** n
    weights = np.array(
        [c / denom for c in _kernel_counts_1d_cached(R, n)], dtype=np.float64
    )
    half = (len(weights) - 1) // 2
    if shape.boundary is Boundary.ZERO_PADDED:
        if any(2 * half + 1 > s for s in shape.sides):
            raise ValueError(
                f"kernel support {2 * half + 1} exceeds the zero-padded window"
            )
    out = capped
    for ax in range(shape.dim):
        out = _axis_correlate(out, weights, ax, shape.boundary)
    return DensityField(shape, out)


def _axis_correlate(
    values: np.ndarray, weights: np.ndarray, axis: int, boundary: Boundary
) -> np.ndarray:
    """Correlate one axis with a centered weight vector (wrap or zero pad)."""
    half = (len(weights) - 1) // 2
    moved = np.moveaxis(values, axis, -1)
    L = moved.shape[-1]
    if boundary is Boundary.PERIODIC:
        idx = np.arange(-half, L + half) % L
        ext = moved[..., idx]
    else:
        pad = [(0, 0)] * (moved.ndim - 1) + [(half, half)]
        ext = np.pad(moved, pad, mode="constant")
    windows = np.lib.stride_tricks.sliding_window_view(ext, len(weights), axis=-1)
    out = windows @ weights
    return np.moveaxis(out, -1, axis)


_KERNEL_CACHE: dict[tuple[int, int], list[int]] = {}


def _kernel_counts_1d_cached(R: int, n: int) -> list[int]:
    key = (int(R), int(n))
    if key not in _KERNEL_CACHE:
        _KERNEL_CACHE[key] = _kernel_counts_1d(R, n)
    return _KERNEL_CACHE[key]
