"""Two-phase lamination bounds and effective-tensor admissibility.

Mixing phases alpha < beta with volume fraction t of alpha produces the
arithmetic mean mu_t = t alpha + (1-t) beta and the harmonic mean
nu_t = (t/alpha + (1-t)/beta)^{-1}.  A symmetric tensor is an effective
tensor of such a mixture (for some t) iff its eigenvalues satisfy the
d+2 trace inequalities checked by ``is_admissible``; in d = 2 that set
has the closed form returned by ``d2_lambda2_bounds``.

Tensor storage convention matches fem: (a11, a12, a22) columns.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "lamination_means",
    "d2_lambda2_bounds",
    "is_admissible",
    "eig_sym_2x2",
    "clamp_spectrum",
    "optimal_laminate",
    "optimal_t",
]


def _check_phases(alpha: float, beta: float):
    if not (0.0 < alpha < beta):
        raise ValueError(f"phases must satisfy 0 < alpha < beta, got "
                         f"({alpha}, {beta})")


def lamination_means(t, alpha: float, beta: float):
    """(mu_t, nu_t): arithmetic and harmonic means at fraction t of alpha.

    The pair always satisfies mu_t + alpha*beta/nu_t = alpha + beta.
    """
    _check_phases(alpha, beta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("volume fraction t must lie in [0, 1]")
    mu = t * alpha + (1.0 - t) * beta
    nu = alpha * beta / (t * beta + (1.0 - t) * alpha)
    if mu.ndim == 0:
        return float(mu), float(nu)
    return mu, nu


def fraction_from_harmonic(nu, alpha: float, beta: float):
    """Invert nu_t: the fraction t with harmonic mean nu, clipped to [0,1]."""
    _check_phases(alpha, beta)
    nu = np.asarray(np.clip(nu, alpha, beta), dtype=float)
    t = alpha * (beta - nu) / (nu * (beta - alpha))
    t = np.clip(t, 0.0, 1.0)
    return float(t) if t.ndim == 0 else t


def d2_lambda2_bounds(lam1: float, alpha: float, beta: float):
    """Closed-form d=2 admissible range of the second eigenvalue.

    For lam1 in [alpha, beta] the pair (lam1, lam2) is an effective
    two-phase tensor iff

        alpha*beta / (alpha + beta - lam1) <= lam2
                                 <= alpha + beta - alpha*beta / lam1.
    """
    _check_phases(alpha, beta)
    lam1 = np.asarray(lam1, dtype=float)
    if np.any(lam1 < alpha) or np.any(lam1 > beta):
        raise ValueError("lam1 must lie in [alpha, beta]")
    lo = alpha * beta / (alpha + beta - lam1)
    hi = alpha + beta - alpha * beta / lam1
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def _violation(lams: np.ndarray, t: np.ndarray, alpha: float, beta: float):
    """Max constraint violation of the d+2 system at fractions t.

    Decreasing-in-t constraints (the alpha trace bound, nu_t <= lam_min)
    and increasing ones (the beta trace bound, lam_max <= mu_t) are both
    folded into one envelope, which is therefore quasiconvex in t.
    """
    d = lams.size
    mu = t * alpha + (1.0 - t) * beta
    nu = alpha * beta / (t * beta + (1.0 - t) * alpha)
    with np.errstate(divide="ignore"):
        s_a = float(np.sum(1.0 / (lams - alpha)))
        s_b = float(np.sum(1.0 / (beta - lams)))
        r_a = 1.0 / (nu - alpha) + (d - 1) / (mu - alpha)
        r_b = 1.0 / (beta - nu) + (d - 1) / (beta - mu)
    v = np.maximum(s_a - r_a, s_b - r_b)
    v = np.maximum(v, nu - lams.min())
    v = np.maximum(v, lams.max() - mu)
    return v


def is_admissible(eigs, alpha: float, beta: float, tol: float = 1e-9):
    """Whether eigenvalues are realizable by a two-phase mixture.

    Returns (admissible, t) with a witnessing volume fraction when
    admissible.  The witness is located by a 10^4-point grid scan of the
    violation envelope followed by golden-section refinement (the
    envelope is quasiconvex in t).

    Eigenvalues more than tol outside [alpha, beta] are inadmissible;
    values within tol of a bound are snapped onto it, where the trace
    inequalities degenerate: an eigenvalue exactly at alpha (resp. beta)
    is only admissible when all of them are.
    """
    _check_phases(alpha, beta)
    lams = np.sort(np.asarray(eigs, dtype=float))
    if lams.size < 2:
        raise ValueError("need at least two eigenvalues")
    if lams[0] < alpha - tol or lams[-1] > beta + tol:
        return False, None
    lams = np.clip(lams, alpha, beta)
    at_alpha = lams <= alpha
    at_beta = lams >= beta
    if at_alpha.any():
        return (True, 1.0) if at_alpha.all() else (False, None)
    if at_beta.any():
        return (True, 0.0) if at_beta.all() else (False, None)

    grid = np.linspace(0.0, 1.0, 10001)
    v = _violation(lams, grid, alpha, beta)
    k = int(np.argmin(v))
    if v[k] <= tol:
        return True, float(grid[k])
    # refine around the best grid point: golden-section on the envelope
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc = float(_violation(lams, np.asarray(c), alpha, beta))
    fd = float(_violation(lams, np.asarray(d_), alpha, beta))
    for _ in range(120):
        if fc <= fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = float(_violation(lams, np.asarray(c), alpha, beta))
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = float(_violation(lams, np.asarray(d_), alpha, beta))
    t_best = c if fc <= fd else d_
    if float(_violation(lams, np.asarray(t_best), alpha, beta)) <= tol:
        return True, float(t_best)
    return False, None


def eig_sym_2x2(tcols: np.ndarray):
    """Eigen-decomposition of symmetric 2x2 tensors in column storage.

    Returns (lam1, lam2, cos, sin) with lam1 <= lam2 and (cos, sin) the
    unit eigenvector of lam2.
    """
    tcols = np.asarray(tcols, dtype=float)
    a11, a12, a22 = tcols[..., 0], tcols[..., 1], tcols[..., 2]
    m = 0.5 * (a11 + a22)
    dd = 0.5 * (a11 - a22)
    r = np.hypot(dd, a12)
    lam1, lam2 = m - r, m + r
    theta = 0.5 * np.arctan2(2.0 * a12, a11 - a22)
    return lam1, lam2, np.cos(theta), np.sin(theta)


def clamp_spectrum(tcols: np.ndarray, lo, hi):
    """Clip tensor eigenvalues into [lo, hi], keeping the eigenvectors.

    Works on one tensor (shape (3,)) or a stack (n, 3); lo/hi may be
    scalars or per-tensor arrays.  Rotation-equivariant by construction.
    """
    tcols = np.asarray(tcols, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("clamp bounds must satisfy lo <= hi")
    lam1, lam2, c, s = eig_sym_2x2(tcols)
    l1 = np.clip(lam1, lo, hi)
    l2 = np.clip(lam2, lo, hi)
    out = np.empty_like(tcols)
    out[..., 0] = l2 * c * c + l1 * s * s
    out[..., 1] = (l2 - l1) * c * s
    out[..., 2] = l2 * s * s + l1 * c * c
    return out


def optimal_laminate(grad_u, grad_p, mu, nu):
    """Rank-one laminate tensor aligned with the state/adjoint gradients.

    Eigenvalue mu sits along the normalized bisector w1 + w2 of the unit
    gradients, nu along w1 - w2.  Degenerate cases: parallel gradients
    put mu along the common direction (nu orthogonal), antiparallel
    gradients put nu along it (mu orthogonal), and a vanishing gradient
    yields the isotropic nu * I.

    Accepts single vectors (shape (2,)) or stacks (n, 2); mu, nu may be
    scalars or arrays.  Returns tensors in (a11, a12, a22) storage.
    """
    gu = np.atleast_2d(np.asarray(grad_u, dtype=float))
    gp = np.atleast_2d(np.asarray(grad_p, dtype=float))
    single = np.asarray(grad_u).ndim == 1
    n = gu.shape[0]
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,))
    nu_norm = np.linalg.norm(gu, axis=1)
    np_norm = np.linalg.norm(gp, axis=1)
    ok = (nu_norm > 0.0) & (np_norm > 0.0)
    w1 = np.where(ok[:, None], gu / np.where(ok, nu_norm, 1.0)[:, None], 0.0)
    w2 = np.where(ok[:, None], gp / np.where(ok, np_norm, 1.0)[:, None], 0.0)
    c = (w1 * w2).sum(axis=1)

    axis = np.zeros_like(w1)
    lam_axis = np.empty(n)
    lam_perp = np.empty(n)

    degenerate_zero = ~ok
    parallel = ok & (c >= 1.0 - 1e-12)
    anti = ok & (c <= -1.0 + 1e-12)
    generic = ok & ~parallel & ~anti

    bis = w1 + w2
    bn = np.linalg.norm(bis, axis=1)
    bn_safe = np.where(bn > 0.0, bn, 1.0)
    axis[generic] = (bis / bn_safe[:, None])[generic]
    lam_axis[generic] = mu[generic]
    lam_perp[generic] = nu[generic]

    axis[parallel] = w1[parallel]
    lam_axis[parallel] = mu[parallel]
    lam_perp[parallel] = nu[parallel]

    axis[anti] = w1[anti]
    lam_axis[anti] = nu[anti]
    lam_perp[anti] = mu[anti]

    ex, ey = axis[:, 0], axis[:, 1]
    out = np.empty((n, 3))
    out[:, 0] = lam_axis * ex * ex + lam_perp * ey * ey
    out[:, 1] = (lam_axis - lam_perp) * ex * ey
    out[:, 2] = lam_axis * ey * ey + lam_perp * ex * ex
    out[degenerate_zero, 0] = nu[degenerate_zero]
    out[degenerate_zero, 1] = 0.0
    out[degenerate_zero, 2] = nu[degenerate_zero]
    return out[0] if single else out


def optimal_t(n_plus, n_minus, g, alpha: float, beta: float):
    """Optimal volume fraction for the relaxed control update.

    With N+ = (|grad u||grad p| + grad u . grad p)/2 and N- the same
    with a minus sign, the per-point maximizer of the lamination
    Hamiltonian is

        t = 0                                   g <  N+ - (beta/alpha) N-
        t = (sqrt(alpha beta N- / (N+ - g)) - alpha) / (beta - alpha)
                                                on the middle band
        t = 1                                   g >  N+ - (alpha/beta) N-

    The middle expression is clipped to [0, 1]; a vanishing N+ - g
    inside the band (only possible with N- = 0) falls through to t = 1.
    """
    _check_phases(alpha, beta)
    n_plus = np.asarray(n_plus, dtype=float)
    n_minus = np.asarray(n_minus, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(n_plus < -1e-15) or np.any(n_minus < -1e-15):
        raise ValueError("N+ and N- must be nonnegative")
    n_plus = np.maximum(n_plus, 0.0)
    n_minus = np.maximum(n_minus, 0.0)
    b_lo = n_plus - (beta / alpha) * n_minus
    b_hi = n_plus - (alpha / beta) * n_minus
    denom = n_plus - g
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = (np.sqrt(alpha * beta * n_minus / denom) - alpha) / (beta - alpha)
    mid = np.where(denom > 0.0, mid, 1.0)
    t = np.where(g < b_lo, 0.0, np.where(g > b_hi, 1.0, np.clip(mid, 0.0, 1.0)))
    return float(t) if t.ndim == 0 else t
