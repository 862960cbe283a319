"""Weight-choice criteria over the simplex, assembled as quadratic programs.

Three quadratic criteria are provided.  The Mallows criterion penalizes the
residual quadratic form by twice the estimated variance times model size.
The jackknife criterion is the quadratic form of leave-one-out residuals,
obtained from leverages without refitting.  The large-model criterion starts
from the Mallows form and adds (a) the closed-form gap between out-of-sample
and in-sample variance, which is what keeps near-interpolating candidates
honest, and (b) a variance-weighted ridge on the weights whose strength xi
is set analytically from the dispersion of the per-candidate variance and
bias diagnostics.  Information-criterion scores (AIC/BIC, plus smoothed
variants) round out the baselines.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .models import ModelFits

__all__ = [
    "QuadraticProgram",
    "SingularLooError",
    "XI_CLAMP",
    "SIGMA_FLOOR",
    "sigma_hat",
    "default_sigma_model",
    "guarded_sigma_model",
    "mma_program",
    "jma_program",
    "loo_flagged",
    "xi",
    "v_out_matrix",
    "b_in_diag",
    "lama_program",
    "lama_criterion_value",
    "info_criterion_weights",
]

LEVERAGE_GUARD = 1e-8
XI_CLAMP = (1e-6, 1e6)
SIGMA_FLOOR = 0.2


class SingularLooError(ValueError):
    """Raised when a candidate's leverage reaches 1 and leave-one-out
    residuals are undefined; ``flagged`` lists the offending candidates."""

    def __init__(self, flagged):
        self.flagged = tuple(int(i) for i in flagged)
        super().__init__(
            f"candidates {self.flagged} have leverage at 1 (interpolating); "
            "exclude them before building the leave-one-out program"
        )


@dataclass(frozen=True)
class QuadraticProgram:
    """Criterion w'Aw + b'w + offset over M candidates."""

    A: np.ndarray
    b: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape[0] != A.shape[0]:
            raise ValueError("A must be square and b must match its size")
        if not np.allclose(A, A.T, atol=1e-12, rtol=1e-12):
            raise ValueError("A must be symmetric to 1e-12")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        return float(w @ self.A @ w + self.b @ w + self.offset)


def _sym(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + G.T)


def default_sigma_model(fits: ModelFits) -> int:
    """Index of the reference candidate for the residual variance estimate.

    The largest candidate with k <= floor(0.9 n); if none qualifies, the
    largest with k < n.
    """
    sizes = fits.sizes
    n = fits.n
    ok = np.flatnonzero(sizes <= math.floor(0.9 * n))
    if ok.size == 0:
        ok = np.flatnonzero(sizes < n)
    if ok.size == 0:
        raise ValueError("no candidate has positive residual degrees of freedom")
    return int(ok[-1])


def guarded_sigma_model(fits: ModelFits) -> int:
    """Index of the stabilizing candidate for the residual variance floor.

    The largest candidate with k <= floor(0.9 n) and at least 5 residual
    degrees of freedom; if none qualifies, falls back to the reference
    candidate from :func:`default_sigma_model`.
    """
    sizes = fits.sizes
    ok = np.flatnonzero((sizes <= math.floor(0.9 * fits.n)) & (sizes <= fits.n - 5))
    if ok.size == 0:
        return default_sigma_model(fits)
    return int(ok[-1])


def sigma_hat(fits: ModelFits, K: int | None = None) -> float:
    """Residual variance estimate RSS_K / (n - k_K) from candidate K.

    With ``K=None`` the estimate comes from the largest candidate below the
    0.9n boundary, floored at ``SIGMA_FLOOR`` times the estimate from the
    largest candidate that also keeps 5 residual degrees of freedom.  A
    near-interpolating reference candidate can push RSS_K / (n - k_K) toward
    zero on a lucky draw, which would disable every variance-scaled penalty;
    the floor keeps the estimate a positive fraction of a stable one.
    """
    if K is None:
        ref = _sigma_hat_at(fits, default_sigma_model(fits))
        guard = _sigma_hat_at(fits, guarded_sigma_model(fits))
        return max(ref, SIGMA_FLOOR * guard)
    if not 0 <= K < fits.M:
        raise ValueError(f"candidate index {K} out of range")
    return _sigma_hat_at(fits, int(K))


def _sigma_hat_at(fits: ModelFits, K: int) -> float:
    k = int(fits.sizes[K])
    if k >= fits.n:
        raise ValueError(f"candidate {K} has k={k} >= n={fits.n}: no residual degrees of freedom")
    return float(fits.rss[K]) / (fits.n - k)


def mma_program(fits: ModelFits, sigma2_hat: float) -> QuadraticProgram:
    """Mallows criterion: w' (e'e/n) w + 2 sigma2_hat sum_q w_q k_q / n."""
    if sigma2_hat < 0.0 or not np.isfinite(sigma2_hat):
        raise ValueError("sigma2_hat must be finite and nonnegative")
    E = fits.residuals
    A = _sym(E.T @ E) / fits.n
    b = 2.0 * sigma2_hat * fits.sizes / fits.n
    return QuadraticProgram(A=A, b=b)


def loo_flagged(fits: ModelFits, guard: float = LEVERAGE_GUARD) -> np.ndarray:
    """Mask of candidates whose leave-one-out residuals are undefined."""
    return np.max(fits.leverages, axis=0) >= 1.0 - guard


def jma_program(fits: ModelFits, guard: float = LEVERAGE_GUARD) -> QuadraticProgram:
    """Leave-one-out criterion: w' (E~'E~/n) w with e~_iq = e_iq / (1 - h_iq)."""
    flagged = loo_flagged(fits, guard)
    if np.any(flagged):
        raise SingularLooError(np.flatnonzero(flagged))
    E_loo = fits.residuals / (1.0 - fits.leverages)
    A = _sym(E_loo.T @ E_loo) / fits.n
    return QuadraticProgram(A=A, b=np.zeros(fits.M))


def xi(v_diag: np.ndarray, b_diag: np.ndarray, clamp: bool = True) -> float:
    """Ridge strength: variance dispersion over bias dispersion.

    (max v / min v) / (max b / min b) across candidates; by default clamped
    to XI_CLAMP to guard degenerate dispersion ratios on tiny candidate sets.
    """
    v = np.asarray(v_diag, dtype=np.float64).reshape(-1)
    bd = np.asarray(b_diag, dtype=np.float64).reshape(-1)
    if v.size == 0 or v.shape != bd.shape:
        raise ValueError("diagnostic vectors must be non-empty and equally long")
    if np.any(v <= 0.0) or np.any(bd <= 0.0) or not (
        np.all(np.isfinite(v)) and np.all(np.isfinite(bd))
    ):
        raise ValueError("diagnostic entries must be positive and finite")
    val = (v.max() / v.min()) / (bd.max() / bd.min())
    if clamp:
        val = min(max(val, XI_CLAMP[0]), XI_CLAMP[1])
    return float(val)


def v_out_matrix(fits: ModelFits, sigma2_hat: float) -> np.ndarray:
    """Plug-in out-of-sample variance matrix sigma2 k_min / (n - k_min)."""
    if np.any(fits.sizes >= fits.n):
        raise ValueError("out-of-sample variance plug-in requires all k < n")
    kmin = np.minimum.outer(fits.sizes, fits.sizes).astype(np.float64)
    return sigma2_hat * kmin / (fits.n - kmin)


def b_in_diag(fits: ModelFits, sigma2_hat: float) -> np.ndarray:
    """Diagonal of the in-sample bias quadratic form: RSS_q/n + sigma2 k_q/n."""
    return fits.rss / fits.n + sigma2_hat * fits.sizes / fits.n


def lama_program(fits: ModelFits, sigma2_hat: float, xi_value: float) -> QuadraticProgram:
    """Large-model criterion at sample scale (n times the per-observation value):

        A(q,l) = [e'e](q,l)
                 + sigma2 (max(k_q,k_l) + n min(k_q,k_l)/(n - min(k_q,k_l)))
                 + 1{q=l} xi sigma2 n k_q / (n - k_q),   b = 0.

    Requires every candidate strictly below the interpolation boundary.
    """
    n = fits.n
    if np.any(fits.sizes >= n):
        raise ValueError("criterion undefined for candidates with k >= n; drop them first")
    if not np.isfinite(sigma2_hat) or sigma2_hat <= 0.0:
        raise ValueError("sigma2_hat must be positive")
    if not np.isfinite(xi_value) or xi_value < 0.0:
        raise ValueError("xi must be nonnegative and finite")
    sizes = fits.sizes.astype(np.float64)
    E = fits.residuals
    kmax = np.maximum.outer(sizes, sizes)
    kmin = np.minimum.outer(sizes, sizes)
    A = _sym(E.T @ E) + sigma2_hat * (kmax + n * kmin / (n - kmin))
    A[np.diag_indices_from(A)] += xi_value * sigma2_hat * n * sizes / (n - sizes)
    return QuadraticProgram(A=A, b=np.zeros(fits.M))


def lama_criterion_value(
    fits: ModelFits, sigma2_hat: float, xi_value: float, w: np.ndarray
) -> float:
    """Per-observation large-model criterion evaluated term by term:

    residual quadratic form / n, plus 2 sigma2 sum w_q k_q / n, plus the
    variance-correction gap, plus the xi ridge.  Kept independent of the
    quadratic-program assembly on purpose: times n, the two must agree on
    the simplex, and the tests hold them to that.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != fits.M:
        raise ValueError("weight length does not match candidates")
    n = fits.n
    sizes = fits.sizes.astype(np.float64)
    r = fits.residuals @ w
    fit_term = float(r @ r) / n
    penalty = 2.0 * sigma2_hat * float(w @ sizes) / n
    V = v_out_matrix(fits, sigma2_hat)
    kmin = np.minimum.outer(sizes, sizes)
    delta_v = float(w @ V @ w) - sigma2_hat * float(w @ kmin @ w) / n
    ridge = xi_value * float(w @ (np.diag(V) * w))
    return fit_term + penalty + delta_v + ridge


def info_criterion_weights(fits: ModelFits, kind: str) -> np.ndarray:
    """AIC/BIC selection weights or their smoothed (softmax) variants.

    Scores: AIC_q = n log(RSS_q/n) + 2 k_q, BIC_q = n log(RSS_q/n) + k_q log n.
    "aic"/"bic" put mass 1 on the minimizer; "saic"/"sbic" use weights
    proportional to exp(-score/2).  Interpolating candidates (RSS = 0) are
    excluded with a warning since their score is undefined.
    """
    kind = kind.lower()
    if kind not in {"aic", "bic", "saic", "sbic"}:
        raise ValueError(f"unknown information criterion {kind!r}")
    n = fits.n
    usable = fits.rss > 0.0
    if not np.all(usable):
        warnings.warn(
            f"excluding {int(np.sum(~usable))} interpolating candidate(s) "
            f"from {kind.upper()} (zero residual sum of squares)",
            RuntimeWarning,
            stacklevel=2,
        )
    if not np.any(usable):
        raise ValueError("all candidates interpolate; information criteria undefined")
    scores = np.full(fits.M, np.inf)
    mult = 2.0 if kind in {"aic", "saic"} else math.log(n)
    scores[usable] = n * np.log(fits.rss[usable] / n) + mult * fits.sizes[usable]
    w = np.zeros(fits.M)
    if kind in {"aic", "bic"}:
        w[int(np.argmin(scores))] = 1.0
    else:
        z = np.exp(-(scores[usable] - scores[usable].min()) / 2.0)
        w[usable] = z / z.sum()
    return w
