"""Hinich-style Gaussianity and linearity tests on a bicoherence estimate.

Both tests work on ``z = 2 K b**2`` at the defined principal-domain bins.
For a Gaussian process each ``z`` is asymptotically chi-square with 2
degrees of freedom; for a linear non-Gaussian process it is noncentral
chi-square with a common noncentrality.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln
from scipy.stats import norm

from hosa.bispectrum import BicoherenceEstimate, principal_domain
from hosa.errors import ConvergenceError, InsufficientDataError, MaskedEstimateError
from hosa.signal import window_function

SERIES_TOL = 1e-14
QUANTILE_TOL = 1e-8

GAUSSIANITY = "gaussianity"
LINEARITY = "linearity"


# ---------------------------------------------------------------------------
# chi-square machinery
# ---------------------------------------------------------------------------


def chi_square_sf(x: float, dof: float) -> float:
    """``P(chi2_dof > x)`` via the regularised upper incomplete gamma."""
    if not dof > 0:
        raise ValueError(f"dof must be positive, got {dof}")
    if not x >= 0:
        raise ValueError(f"x must be >= 0, got {x}")
    return float(gammaincc(0.5 * dof, 0.5 * x))


def _poisson_weights(mu: float):
    """Indices and Poisson(mu) weights, truncated where weights < SERIES_TOL."""
    mode = int(math.floor(mu))
    span = int(math.ceil(10.0 * math.sqrt(mu) + 20))
    while True:
        lo = max(0, mode - span)
        j = np.arange(lo, mode + span + 1)
        w = np.exp(-mu + j * math.log(mu) - gammaln(j + 1.0))
        if w[-1] < SERIES_TOL and (lo == 0 or w[0] < SERIES_TOL):
            keep = w >= SERIES_TOL
            return j[keep], w[keep]
        span *= 2


def noncentral_chi2_cdf(x, dof: float, lam: float):
    """Noncentral chi-square CDF as a Poisson mixture of central CDFs."""
    if not dof > 0 or lam < 0:
        raise ValueError("need dof > 0 and lam >= 0")
    x = np.asarray(x, dtype=np.float64)
    half = 0.5 * np.clip(x, 0.0, None)
    if lam == 0:
        return gammainc(0.5 * dof, half)
    j, w = _poisson_weights(0.5 * lam)
    out = np.tensordot(w, gammainc(0.5 * dof + j[:, None], half.reshape(1, -1)), axes=1)
    return np.clip(out.reshape(x.shape), 0.0, 1.0)


def noncentral_chi2_pdf(x, dof: float, lam: float):
    if not dof > 0 or lam < 0:
        raise ValueError("need dof > 0 and lam >= 0")
    x = np.asarray(x, dtype=np.float64)
    xs = np.clip(x.reshape(1, -1), 1e-300, None)
    if lam == 0:
        j, w = np.array([0]), np.array([1.0])
    else:
        j, w = _poisson_weights(0.5 * lam)
    k = dof + 2.0 * j[:, None]
    logp = (0.5 * k - 1.0) * np.log(0.5 * xs) - 0.5 * xs - gammaln(0.5 * k) - math.log(2.0)
    out = np.tensordot(w, np.exp(logp), axes=1).reshape(x.shape)
    return np.where(x > 0, out, 0.0)


def noncentral_chi2_quantile(p: float, dof: float, lam: float) -> float:
    """Invert :func:`noncentral_chi2_cdf` by bisection to 1e-8 absolute."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    cdf = lambda v: float(noncentral_chi2_cdf(v, dof, lam))  # noqa: E731
    lo = 0.0
    hi = dof + lam + 10.0 * math.sqrt(2.0 * (dof + 2.0 * lam)) + 10.0
    for _ in range(200):
        if cdf(hi) >= p:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError("could not bracket the quantile", (lo, hi))
    for _ in range(400):
        if hi - lo <= QUANTILE_TOL:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError("bisection did not converge", (lo, hi))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    test_name: str
    statistic: float
    dof: float
    noncentrality: float
    p_value: float
    alpha: float
    reject_h0: bool
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "test": self.test_name,
            "statistic": self.statistic,
            "dof": self.dof,
            "noncentrality": self.noncentrality,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject_h0": self.reject_h0,
            "details": dict(self.details),
        }


# ---------------------------------------------------------------------------
# Gaussian null of the summed statistic
# ---------------------------------------------------------------------------
#
# Zero padding, tapering and segment overlap make neighbouring bins and
# segments correlated, so sum(z) is far more dispersed than chi2(2P). Under
# white Gaussian input the segment spectra are jointly complex Gaussian with
# covariances that follow from the window alone; the Isserlis theorem then
# gives the exact large-K mean and covariance of every z. The sum is
# referred to a moment-matched scaled chi-square.


def _frame_covariances(window: str, frame_len: int, hop: int, nfft: int):
    """``C[d][a, b] = E[Y_a(frame k) conj(Y_b(frame k+d))]`` for unit white noise."""
    h = nfft // 2
    w = window_function(window, frame_len)
    n = np.arange(frame_len)
    F = np.exp(-2j * np.pi * np.outer(np.arange(h), n) / nfft)
    G = w[:, None] * (np.eye(frame_len) - 1.0 / frame_len)  # mean removal, then taper
    maxd = (frame_len - 1) // hop
    out = {}
    for d in range(-maxd, maxd + 1):
        shift = np.eye(frame_len, k=-d * hop)  # x_k[p] == x_{k+d}[p - d*hop]
        out[d] = F @ (G @ shift @ G.T) @ F.conj().T
    return out


def _pair_moment(C, d, a, b):
    """``E[T_a(frame 0) conj(T_b(frame d))]`` via the six Isserlis pairings."""
    (i, j, s), (i2, j2, s2) = a, b
    U = ((i, 0), (j, 0), (s2, d))
    V = ((s, 0), (i2, d), (j2, d))
    tot = 0.0
    for perm in itertools.permutations(range(3)):
        term = 1.0
        for q in range(3):
            (u, fu), (v, fv) = U[q], V[perm[q]]
            term = term * C[fv - fu][u, v]
        tot = tot + term
    return tot


def _neighbourhood(C0) -> int:
    h = C0.shape[0]
    c = h // 2
    diag = C0.diagonal().real
    rho2 = np.abs(C0[c, c:]) ** 2 / (diag[c] * diag[c:])
    small = np.nonzero(rho2 < 1e-3)[0]
    reach = int(small[0]) if small.size else h
    return int(min(max(reach + 1, 2), 24))


@functools.lru_cache(maxsize=16)
def _null_structure(window: str, frame_len: int, hop: int, nfft: int):
    C = _frame_covariances(window, frame_len, hop, nfft)
    pd = principal_domain(nfft)
    I, J = np.nonzero(pd)
    S = I + J
    C0 = C[0]
    nrm = ((C0[I, I] * C0[J, J] + np.abs(C0[I, J]) ** 2) * C0[S, S]).real
    X = np.zeros(I.size, dtype=np.complex128)
    Yd = np.zeros(I.size, dtype=np.complex128)
    for d in C:
        m = _pair_moment(C, d, (I, J, S), (I, J, S))
        X += m
        Yd += abs(d) * m
    return {
        "C": C,
        "I": I,
        "J": J,
        "nrm": nrm,
        "mean_x": X.real / nrm,
        "mean_y": Yd.real / nrm,
        "reach": _neighbourhood(C0),
        "rowsums": None,
    }


def _rowsums(st, keep):
    """Per-bin sums over neighbours b of |X_ab|^2, Re(X_ab conj Y_ab), |Y_ab|^2."""
    C, I, J, nrm = st["C"], st["I"], st["J"], st["nrm"]
    h = C[0].shape[0]
    key = np.full((h, h), -1, dtype=np.int64)
    key[I, J] = np.arange(I.size)
    q = np.zeros((3, I.size))
    D = st["reach"]
    for di in range(-D, D + 1):
        for dj in range(-D, D + 1):
            I2, J2 = I + di, J + dj
            ok = (J2 >= 1) & (J2 <= I2) & (2 * (I2 + J2) < 2 * h)
            ok &= keep
            idx = np.full(I.size, -1)
            idx[ok] = key[I2[ok], J2[ok]]
            ok &= idx >= 0
            ok[ok] &= keep[idx[ok]]
            if not ok.any():
                continue
            a = (I[ok], J[ok], I[ok] + J[ok])
            b = (I2[ok], J2[ok], I2[ok] + J2[ok])
            X = 0.0
            Yd = 0.0
            for d in C:
                m = _pair_moment(C, d, a, b)
                X = X + m
                Yd = Yd + abs(d) * m
            scale = nrm[ok] * nrm[idx[ok]]
            q[0, ok] += np.abs(X) ** 2 / scale
            q[1, ok] += (X * np.conj(Yd)).real / scale
            q[2, ok] += np.abs(Yd) ** 2 / scale
    return q


def gaussian_null_moments(frame_config: dict, nfft: int, n_segments: int, mask=None):
    """Mean and variance of ``sum(z)`` for white Gaussian input.

    ``mask`` restricts the sum to a subset of the principal domain (default:
    all of it). Structure that depends only on the framing is cached.
    """
    st = _null_structure(
        frame_config["window"], int(frame_config["frame_len"]), int(frame_config["hop"]), nfft
    )
    I, J = st["I"], st["J"]
    keep = np.ones(I.size, dtype=bool) if mask is None else np.asarray(mask)[I, J]
    if keep.all():
        if st["rowsums"] is None:
            st["rowsums"] = _rowsums(st, keep)
        q = st["rowsums"]
    else:
        q = _rowsums(st, keep)
    K = float(n_segments)
    mean = 2.0 * np.sum((st["mean_x"] - st["mean_y"] / K)[keep])
    var = 4.0 * np.sum((q[0] - 2.0 * q[1] / K + q[2] / K**2)[keep])
    return float(mean), float(var)


# ---------------------------------------------------------------------------
# tests
# ---------------------------------------------------------------------------


def _z(b: BicoherenceEstimate, min_bins: int, what: str) -> np.ndarray:
    if b.n_segments < 8:
        raise InsufficientDataError(f"{what} needs >= 8 segments, got {b.n_segments}")
    if not b.mask.any():
        raise MaskedEstimateError(f"{what}: every bicoherence bin is undefined")
    z = b.z_values()
    if z.size < min_bins:
        raise InsufficientDataError(f"{what} needs >= {min_bins} bins, got {z.size}")
    return z


def gaussianity_test(b: BicoherenceEstimate, alpha: float = 0.05) -> TestResult:
    """Test H0: zero bispectrum (Gaussian). Rejection means non-Gaussian.

    ``S = sum(2 K b**2)`` is referred to ``g * chi2(nu)`` with ``g`` and
    ``nu`` matched to the null mean and variance of ``S``; without
    dependence between bins this reduces to ``chi2(2P)``. The reported
    ``statistic`` is ``S / g`` and ``dof`` is ``nu``, so
    ``p_value == chi_square_sf(statistic, dof)``.
    """
    z = _z(b, 4, GAUSSIANITY)
    S = float(np.sum(z))
    mean, var = gaussian_null_moments(b.frame_config, b.nfft, b.n_segments, b.mask)
    g = var / (2.0 * mean)
    nu = 2.0 * mean**2 / var
    stat = S / g
    p = chi_square_sf(stat, nu)
    return TestResult(
        GAUSSIANITY,
        stat,
        nu,
        0.0,
        p,
        alpha,
        bool(p < alpha),
        {
            "raw_statistic": S,
            "n_bins": int(z.size),
            "n_segments": b.n_segments,
            "nominal_dof": 2 * int(z.size),
            "null_mean": mean,
            "null_var": var,
            "normalized": S / (2 * z.size),
        },
    )


def _iqr_sd(lam: float, n: int) -> float:
    """Large-sample sd of the sample IQR of n independent chi2_2(lam) draws."""
    q25 = noncentral_chi2_quantile(0.25, 2.0, lam)
    q75 = noncentral_chi2_quantile(0.75, 2.0, lam)
    f25, f75 = noncentral_chi2_pdf(np.array([q25, q75]), 2.0, lam)
    var = (0.1875 / f25**2 + 0.1875 / f75**2 - 2 * 0.0625 / (f25 * f75)) / n
    return math.sqrt(var)


def linearity_test(b: BicoherenceEstimate, alpha: float = 0.05, bound: float = 0.5) -> TestResult:
    """Test H0: constant nonzero squared bicoherence (linear process).

    Rejection (``|statistic| > bound``) means NONLINEAR. The statistic is
    the relative deviation of the sample interquartile range of ``z`` from
    that of ``chi2_2(lam)``, where ``lam = max(0, mean(z) - 2)``. The
    ``p_value`` is nominal (it treats bins as independent) and does not
    drive the decision.
    """
    # sorted, so the result depends only on the multiset of z-values
    z = np.sort(_z(b, 16, LINEARITY))
    lam = max(0.0, float(np.mean(z)) - 2.0)
    q25, q75 = np.quantile(z, [0.25, 0.75])
    t25 = noncentral_chi2_quantile(0.25, 2.0, lam)
    t75 = noncentral_chi2_quantile(0.75, 2.0, lam)
    theo = t75 - t25
    stat = float(((q75 - q25) - theo) / theo)
    sd = _iqr_sd(lam, z.size) / theo
    p = float(min(1.0, 2.0 * norm.sf(abs(stat) / sd)))
    return TestResult(
        LINEARITY,
        stat,
        2.0,
        lam,
        p,
        alpha,
        bool(abs(stat) > bound),
        {"bound": bound, "sample_iqr": float(q75 - q25), "theoretical_iqr": theo,
         "n_bins": int(z.size)},
    )
