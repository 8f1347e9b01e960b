"""Class-overlap density analysis and Shapley-value feature attribution.

The Gaussian mixture uses diagonal covariances with a variance floor; the
overlap statistic is the Wasserstein-1 distance between log-likelihood
distributions of named sample sets under one fitted mixture. Attribution
uses permutation sampling over feature groups, with exact coalition
enumeration available as an oracle for small group counts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from .seeding import substream

VAR_FLOOR = 1e-6


@dataclass(eq=False)
class Gmm:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray    # [K]
    means: np.ndarray      # [K, D]
    variances: np.ndarray  # [K, D], floored
    loglik_trace: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _component_logpdf(x: np.ndarray, means: np.ndarray,
                      variances: np.ndarray) -> np.ndarray:
    """log N(x | mu_k, diag sigma2_k) for all samples and components: [N, K]."""
    const = -0.5 * (means.shape[1] * np.log(2.0 * np.pi)
                    + np.log(variances).sum(axis=1))
    # (x - mu)^2 / var expanded to avoid a [N, K, D] intermediate
    inv = 1.0 / variances
    quad = (
        (x ** 2) @ inv.T
        - 2.0 * x @ (means * inv).T
        + ((means ** 2) * inv).sum(axis=1)
    )
    return const - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = a.max(axis=axis, keepdims=True)
    return (peak + np.log(np.exp(a - peak).sum(axis=axis, keepdims=True))).squeeze(axis)


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(n)])
            continue
        probs = d2 / total
        centers.append(x[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, ((x - centers[-1]) ** 2).sum(axis=1))
    return np.stack(centers)


def gmm_fit(features: np.ndarray, k: int = 10, seed: int = 0,
            max_iter: int = 500, tol: float = 1e-6) -> Gmm:
    """Fit by EM from a k-means++-style seeded initialization.

    Convergence: change in mean log-likelihood below ``tol`` (or
    ``max_iter``). The variance floor is enforced at every M-step. The
    recorded per-iteration mean log-likelihood trace is non-decreasing.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"features must be [n_samples, dim], got {x.shape}")
    n, dim = x.shape
    if n < k:
        raise ValueError(f"{n} samples cannot support {k} components")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")

    rng = substream(seed, "gmm")
    means = _kmeanspp_init(x, k, rng)
    # Hard assignment to the seed centers gives the starting parameters.
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2) \
        if n * k * dim <= 5e7 else None
    if d2 is None:
        d2 = np.stack([((x - m) ** 2).sum(axis=1) for m in means], axis=1)
    assign = d2.argmin(axis=1)
    global_var = np.maximum(x.var(axis=0), VAR_FLOOR)
    weights = np.full(k, 1.0 / k)
    variances = np.tile(global_var, (k, 1))
    for j in range(k):
        sel = assign == j
        if sel.sum() >= 2:
            means[j] = x[sel].mean(axis=0)
            variances[j] = np.maximum(x[sel].var(axis=0), VAR_FLOOR)
            weights[j] = sel.mean()
    weights = np.maximum(weights, 1.0 / (10.0 * n))
    weights /= weights.sum()

    trace: list[float] = []
    for _ in range(max_iter):
        joint = _component_logpdf(x, means, variances) + np.log(weights)
        per_sample = _logsumexp(joint, axis=1)
        trace.append(float(per_sample.mean()))
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            break
        resp = np.exp(joint - per_sample[:, None])
        nk = resp.sum(axis=0)
        live = nk > 1e-10
        weights = np.where(live, nk / n, weights)
        weights /= weights.sum()
        safe_nk = np.where(live, nk, 1.0)
        new_means = (resp.T @ x) / safe_nk[:, None]
        ex2 = (resp.T @ (x ** 2)) / safe_nk[:, None]
        new_vars = np.maximum(ex2 - new_means ** 2, VAR_FLOOR)
        means = np.where(live[:, None], new_means, means)
        variances = np.where(live[:, None], new_vars, variances)
    return Gmm(weights=weights, means=means, variances=variances,
               loglik_trace=trace)


def gmm_loglik(gmm: Gmm, features: np.ndarray) -> np.ndarray:
    """Per-sample log-likelihood under the mixture (log-sum-exp, stable)."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != gmm.dim:
        raise ValueError(f"features have dim {x.shape[1]}, model has {gmm.dim}")
    joint = _component_logpdf(x, gmm.means, gmm.variances) + np.log(gmm.weights)
    return _logsumexp(joint, axis=1)


@dataclass(eq=False)
class OverlapReport:
    """Histograms and pairwise W1 distances of per-set log-likelihoods."""

    set_names: list[str]
    logliks: dict[str, np.ndarray]
    bin_edges: np.ndarray
    histograms: dict[str, np.ndarray]
    distances: np.ndarray  # [n_sets, n_sets]

    def histogram_rows(self) -> list[tuple[str, float, float, int]]:
        rows = []
        for name in self.set_names:
            counts = self.histograms[name]
            for i, count in enumerate(counts):
                rows.append((name, float(self.bin_edges[i]),
                             float(self.bin_edges[i + 1]), int(count)))
        return rows

    def distance_rows(self) -> list[tuple[str, str, float]]:
        rows = []
        for i, a in enumerate(self.set_names):
            for j, b in enumerate(self.set_names):
                rows.append((a, b, float(self.distances[i, j])))
        return rows


def overlap_report(gmm: Gmm, sets: dict[str, np.ndarray],
                   n_bins: int = 50) -> OverlapReport:
    """Score every named feature set under one fitted mixture and compare
    the resulting log-likelihood distributions.
    """
    names = list(sets)
    logliks = {}
    for name, feats in sets.items():
        if len(feats) == 0:
            raise ValueError(f"set {name!r} is empty")
        logliks[name] = gmm_loglik(gmm, feats)
    lo = min(v.min() for v in logliks.values())
    hi = max(v.max() for v in logliks.values())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    histograms = {name: np.histogram(v, bins=edges)[0]
                  for name, v in logliks.items()}
    dist = np.zeros((len(names), len(names)))
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i < j:
                dist[i, j] = dist[j, i] = wasserstein_distance(
                    logliks[a], logliks[b]
                )
    return OverlapReport(set_names=names, logliks=logliks, bin_edges=edges,
                         histograms=histograms, distances=dist)


# ---------------------------------------------------------------------------
# Shapley attribution
# ---------------------------------------------------------------------------

def _check_partition(groups: list[np.ndarray], n_features: int) -> None:
    seen = np.concatenate([np.asarray(g) for g in groups]) if groups else np.array([])
    if len(seen) != n_features or len(np.unique(seen)) != n_features \
            or seen.min() != 0 or seen.max() != n_features - 1:
        raise ValueError("groups must partition the feature indices exactly once")


def grouping_by_channel(n_channels: int, per_channel: int) -> list[np.ndarray]:
    """Groups of contiguous per-channel blocks in the flattened input."""
    return [np.arange(c * per_channel, (c + 1) * per_channel)
            for c in range(n_channels)]


def grouping_by_band(n_channels: int, n_bands: int) -> list[np.ndarray]:
    """One group per spectral band across all channels."""
    return [np.arange(n_channels) * n_bands + b for b in range(n_bands)]


def grouping_by_position(n_channels: int, length: int,
                         n_windows: int = 20) -> list[np.ndarray]:
    """Equal time windows across all channels of a flattened contig."""
    bounds = np.linspace(0, length, n_windows + 1).astype(int)
    groups = []
    for w in range(n_windows):
        t = np.arange(bounds[w], bounds[w + 1])
        groups.append((np.arange(n_channels)[:, None] * length + t[None, :]).ravel())
    return groups


@dataclass(eq=False)
class ShapReport:
    grouping: str
    group_phi: np.ndarray        # [n_inputs, n_groups] signed values
    n_permutations: int
    seed: int

    @property
    def mean_phi(self) -> np.ndarray:
        return self.group_phi.mean(axis=0)

    @property
    def mean_abs_phi(self) -> np.ndarray:
        return np.abs(self.group_phi).mean(axis=0)

    def rows(self) -> list[tuple[int, float, float]]:
        return [(g, float(self.mean_abs_phi[g]), float(self.mean_phi[g]))
                for g in range(self.group_phi.shape[1])]


def shap_attribution(predict_fn, inputs: np.ndarray, groups: list[np.ndarray],
                     n_permutations: int = 64, seed: int = 0,
                     background: np.ndarray | None = None,
                     grouping_name: str = "", exhaustive: bool = False) -> ShapReport:
    """Permutation-sampling Shapley attribution over feature groups.

    For each sampled permutation, groups are switched one at a time from the
    background vector to the input's values, and the change in
    ``predict_fn`` output is credited to the switched group. Per
    permutation the credits telescope to f(x) - f(background) exactly.
    ``exhaustive=True`` enumerates all permutations (small group counts).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    n_inputs, n_features = inputs.shape
    _check_partition(groups, n_features)
    if background is None:
        background = inputs.mean(axis=0)
    background = np.asarray(background, dtype=float).reshape(n_features)
    n_groups = len(groups)

    if exhaustive:
        perms = [np.array(p) for p in itertools.permutations(range(n_groups))]
    else:
        if n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        rng = substream(seed, "shap")
        perms = [rng.permutation(n_groups) for _ in range(n_permutations)]

    phi = np.zeros((n_inputs, n_groups))
    for i in range(n_inputs):
        x = inputs[i]
        for perm in perms:
            # Stack of n_groups+1 vectors: background progressively
            # overwritten by x's groups in permutation order.
            stack = np.tile(background, (n_groups + 1, 1))
            for step, g in enumerate(perm):
                idx = groups[g]
                stack[step + 1:, idx] = x[idx]
            outputs = np.asarray(predict_fn(stack), dtype=float).reshape(-1)
            deltas = np.diff(outputs)
            phi[i, perm] += deltas
    phi /= len(perms)
    return ShapReport(grouping=grouping_name, group_phi=phi,
                      n_permutations=len(perms), seed=seed)


def exact_shapley(predict_fn, x: np.ndarray, groups: list[np.ndarray],
                  background: np.ndarray) -> np.ndarray:
    """Exact Shapley values by full coalition enumeration (<= 12 groups)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_partition(groups, x.size)
    n_groups = len(groups)
    if n_groups > 12:
        raise ValueError(f"{n_groups} groups is too many for exact enumeration")
    background = np.asarray(background, dtype=float).reshape(x.size)

    coalitions = np.tile(background, (2 ** n_groups, 1))
    for mask in range(2 ** n_groups):
        for g in range(n_groups):
            if mask >> g & 1:
                coalitions[mask, groups[g]] = x[groups[g]]
    values = np.asarray(predict_fn(coalitions), dtype=float).reshape(-1)

    phi = np.zeros(n_groups)
    fact = [math.factorial(i) for i in range(n_groups + 1)]
    denom = fact[n_groups]
    for mask in range(2 ** n_groups):
        size = bin(mask).count("1")
        for g in range(n_groups):
            if not mask >> g & 1:
                weight = fact[size] * fact[n_groups - size - 1] / denom
                phi[g] += weight * (values[mask | (1 << g)] - values[mask])
    return phi
