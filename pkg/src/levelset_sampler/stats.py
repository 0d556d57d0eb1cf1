"""Estimators and run summaries: batch means, transition counting, histogram TV.

The batch-means estimator is the standard consistent proxy for the asymptotic
variance of ergodic averages: split the series into m batches of length L,
then  chi2_hat = dt * L * Var(batch means)  converges to the variance rate per
unit physical time (dt is the time step the series was sampled at).
"""

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class RunSummary:
    """Core statistics of one chain."""

    n_steps: int
    running_mean: float
    asym_var_estimate: float
    transition_count: int
    rk_histogram: dict
    mean_intermediate_xi: float
    wall_time: float
    max_state_xi: float = 0.0
    final_state: np.ndarray = None
    angles: np.ndarray = None
    xi_half_series: np.ndarray = None
    histogram: np.ndarray = None
    seed: int = 0
    stream: int = 0

    @property
    def mean_rk_steps(self):
        total = sum(k * v for k, v in self.rk_histogram.items())
        count = sum(self.rk_histogram.values())
        return total / count if count else 0.0


def batch_layout(n):
    """(number of batches, batch length) used by the batch-means estimator."""
    m = int(np.sqrt(n))
    if m < 1:
        return 0, 0
    return m, n // m


def batch_means_variance(series, n_batches=None, dt=1.0):
    """Batch-means estimate of the asymptotic variance of the series mean.

    With ``dt`` the sampling interval, the estimate approximates the rate
    chi2 such that Var(mean over time T) ~ chi2 / T.  Constant series give 0;
    adding a constant leaves the estimate unchanged.  Requires
    len(series) >= 2 * n_batches.
    """
    series = np.asarray(series, dtype=float)
    n = series.size
    if n_batches is None:
        n_batches = int(np.sqrt(n))
    if n_batches < 2:
        raise ValueError("need at least 2 batches")
    if n < 2 * n_batches:
        raise ValueError(f"series of length {n} too short for {n_batches} batches")
    L = n // n_batches
    means = series[: n_batches * L].reshape(n_batches, L).mean(axis=1)
    return float(dt * L * np.var(means, ddof=1))


def _theta_region(theta):
    theta = theta % TWO_PI
    if abs(theta - 0.5 * np.pi) <= 0.25 * np.pi:
        return 1
    if abs(theta - 1.5 * np.pi) <= 0.25 * np.pi:
        return 2
    return 0


def transition_count(theta_series):
    """Transitions between the two azimuthal wells, with hysteresis.

    The wells are |theta - pi/2| <= pi/4 and |theta - 3pi/2| <= pi/4.  A
    transition is counted when the series enters one well having most
    recently occupied the other; time spent outside both wells keeps the
    last-occupied label, so chatter at a well edge is not double counted.
    """
    count = 0
    last = 0
    for theta in np.asarray(theta_series, dtype=float).ravel():
        region = _theta_region(theta)
        if region != 0:
            if last != 0 and region != last:
                count += 1
            last = region
    return count


def _angle_bin_counts(samples, bins):
    samples = np.asarray(samples, dtype=float)
    idx = np.minimum((samples % TWO_PI) / TWO_PI * bins, bins - 1).astype(int)
    counts = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1)
    return counts


def target_bin_probabilities(U, beta, bins, oversample=32):
    """Bin probabilities of exp(-beta U(phi, theta)) / Z on a bins x bins grid.

    Each bin is integrated on an oversample x oversample subgrid; with the
    strongly peaked targets used here, evaluating only at bin centers would
    misplace a few percent of mass.
    """
    fine = bins * oversample
    g = (np.arange(fine) + 0.5) * (TWO_PI / fine)
    phi, theta = np.meshgrid(g, g, indexing="ij")
    u = np.asarray(U(phi, theta), dtype=float)
    u = np.broadcast_to(u, phi.shape)
    w = np.exp(-beta * (u - u.min()))
    w = w.reshape(bins, oversample, bins, oversample).sum(axis=(1, 3))
    return w / w.sum()


def tv_distance_from_counts(counts, target_probs):
    counts = np.asarray(counts, dtype=float)
    p = counts / counts.sum()
    return 0.5 * float(np.abs(p - np.asarray(target_probs, dtype=float)).sum())


def histogram_tv_distance(samples, U, beta, bins=32):
    """Total-variation distance between binned (phi, theta) samples and the target.

    ``samples`` has shape (n, 2) with angles in radians (taken mod 2*pi).
    Bounded in [0, 1]; zero iff the binned laws coincide.
    """
    counts = _angle_bin_counts(samples, bins)
    return tv_distance_from_counts(counts, target_bin_probabilities(U, beta, bins))


@dataclass
class ExperimentRow:
    """Aggregate of several runs of one (A, h) cell."""

    a_label: str
    h: float
    n_steps: int
    n_runs: int
    mean_f: float
    std_f: float
    mean_xi_half: float
    mean_rk_steps: float
    mean_transitions: float
    mean_asym_var: float
    runtime_s: float


def aggregate_runs(summaries, a_label="", h=0.0):
    """Combine runs of one cell: std is the unbiased std across run means."""
    if len(summaries) < 2:
        raise ValueError("need at least 2 runs to aggregate")
    means = np.array([s.running_mean for s in summaries])
    return ExperimentRow(
        a_label=a_label,
        h=h,
        n_steps=summaries[0].n_steps,
        n_runs=len(summaries),
        mean_f=float(means.mean()),
        std_f=float(means.std(ddof=1)),
        mean_xi_half=float(np.mean([s.mean_intermediate_xi for s in summaries])),
        mean_rk_steps=float(np.mean([s.mean_rk_steps for s in summaries])),
        mean_transitions=float(np.mean([s.transition_count for s in summaries])),
        mean_asym_var=float(np.mean([s.asym_var_estimate for s in summaries])),
        runtime_s=float(np.sum([s.wall_time for s in summaries])),
    )


@dataclass
class ExperimentTable:
    """Rows keyed by (A label, h)."""

    rows: dict = field(default_factory=dict)

    def add(self, row):
        self.rows[(row.a_label, row.h)] = row

    def get(self, a_label, h):
        return self.rows[(a_label, h)]

    def __iter__(self):
        return iter(self.rows.values())
