"""Temperature selection by simulated quality discernibility.

The soft-ranking temperature trades off two pressures: it should push the
likelihood of a genuinely matched score toward 1 while keeping the largest
likelihood attained by purely unmatched scores near 0. Given the score
distributions of matched and unmatched pairs, both sides can be simulated
directly and the temperature picked where their gap peaks.

Each trial simulates the N ranking scores a single search cell would see
against an N-cell template:

* matched likelihood  L+  -- softmax over [1 matched draw, N-1 unmatched
  draws], evaluated at the matched entry;
* unmatched likelihood L- -- softmax over N unmatched draws, evaluated at
  its largest entry (the most tempting false match in that trial).

``discernibility(alpha) = mean over trials of L+  minus  max over the whole
simulation of L-``. Averaging the unmatched side instead of maxing it moves
the optimum far to the right (roughly 45 instead of the low 30s for the
default parameters): a large temperature rarely inflates a random unmatched
likelihood, but the worst case over thousands of draws is exactly what a
matcher scanning a whole image will hit, so the worst case is what the
objective guards against.

For unmatched cosine scores of d-dimensional features the theoretical
distribution has mean 0 and variance 1/d, so the defaults express the
unmatched spread as a standard deviation on that scale (0.05 ~ 1/sqrt(400)).
Both ``sigma`` fields are standard deviations; callers who think in
variances must take square roots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "simulate_discernibility",
    "calibrate_alpha",
]


def _default_alpha_grid() -> np.ndarray:
    return np.arange(1.0, 60.0 + 1e-9, 0.5)


@dataclass(frozen=True)
class CalibrationConfig:
    """Inputs of the discernibility simulation.

    ``n_patches`` is the template cell count N; ``mu_plus``/``sigma_plus``
    parameterize the matched-score normal distribution and
    ``mu_minus``/``sigma_minus`` the unmatched one. ``n_trials`` Monte-Carlo
    repetitions are aggregated; every trial draws from an independent
    substream derived from ``rng_seed``, so results are reproducible and
    trials may be evaluated in any order or in parallel.

    The default 200 trials is fine for eyeballing a curve; the worst-case
    unmatched statistic converges slowly, so use 1000+ trials when the exact
    argmax matters.
    """

    n_patches: int = 2200
    mu_plus: float = 0.3
    sigma_plus: float = 0.1
    mu_minus: float = 0.0
    sigma_minus: float = 0.05
    n_trials: int = 200
    alpha_grid: np.ndarray = field(default_factory=_default_alpha_grid)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_patches < 2:
            raise ValueError("n_patches must be >= 2")
        if self.sigma_plus < 0 or self.sigma_minus < 0:
            raise ValueError("sigmas must be >= 0")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        grid = np.asarray(self.alpha_grid, dtype=np.float64)
        if grid.size == 0:
            raise ValueError("alpha_grid is empty")
        if np.any(grid <= 0) or (grid.size > 1 and np.any(np.diff(grid) <= 0)):
            raise ValueError("alpha_grid must be positive and strictly increasing")
        object.__setattr__(self, "alpha_grid", grid)


@dataclass(frozen=True)
class CalibrationResult:
    """Curve of (alpha, discernibility) pairs plus its argmax.

    ``standard_errors`` holds a per-alpha bootstrap standard error of the
    curve estimate (resampling trials), for separating real structure from
    Monte-Carlo noise.
    """

    alpha_star: float
    discernibility_curve: list[tuple[float, float]]
    standard_errors: np.ndarray

    @property
    def curve_values(self) -> np.ndarray:
        return np.array([v for _, v in self.discernibility_curve])


def _trial_draws(cfg: CalibrationConfig, trial: int):
    """One trial's scores: (matched scalar, N-1 unmatched, N unmatched).

    The substream seed is SeedSequence([rng_seed, trial]) so trial order or
    parallel scheduling cannot change the draws.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, trial]))
    matched = rng.normal(cfg.mu_plus, cfg.sigma_plus)
    rest = rng.normal(cfg.mu_minus, cfg.sigma_minus, size=cfg.n_patches - 1)
    imposter = rng.normal(cfg.mu_minus, cfg.sigma_minus, size=cfg.n_patches)
    return matched, rest, imposter


def _per_trial_likelihoods(cfg: CalibrationConfig, alphas: np.ndarray):
    """L+ and per-trial max L- for every (trial, alpha) pair.

    Returns two arrays of shape (n_trials, n_alphas). The same draws are
    reused across the whole grid (common random numbers), which keeps the
    curve smooth in alpha.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    l_plus = np.empty((cfg.n_trials, alphas.size))
    l_minus = np.empty((cfg.n_trials, alphas.size))
    for trial in range(cfg.n_trials):
        matched, rest, imposter = _trial_draws(cfg, trial)

        # Matched simulation: softmax over [matched, rest], matched entry.
        hi = max(matched, rest.max())
        e_m = np.exp(alphas * (matched - hi))
        e_r = np.exp(alphas[:, None] * (rest - hi)[None, :]).sum(axis=1)
        l_plus[trial] = e_m / (e_m + e_r)

        # Unmatched simulation: softmax over imposters, largest entry,
        # which equals 1 / sum(exp(alpha * (u - max))).
        top = imposter.max()
        e_i = np.exp(alphas[:, None] * (imposter - top)[None, :]).sum(axis=1)
        l_minus[trial] = 1.0 / e_i
    return l_plus, l_minus


def _curve(l_plus: np.ndarray, l_minus: np.ndarray) -> np.ndarray:
    return l_plus.mean(axis=0) - l_minus.max(axis=0)


def simulate_discernibility(cfg: CalibrationConfig, alpha: float) -> float:
    """Monte-Carlo discernibility estimate at one temperature."""
    l_plus, l_minus = _per_trial_likelihoods(cfg, np.array([alpha]))
    return float(_curve(l_plus, l_minus)[0])


def _bootstrap_se(
    l_plus: np.ndarray, l_minus: np.ndarray, seed: int, n_boot: int = 200
) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    n_trials = l_plus.shape[0]
    curves = np.empty((n_boot, l_plus.shape[1]))
    for b in range(n_boot):
        idx = rng.integers(0, n_trials, size=n_trials)
        curves[b] = _curve(l_plus[idx], l_minus[idx])
    return curves.std(axis=0, ddof=1)


def calibrate_alpha(cfg: CalibrationConfig) -> CalibrationResult:
    """Evaluate the discernibility curve over the grid and return its argmax."""
    l_plus, l_minus = _per_trial_likelihoods(cfg, cfg.alpha_grid)
    curve = _curve(l_plus, l_minus)
    se = _bootstrap_se(l_plus, l_minus, cfg.rng_seed)
    best = int(np.argmax(curve))
    pairs = [(float(a), float(v)) for a, v in zip(cfg.alpha_grid, curve)]
    return CalibrationResult(
        alpha_star=float(cfg.alpha_grid[best]),
        discernibility_curve=pairs,
        standard_errors=se,
    )
