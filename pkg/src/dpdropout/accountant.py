"""Privacy accounting for differentially private dropout training.

Two accounting routes are provided for a Gaussian mechanism that is run on
a subsampled minibatch for ``T`` iterations:

* ``ac``: per-step Gaussian mechanism, amplification by subsampling, then
  advanced composition over the ``T`` steps.
* ``zcdp``: per-step Gaussian mechanism, amplification by subsampling,
  conversion of the amplified step to zCDP, additive zCDP composition and a
  final conversion back to (eps, delta)-DP.

Each route has a forward map (``total_budget_*``: noise multiplier to total
budget) and an inverse (``calibrate_sigma_*``: total budget to noise
multiplier). All logarithms are natural.

Example::

    cfg = AccountantConfig(iterations=20000, sampling_ratio=0.01)
    sigma = calibrate_sigma_zcdp(0.5, 1e-4, cfg)
    total_budget_zcdp(sigma, 1e-4, cfg).eps   # -> 0.5
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "PrivacyError",
    "PreconditionError",
    "CalibrationError",
    "PrivacyBudget",
    "ZcdpBudget",
    "Method",
    "AccountantConfig",
    "Accounting",
    "gaussian_sigma_for",
    "gaussian_eps_for",
    "advanced_compose",
    "amplify_by_subsampling",
    "deamplify",
    "zcdp_of_gaussian",
    "zcdp_compose",
    "zcdp_to_dp",
    "dp_per_iter_to_rho",
    "account_ac",
    "account_zcdp",
    "account",
    "total_budget_ac",
    "total_budget_zcdp",
    "total_budget",
    "calibrate_sigma_ac",
    "calibrate_sigma_zcdp",
    "calibrate_sigma",
    "renyi_divergence_gaussian",
    "estimate_renyi_mc",
]

SIGMA_BRACKET = (1e-3, 1e6)


class PrivacyError(ValueError):
    """An argument is outside the domain of a privacy computation."""


class PreconditionError(PrivacyError):
    """A bound's precondition does not hold, so its guarantee does not apply."""


class CalibrationError(PrivacyError):
    """No noise multiplier in the search bracket reaches the target budget."""


@dataclass(frozen=True)
class PrivacyBudget:
    """An (eps, delta) differential privacy guarantee."""

    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps >= 0):
            raise PrivacyError(f"eps must be >= 0, got {self.eps}")
        if not (0 <= self.delta < 1):
            raise PrivacyError(f"delta must be in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class ZcdpBudget:
    """A rho-zCDP guarantee."""

    rho: float

    def __post_init__(self):
        if not (self.rho >= 0):
            raise PrivacyError(f"rho must be >= 0, got {self.rho}")


class Method(str, enum.Enum):
    AC = "ac"
    ZCDP = "zcdp"


@dataclass(frozen=True)
class AccountantConfig:
    """Shape of a training run as seen by the accountant.

    Attributes:
        iterations: number of noisy steps ``T``.
        sampling_ratio: minibatch inclusion probability ``nu = S / N``.
        delta_split: fraction of the total delta given to the composition
            slack ``delta'``.
        method: accounting route used by :func:`account` and friends.
    """

    iterations: int
    sampling_ratio: float
    delta_split: float = 0.5
    method: Method = Method.ZCDP

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise PrivacyError(f"iterations must be a positive integer, got {self.iterations}")
        if not (0 < self.sampling_ratio <= 1):
            raise PrivacyError(f"sampling_ratio must be in (0, 1], got {self.sampling_ratio}")
        if not (0 < self.delta_split < 1):
            raise PrivacyError(f"delta_split must be in (0, 1), got {self.delta_split}")
        object.__setattr__(self, "method", Method(self.method))


@dataclass(frozen=True)
class Accounting:
    """Every intermediate quantity of one forward accounting pass."""

    method: Method
    sigma: float
    per_iteration: PrivacyBudget
    amplified: PrivacyBudget
    total: PrivacyBudget
    rho_total: Optional[float] = None


def _check_delta(delta, name="delta"):
    if not (0 < delta < 1):
        raise PrivacyError(f"{name} must be in (0, 1), got {delta}")


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _expm1(x):
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


# ---------------------------------------------------------------------------
# Gaussian mechanism


def gaussian_sigma_for(eps: float, delta: float, sensitivity: float) -> float:
    """Noise standard deviation making the Gaussian mechanism (eps, delta)-DP.

    Returns ``sensitivity * sqrt(2 ln(1.25 / delta)) / eps``.
    """
    if not eps > 0:
        raise PrivacyError(f"eps must be > 0, got {eps}")
    if not sensitivity > 0:
        raise PrivacyError(f"sensitivity must be > 0, got {sensitivity}")
    _check_delta(delta)
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / eps


def gaussian_eps_for(sigma: float, delta: float, sensitivity: float) -> float:
    """Inverse of :func:`gaussian_sigma_for` in ``eps``."""
    if not sigma > 0:
        raise PrivacyError(f"sigma must be > 0, got {sigma}")
    if not sensitivity > 0:
        raise PrivacyError(f"sensitivity must be > 0, got {sensitivity}")
    _check_delta(delta)
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


# ---------------------------------------------------------------------------
# (eps, delta) composition and amplification


def advanced_compose(eps_iter: float, delta_iter: float, k: int, delta_slack: float) -> PrivacyBudget:
    """k-fold adaptive composition of (eps_iter, delta_iter)-DP mechanisms.

    Uses the exact bound ``sqrt(2k ln(1/delta')) eps + k eps (e^eps - 1)``,
    not its first-order Taylor form.
    """
    if int(k) != k or k < 1:
        raise PrivacyError(f"k must be a positive integer, got {k}")
    if not eps_iter >= 0:
        raise PrivacyError(f"eps_iter must be >= 0, got {eps_iter}")
    if not (0 <= delta_iter < 1):
        raise PrivacyError(f"delta_iter must be in [0, 1), got {delta_iter}")
    _check_delta(delta_slack, "delta_slack")
    if eps_iter == 0:
        eps_tot = 0.0
    else:
        eps_tot = math.sqrt(2.0 * k * math.log(1.0 / delta_slack)) * eps_iter + k * eps_iter * _expm1(eps_iter)
    delta_tot = k * delta_iter + delta_slack
    if delta_tot >= 1:
        raise PrivacyError(f"composed delta {delta_tot} is not below 1")
    return PrivacyBudget(eps_tot, delta_tot)


def _amplified_eps(eps: float, nu: float) -> float:
    if eps > 30.0:
        # ln(1 + nu (e^eps - 1)) rewritten so e^eps never materialises
        return eps + math.log(nu + (1.0 - nu) * math.exp(-eps))
    return math.log1p(nu * math.expm1(eps))


def amplify_by_subsampling(budget: PrivacyBudget, nu: float) -> PrivacyBudget:
    """Budget of a mechanism run on a subsample with inclusion probability ``nu``.

    Raises:
        PreconditionError: if ``nu <= budget.delta``.
    """
    if not (0 < nu <= 1):
        raise PrivacyError(f"nu must be in (0, 1], got {nu}")
    if not nu > budget.delta:
        raise PreconditionError(
            f"amplification needs nu > delta, got nu={nu}, delta={budget.delta}"
        )
    return PrivacyBudget(_amplified_eps(budget.eps, nu), nu * budget.delta)


def deamplify(amplified: PrivacyBudget, nu: float) -> PrivacyBudget:
    """Per-step budget whose subsampled version is ``amplified``."""
    if not (0 < nu <= 1):
        raise PrivacyError(f"nu must be in (0, 1], got {nu}")
    delta = amplified.delta / nu
    if delta >= 1:
        raise PrivacyError(f"de-amplified delta {delta} is not below 1 (nu={nu})")
    eps_p = amplified.eps
    if eps_p > 30.0:
        eps = eps_p - math.log(nu) + math.log1p(-(1.0 - nu) * math.exp(-eps_p))
    else:
        eps = math.log1p(math.expm1(eps_p) / nu)
    return PrivacyBudget(eps, delta)


# ---------------------------------------------------------------------------
# zCDP


def zcdp_of_gaussian(sensitivity: float, noise_variance: float) -> ZcdpBudget:
    """zCDP level ``sensitivity^2 / (2 noise_variance)`` of a Gaussian mechanism."""
    if not sensitivity > 0:
        raise PrivacyError(f"sensitivity must be > 0, got {sensitivity}")
    if not noise_variance > 0:
        raise PrivacyError(f"noise_variance must be > 0, got {noise_variance}")
    return ZcdpBudget(sensitivity**2 / (2.0 * noise_variance))


def zcdp_compose(budgets: Sequence[ZcdpBudget]) -> ZcdpBudget:
    if len(budgets) == 0:
        raise PrivacyError("cannot compose an empty list of zCDP budgets")
    return ZcdpBudget(math.fsum(b.rho for b in budgets))


def zcdp_to_dp(rho: ZcdpBudget, delta: float) -> PrivacyBudget:
    """(rho + 2 sqrt(rho ln(1/delta)), delta)-DP implied by rho-zCDP."""
    _check_delta(delta)
    return PrivacyBudget(rho.rho + 2.0 * math.sqrt(rho.rho * math.log(1.0 / delta)), delta)


def dp_per_iter_to_rho(eps_iter_budget: PrivacyBudget) -> ZcdpBudget:
    """zCDP cost of a Gaussian step calibrated to ``eps_iter_budget``.

    The smallest admissible variance is ``2 ln(1.25/delta) Delta^2 / eps^2``,
    which gives ``rho = eps^2 / (4 ln(1.25/delta))`` for every sensitivity.
    """
    eps, delta = eps_iter_budget.eps, eps_iter_budget.delta
    if not eps > 0:
        raise PrivacyError(f"eps must be > 0, got {eps}")
    _check_delta(delta)
    return ZcdpBudget(eps**2 / (4.0 * math.log(1.25 / delta)))


# ---------------------------------------------------------------------------
# Forward accounting


def account_ac(sigma: float, delta_tot: float, cfg: AccountantConfig) -> Accounting:
    """Advanced-composition accounting of ``cfg.iterations`` subsampled steps."""
    if not sigma > 0:
        raise PrivacyError(f"sigma must be > 0, got {sigma}")
    _check_delta(delta_tot, "delta_tot")
    T, nu = cfg.iterations, cfg.sampling_ratio
    delta_slack = cfg.delta_split * delta_tot
    delta_iter = (delta_tot - delta_slack) / (T * nu)
    _check_delta(delta_iter, "delta_iter")
    # sensitivity cancels: noise std is sensitivity * sigma
    per_iter = PrivacyBudget(gaussian_eps_for(sigma, delta_iter, 1.0), delta_iter)
    amplified = amplify_by_subsampling(per_iter, nu)
    total = advanced_compose(amplified.eps, amplified.delta, T, delta_slack)
    return Accounting(Method.AC, sigma, per_iter, amplified, total)


def account_zcdp(sigma: float, delta_tot: float, cfg: AccountantConfig) -> Accounting:
    """zCDP accounting of ``cfg.iterations`` subsampled steps."""
    if not sigma > 0:
        raise PrivacyError(f"sigma must be > 0, got {sigma}")
    _check_delta(delta_tot, "delta_tot")
    T, nu = cfg.iterations, cfg.sampling_ratio
    delta_prime = cfg.delta_split * delta_tot
    delta_iter = delta_prime / nu
    _check_delta(delta_iter, "delta_iter")
    per_iter = PrivacyBudget(gaussian_eps_for(sigma, delta_iter, 1.0), delta_iter)
    amplified = amplify_by_subsampling(per_iter, nu)
    rho_total = T * dp_per_iter_to_rho(amplified).rho
    total = zcdp_to_dp(ZcdpBudget(rho_total), delta_tot)
    return Accounting(Method.ZCDP, sigma, per_iter, amplified, total, rho_total)


def account(sigma: float, delta_tot: float, cfg: AccountantConfig) -> Accounting:
    """Forward accounting with the route named by ``cfg.method``."""
    if cfg.method is Method.AC:
        return account_ac(sigma, delta_tot, cfg)
    return account_zcdp(sigma, delta_tot, cfg)


def total_budget_ac(sigma: float, delta_tot: float, cfg: AccountantConfig) -> PrivacyBudget:
    return account_ac(sigma, delta_tot, cfg).total


def total_budget_zcdp(sigma: float, delta_tot: float, cfg: AccountantConfig) -> PrivacyBudget:
    return account_zcdp(sigma, delta_tot, cfg).total


def total_budget(sigma: float, delta_tot: float, cfg: AccountantConfig) -> PrivacyBudget:
    return account(sigma, delta_tot, cfg).total


# ---------------------------------------------------------------------------
# Calibration


def _bisect_decreasing(f: Callable[[float], float], target: float, lo: float, hi: float) -> float:
    """Geometric bisection for ``f(x) = target`` with ``f`` strictly decreasing."""
    f_lo, f_hi = f(lo), f(hi)
    if not (f_hi <= target <= f_lo):
        raise CalibrationError(
            f"target eps {target} is outside the achievable range "
            f"[{f_hi:.6g}, {f_lo:.6g}] for sigma in [{lo:g}, {hi:g}]"
        )
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    # pick whichever endpoint has the smaller residual
    return lo if abs(f(lo) - target) <= abs(f(hi) - target) else hi


def _ac_eps_or_inf(sigma, delta_tot, cfg):
    try:
        return account_ac(sigma, delta_tot, cfg).total.eps
    except PrivacyError:
        return math.inf


def calibrate_sigma_ac(
    eps_tot: float, delta_tot: float, cfg: AccountantConfig, bracket: tuple = SIGMA_BRACKET
) -> float:
    """Noise multiplier whose advanced-composition total is ``eps_tot``.

    There is no closed form, so the monotone map sigma -> eps_tot is inverted
    by bisection over ``bracket``.
    """
    if not eps_tot > 0:
        raise PrivacyError(f"eps_tot must be > 0, got {eps_tot}")
    _check_delta(delta_tot, "delta_tot")
    # surface genuine precondition failures instead of reporting them as range errors
    account_ac(bracket[1], delta_tot, cfg)
    return _bisect_decreasing(lambda s: _ac_eps_or_inf(s, delta_tot, cfg), eps_tot, *bracket)


def calibrate_sigma_zcdp(eps_tot: float, delta_tot: float, cfg: AccountantConfig) -> float:
    """Noise multiplier whose zCDP total is ``eps_tot``, in closed form."""
    if not eps_tot > 0:
        raise PrivacyError(f"eps_tot must be > 0, got {eps_tot}")
    _check_delta(delta_tot, "delta_tot")
    T, nu = cfg.iterations, cfg.sampling_ratio
    L = math.log(1.0 / delta_tot)
    # positive root of rho + 2 sqrt(rho L) = eps in sqrt(rho), cancellation-free
    sqrt_rho = eps_tot / (math.sqrt(L) + math.sqrt(L + eps_tot))
    rho_iter = sqrt_rho**2 / T
    delta_prime = cfg.delta_split * delta_tot
    if not nu > delta_prime / nu:
        raise PreconditionError(
            f"amplification needs nu > delta_iter, got nu={nu}, delta_iter={delta_prime / nu}"
        )
    eps_prime = 2.0 * math.sqrt(rho_iter * math.log(1.25 / delta_prime))
    per_iter = deamplify(PrivacyBudget(eps_prime, delta_prime), nu)
    if per_iter.eps == 0:
        raise CalibrationError(f"target eps {eps_tot} is too small to represent")
    return gaussian_sigma_for(per_iter.eps, per_iter.delta, 1.0)


def calibrate_sigma(eps_tot: float, delta_tot: float, cfg: AccountantConfig) -> float:
    if cfg.method is Method.AC:
        return calibrate_sigma_ac(eps_tot, delta_tot, cfg)
    return calibrate_sigma_zcdp(eps_tot, delta_tot, cfg)


# ---------------------------------------------------------------------------
# Renyi divergence between shifted Gaussians


def renyi_divergence_gaussian(alpha: float, mean_shift: float, variance: float) -> float:
    """Order-``alpha`` Renyi divergence of N(0, v) from N(shift, v)."""
    if not alpha > 1:
        raise PrivacyError(f"alpha must be > 1, got {alpha}")
    if not variance > 0:
        raise PrivacyError(f"variance must be > 0, got {variance}")
    return alpha * mean_shift**2 / (2.0 * variance)


def estimate_renyi_mc(
    alpha: float, mean_shift: float, variance: float, samples: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo estimate of the same divergence from its definition.

    Draws ``x ~ N(0, v)``, averages the likelihood ratio raised to
    ``alpha - 1`` and log-transforms. The standard error is propagated
    through the log with the delta method.

    Returns:
        ``(estimate, std_error)``.
    """
    if not alpha > 1:
        raise PrivacyError(f"alpha must be > 1, got {alpha}")
    if not variance > 0 or not math.isfinite(variance):
        raise PrivacyError(f"variance must be positive and finite, got {variance}")
    if samples < 1000:
        raise PrivacyError(f"need at least 1000 samples, got {samples}")
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, math.sqrt(variance), size=int(samples))
    log_ratio = (mean_shift**2 - 2.0 * x * mean_shift) / (2.0 * variance)
    w = np.exp((alpha - 1.0) * log_ratio)
    mean = float(w.mean())
    se_mean = float(w.std(ddof=1)) / math.sqrt(samples)
    estimate = math.log(mean) / (alpha - 1.0)
    std_error = se_mean / (mean * (alpha - 1.0))
    return estimate, std_error
