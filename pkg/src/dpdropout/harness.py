"""End-to-end training runs: calibration, the noisy SGLD loop, evaluation and
privacy reporting.

A run is described by a :class:`TrainConfig`. :func:`train_dpd` calibrates the
noise multiplier when a target budget is given, then for ``T = E N / S``
iterations samples a minibatch, computes the log-posterior gradient, clips
each layer to ``C``, adds ``N(0, 4 C^2 sigma^2)`` noise per layer and takes
the step ``theta += (eta_t / 2) (grad + noise)``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import typing
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import accountant as acc
from .data import Dataset, load_bundled_digits, load_digits_csv, load_idx, sample_minibatch
from .mechanism import NoiseSpec, clip_by_l2, dropout_alpha_from_noise
from .model import (
    ModelParams,
    StepSchedule,
    evaluate_accuracy,
    init_params,
    log_posterior_grad,
    posterior_predictive,
    sgld_update,
    step_size,
)

__all__ = [
    "ConfigError",
    "TrainConfig",
    "PrivacyReport",
    "EpochRecord",
    "MetricsTrace",
    "TrainResult",
    "SweepRow",
    "load_config",
    "resolve_datasets",
    "iteration_count",
    "accountant_config",
    "resolve_sigma",
    "privacy_report",
    "verify_report",
    "train_dpd",
    "train_nonprivate",
    "run_seeds",
    "sweep_sigma_vs_eps",
    "sweep_to_csv",
]

METHODS = ("ac", "zcdp", "none")
NOISE_MODES = ("dropout", "sgld")


class ConfigError(ValueError):
    """The training configuration is inconsistent or cannot be satisfied."""


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run.

    ``dataset`` is ``"digits"`` (bundled CSVs unless ``train_path`` and
    ``test_path`` are given) or ``"mnist"`` (IDX files via the four
    ``*_images``/``*_labels`` paths). ``method`` is ``"ac"``, ``"zcdp"`` or
    ``"none"``; a private method needs exactly one of ``epsilon`` and
    ``sigma``. ``noise_mode="sgld"`` scales the noise by ``sqrt(eta_t)``
    instead of ``eta_t / 2``, the no-dropout SGLD variant.
    ``posterior_samples > 0`` scores the final model by averaging the
    predictions of the parameters at the end of that many last epochs.
    """

    dataset: str = "digits"
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    hidden_units: int = 500
    batch_size: int = 100
    epochs: int = 100
    clip_threshold: Optional[float] = 2.0
    eta0: float = 0.05
    gamma: float = 1.0
    prior_precision: float = 1e-4
    method: str = "zcdp"
    epsilon: Optional[float] = None
    delta: float = 1e-4
    sigma: Optional[float] = None
    delta_split: float = 0.5
    noise_mode: str = "dropout"
    posterior_samples: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if self.dataset not in ("digits", "mnist"):
            raise ConfigError(f"dataset must be 'digits' or 'mnist', got {self.dataset!r}")
        for name in ("hidden_units", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.eta0 <= 0 or self.gamma <= 0:
            raise ConfigError("eta0 and gamma must be > 0")
        if self.prior_precision < 0:
            raise ConfigError("prior_precision must be >= 0")
        if self.posterior_samples < 0:
            raise ConfigError("posterior_samples must be >= 0")
        if self.private:
            if (self.epsilon is None) == (self.sigma is None):
                raise ConfigError("set exactly one of epsilon and sigma for a private run")
            if self.clip_threshold is None or self.clip_threshold <= 0:
                raise ConfigError("a private run needs clip_threshold > 0")
            if self.epsilon is not None and self.epsilon <= 0:
                raise ConfigError("epsilon must be > 0")
            if self.sigma is not None and self.sigma <= 0:
                raise ConfigError("sigma must be > 0")
            if not 0 < self.delta < 1:
                raise ConfigError("delta must be in (0, 1)")
            if not 0 < self.delta_split < 1:
                raise ConfigError("delta_split must be in (0, 1)")

    @property
    def private(self) -> bool:
        return self.method != "none"

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# Config files: one ``key = value`` per line, ``#`` comments, ``none`` for unset.

_FIELD_TYPES = typing.get_type_hints(TrainConfig)


def _convert(name, text):
    hint = _FIELD_TYPES[name]
    optional = typing.get_origin(hint) is typing.Union
    base = [a for a in typing.get_args(hint) if a is not type(None)][0] if optional else hint
    if optional and text.lower() in ("none", ""):
        return None
    if not text:
        raise ConfigError(f"{name} cannot be empty")
    try:
        if base is bool:
            return text.lower() in ("1", "true", "yes")
        return base(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {base.__name__}") from None


def load_config(path, **overrides) -> TrainConfig:
    """Read a flat ``key = value`` config file; keyword overrides win."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def resolve_datasets(config: TrainConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "digits":
        if config.train_path or config.test_path:
            if not (config.train_path and config.test_path):
                raise ConfigError("give both train_path and test_path for DIGITS CSVs")
            return load_digits_csv(config.train_path, config.test_path)
        return load_bundled_digits()
    paths = (config.train_images, config.train_labels, config.test_images, config.test_labels)
    if not all(paths):
        raise ConfigError("MNIST needs train_images, train_labels, test_images and test_labels")
    return load_idx(paths[0], paths[1]), load_idx(paths[2], paths[3])


# ---------------------------------------------------------------------------
# Privacy reporting


@dataclass(frozen=True)
class PrivacyReport:
    """Audit trail of one run's privacy accounting.

    ``generated_at`` is the only non-reproducible field.
    """

    method: str
    private: bool
    sigma: Optional[float] = None
    eps_iter: Optional[float] = None
    delta_iter: Optional[float] = None
    eps_amplified: Optional[float] = None
    delta_amplified: Optional[float] = None
    eps_tot: Optional[float] = None
    delta_tot: Optional[float] = None
    rho_total: Optional[float] = None
    sensitivity: Optional[float] = None
    iterations: Optional[int] = None
    sampling_ratio: Optional[float] = None
    delta_split: Optional[float] = None
    dropout_rates: Optional[dict] = None
    generated_at: Optional[str] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, timestamp: bool = True) -> str:
        d = self.to_dict()
        if timestamp and d["generated_at"] is None:
            d["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return json.dumps(d, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacyReport":
        return cls(**d)


def iteration_count(config: TrainConfig, n_train: int) -> int:
    """``T = E / nu = E N / S``, rounded to the nearest integer."""
    return max(1, int(round(config.epochs * n_train / config.batch_size)))


def accountant_config(config: TrainConfig, n_train: int) -> acc.AccountantConfig:
    if not config.private:
        raise ConfigError("a non-private run has no accountant")
    if config.batch_size > n_train:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {n_train} training examples")
    return acc.AccountantConfig(
        iterations=iteration_count(config, n_train),
        sampling_ratio=config.batch_size / n_train,
        delta_split=config.delta_split,
        method=acc.Method(config.method),
    )


def resolve_sigma(config: TrainConfig, n_train: int) -> float:
    """The explicit sigma, or the one calibrated to (epsilon, delta)."""
    if config.sigma is not None:
        return float(config.sigma)
    cfg = accountant_config(config, n_train)
    try:
        return acc.calibrate_sigma(config.epsilon, config.delta, cfg)
    except acc.PrivacyError as exc:
        raise ConfigError(f"calibration failed: {exc}") from exc


def _report_from(accounting: acc.Accounting, config: TrainConfig, cfg: acc.AccountantConfig, dropout=None):
    return PrivacyReport(
        method=config.method,
        private=True,
        sigma=accounting.sigma,
        eps_iter=accounting.per_iteration.eps,
        delta_iter=accounting.per_iteration.delta,
        eps_amplified=accounting.amplified.eps,
        delta_amplified=accounting.amplified.delta,
        eps_tot=accounting.total.eps,
        delta_tot=accounting.total.delta,
        rho_total=accounting.rho_total,
        sensitivity=2.0 * config.clip_threshold,
        iterations=cfg.iterations,
        sampling_ratio=cfg.sampling_ratio,
        delta_split=cfg.delta_split,
        dropout_rates=dropout,
    )


def privacy_report(config: TrainConfig, n_train: Optional[int] = None) -> PrivacyReport:
    """Report the privacy cost of ``config`` without training.

    ``n_train`` defaults to the size of the configured training set.
    """
    if not config.private:
        return PrivacyReport(method="none", private=False)
    if n_train is None:
        n_train = resolve_datasets(config)[0].n_examples
    cfg = accountant_config(config, n_train)
    sigma = resolve_sigma(config, n_train)
    try:
        accounting = acc.account(sigma, config.delta, cfg)
    except acc.PrivacyError as exc:
        raise ConfigError(f"accounting failed: {exc}") from exc
    return _report_from(accounting, config, cfg)


def verify_report(report: PrivacyReport, rtol: float = 1e-6) -> bool:
    """Re-run the forward accountant from the report's own fields."""
    if not report.private:
        return report.sigma is None
    cfg = acc.AccountantConfig(
        report.iterations, report.sampling_ratio, report.delta_split, acc.Method(report.method)
    )
    eps = acc.total_budget(report.sigma, report.delta_tot, cfg).eps
    return math.isclose(eps, report.eps_tot, rel_tol=rtol)


# ---------------------------------------------------------------------------
# Traces


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    test_accuracy: float
    train_accuracy: float
    mean_grad_norm: float
    clip_fraction: float


@dataclass
class MetricsTrace:
    records: list = field(default_factory=list)

    COLUMNS = ("epoch", "test_accuracy", "train_accuracy", "mean_grad_norm", "clip_fraction")

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    @property
    def final_test_accuracy(self) -> float:
        return self.records[-1].test_accuracy

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.records:
            writer.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in self.COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "MetricsTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [
                EpochRecord(int(r["epoch"]), *(float(r[c]) for c in cls.COLUMNS[1:]))
                for r in rows
            ]
        )


class TrainResult(NamedTuple):
    params: ModelParams
    report: PrivacyReport
    trace: MetricsTrace
    final_accuracy: float


# ---------------------------------------------------------------------------
# Training


def _global_norm(grads: ModelParams) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.layers()))


def train_dpd(config: TrainConfig, train: Dataset, test: Dataset) -> TrainResult:
    """Differentially private dropout training.

    Calibration and dataset checks happen before any training work, so a bad
    configuration raises :class:`ConfigError` immediately.
    """
    if train.n_features != test.n_features or train.n_classes != test.n_classes:
        raise ConfigError(
            f"train ({train.n_features} features, {train.n_classes} classes) and test "
            f"({test.n_features}, {test.n_classes}) do not match"
        )
    N = train.n_examples
    if config.batch_size > N:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {N} training examples")

    spec = None
    if config.private:
        cfg = accountant_config(config, N)
        sigma = resolve_sigma(config, N)
        try:
            accounting = acc.account(sigma, config.delta, cfg)
        except acc.PrivacyError as exc:
            raise ConfigError(f"accounting failed: {exc}") from exc
        spec = NoiseSpec(config.clip_threshold, sigma)

    T = iteration_count(config, N)
    batches_per_epoch = N / config.batch_size
    epoch_ends = {int(round(e * batches_per_epoch)): e for e in range(1, config.epochs + 1)}
    epoch_ends[T] = config.epochs
    schedule = StepSchedule(config.eta0, config.gamma)

    init_seq, train_seq = np.random.SeedSequence(config.seed).spawn(2)
    params = init_params(train.n_features, config.hidden_units, train.n_classes, init_seq)
    rng = np.random.default_rng(train_seq)
    clip = config.clip_threshold if config.private else None

    trace = MetricsTrace()
    keep = config.posterior_samples
    samples: list[ModelParams] = []
    norm_sum, clipped, steps_in_epoch = 0.0, 0, 0

    for t in range(1, T + 1):
        batch = sample_minibatch(train, config.batch_size, rng)
        grads = log_posterior_grad(params, batch.features, batch.labels, N, config.prior_precision)
        norm_sum += _global_norm(grads)
        steps_in_epoch += 1
        eta = step_size(schedule, t)
        if spec is not None:
            layer_norms = [np.linalg.norm(g.ravel()) for g in grads.layers()]
            clipped += any(n > clip for n in layer_norms)
            grads = grads.map(lambda g: clip_by_l2(g, clip))
            noise = grads.map(lambda g: rng.normal(0.0, spec.noise_std, size=g.shape))
            if config.noise_mode == "sgld":
                # additive N(0, eta * std^2) after the eta/2 factor applied by the update
                noise = noise.map(lambda n: n * (2.0 / math.sqrt(eta)))
        else:
            noise = grads.map(np.zeros_like)
        params = sgld_update(params, grads, noise, eta)

        if t in epoch_ends:
            epoch = epoch_ends[t]
            trace.append(
                EpochRecord(
                    epoch=epoch,
                    test_accuracy=evaluate_accuracy(params, test),
                    train_accuracy=evaluate_accuracy(params, train),
                    mean_grad_norm=norm_sum / steps_in_epoch,
                    clip_fraction=clipped / steps_in_epoch,
                )
            )
            norm_sum, clipped, steps_in_epoch = 0.0, 0, 0
            if keep:
                samples = (samples + [params])[-keep:]

    if keep:
        probs = posterior_predictive(samples, test.features)
        final_accuracy = float(np.mean(np.argmax(probs, axis=1) == test.labels))
    else:
        final_accuracy = trace.final_test_accuracy

    if spec is not None:
        dropout = dropout_alpha_from_noise(spec, params.flat()).summary()
        report = _report_from(accounting, config, cfg, dropout)
    else:
        report = PrivacyReport(method="none", private=False)
    return TrainResult(params, report, trace, final_accuracy)


def train_nonprivate(config: TrainConfig, train: Dataset, test: Dataset) -> TrainResult:
    """The same loop with clipping and noise switched off."""
    np_config = config.replace(method="none", epsilon=None, sigma=None, clip_threshold=None)
    return train_dpd(np_config, train, test)


def run_seeds(config: TrainConfig, seeds: Sequence[int], train: Dataset, test: Dataset) -> list:
    """One run per seed; seeds vary both initialisation and minibatch order."""
    return [train_dpd(config.replace(seed=s), train, test) for s in seeds]


# ---------------------------------------------------------------------------
# sigma-vs-epsilon sweep


@dataclass(frozen=True)
class SweepRow:
    eps: float
    sigma_ac: Optional[float]
    sigma_zcdp: Optional[float]
    error: Optional[str] = None


def sweep_sigma_vs_eps(cfg: acc.AccountantConfig, eps_grid: Sequence[float], delta_tot: float) -> list:
    """Calibrate both methods at each epsilon; failures are recorded per row."""
    if len(eps_grid) == 0:
        raise ValueError("empty epsilon grid")
    rows = []
    for eps in sorted(float(e) for e in eps_grid):
        sigmas, errors = {}, []
        for name, fn in (("ac", acc.calibrate_sigma_ac), ("zcdp", acc.calibrate_sigma_zcdp)):
            try:
                sigmas[name] = fn(eps, delta_tot, cfg)
            except acc.PrivacyError as exc:
                sigmas[name] = None
                errors.append(f"{name}: {exc}")
        rows.append(SweepRow(eps, sigmas["ac"], sigmas["zcdp"], "; ".join(errors) or None))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("eps", "sigma_ac", "sigma_zcdp"))
    for r in rows:
        writer.writerow(
            [repr(r.eps)] + ["" if s is None else repr(s) for s in (r.sigma_ac, r.sigma_zcdp)]
        )
    return buf.getvalue()
