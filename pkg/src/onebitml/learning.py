"""Likelihood-table learning from one-bit training observations.

Three learners share one observation model: every candidate symbol vector
``s_k`` is sent ``N_tr`` times and each antenna component records the sign of
its (optionally dithered) receive sample.

* naive: the table entry is the raw fraction of ``+1`` observations.
* DL: a fixed real dither of variance ``sigma_d^2`` is added to every
  component, and the fraction is mapped back to the un-dithered likelihood.
* iDL: the ``N_tr`` repetitions are split into ``N`` sub-blocks. After each
  sub-block, every antenna that saw no sign change gets its dither variance
  raised by ``dither_step``; the de-noised sub-block likelihoods are averaged.

Dither variances are per real component, the same units as the per-component
noise variance ``N0/2``. The de-noising step works with the noise-equivalent
power ``2 * sigma_d^2`` so that ``N0 + 2 sigma_d^2`` is the total complex
noise power seen by the quantizer.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .core import quantize, synthesize_received
from .exceptions import ConfigurationError, ContractError
from .gaussian import std_normal_cdf, std_normal_logcdf, std_normal_quantile

__all__ = [
    "TrainConfig",
    "LikelihoodTable",
    "DitherState",
    "TrainingBlock",
    "TrainingRecord",
    "empirical_plus_frequency",
    "denoise",
    "dither_noise_equivalent",
    "observe_training",
    "fit_dithered",
    "learn_naive",
    "learn_dl",
    "learn_idl",
    "count_undertrained",
    "save_table_csv",
    "load_table_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    """Training schedule.

    ``noise_power_for_denoise=None`` means "use the true N0 of the system";
    ``clamp_epsilon=None`` means half a count at the sub-block resolution,
    ``1 / (2 * N_tr / N)``.
    """

    reps_per_symbol: int = 30
    num_subblocks: int = 1
    dither_step: float = 0.0
    initial_dither_var: float = 0.0
    noise_power_for_denoise: float | None = None
    clamp_epsilon: float | None = None

    def __post_init__(self):
        if int(self.reps_per_symbol) != self.reps_per_symbol or self.reps_per_symbol < 1:
            raise ConfigurationError("reps_per_symbol must be a positive integer")
        if int(self.num_subblocks) != self.num_subblocks or self.num_subblocks < 1:
            raise ConfigurationError("num_subblocks must be a positive integer")
        if self.reps_per_symbol % self.num_subblocks:
            raise ConfigurationError(
                f"num_subblocks={self.num_subblocks} must divide reps_per_symbol={self.reps_per_symbol}"
            )
        if self.dither_step < 0 or self.initial_dither_var < 0:
            raise ConfigurationError("dither variances must be nonnegative")
        if self.noise_power_for_denoise is not None and not self.noise_power_for_denoise > 0:
            raise ConfigurationError("noise_power_for_denoise must be positive")
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigurationError("clamp_epsilon must lie in (0, 0.5)")

    @property
    def subblock_length(self):
        return self.reps_per_symbol // self.num_subblocks

    @property
    def epsilon(self):
        if self.clamp_epsilon is not None:
            return self.clamp_epsilon
        return 1.0 / (2.0 * self.subblock_length)

    def denoise_noise_power(self, config):
        if self.noise_power_for_denoise is None:
            return config.noise_power
        return self.noise_power_for_denoise


@dataclass(frozen=True)
class LikelihoodTable:
    """``p_plus[k, i]`` = P(y_i = +1 | s_k). ``P(y_i = -1)`` is the complement.

    ``raw_plus`` keeps the pre-clamp empirical ``+1`` frequency over all
    ``N_tr`` observations of each symbol (what the undertrained count uses).
    """

    p_plus: np.ndarray
    raw_plus: np.ndarray | None = None
    train: TrainConfig | None = None
    method: str = ""
    log_plus: np.ndarray | None = None
    log_minus: np.ndarray | None = None

    @property
    def p_minus(self):
        return 1.0 - self.p_plus

    def log_tables(self):
        """``(log p_plus, log p_minus)``.

        De-noised learners store these directly (computed from ``log Phi``),
        which keeps them finite where ``p_plus`` itself rounds to 0 or 1.
        Otherwise they are taken from ``p_plus`` and zeros map to ``-inf``.
        """
        if self.log_plus is not None:
            return self.log_plus, self.log_minus
        with np.errstate(divide="ignore"):
            return np.log(self.p_plus), np.log1p(-self.p_plus)

    @property
    def shape(self):
        return self.p_plus.shape


@dataclass(frozen=True)
class DitherState:
    variances: np.ndarray
    indicators: np.ndarray


@dataclass(frozen=True)
class TrainingBlock:
    """Observations of one symbol: ``(N_tr, 2Nr)`` signs and ``(N, 2Nr)`` active variances."""

    observations: np.ndarray
    per_subblock_variances: np.ndarray

    def subblock(self, n):
        length = self.observations.shape[0] // self.per_subblock_variances.shape[0]
        return self.observations[n * length:(n + 1) * length]


@dataclass(frozen=True)
class TrainingRecord:
    """Training observations for a stack of symbol vectors.

    observations: ``(K, N_tr, 2Nr)`` int8 signs.
    subblock_variances: ``(K, N, 2Nr)`` dither variance active during each sub-block.
    final_state: variances/indicators after the last sub-block's update.
    """

    observations: np.ndarray
    subblock_variances: np.ndarray
    final_state: DitherState

    @property
    def num_subblocks(self):
        return self.subblock_variances.shape[1]

    def block(self, k):
        return TrainingBlock(self.observations[k], self.subblock_variances[k])

    def plus_counts(self, n=None):
        """Number of +1 per (symbol, antenna), over sub-block ``n`` or the whole block."""
        obs = self.observations
        if n is not None:
            length = obs.shape[1] // self.num_subblocks
            obs = obs[:, n * length:(n + 1) * length]
        return np.count_nonzero(obs > 0, axis=1)

    def raw_frequencies(self):
        return self.plus_counts() / self.observations.shape[1]


def empirical_plus_frequency(observations, axis=None):
    """Fraction of entries equal to +1 (along ``axis`` if given)."""
    observations = np.asarray(observations)
    n = observations.size if axis is None else observations.shape[axis]
    if n == 0:
        raise ContractError("empirical frequency of an empty sequence")
    out = np.count_nonzero(observations > 0, axis=axis) / n
    return float(out) if np.ndim(out) == 0 else out


def denoise(p_hat, dither_var, noise_power, clamp_epsilon):
    """Map a dithered ``+1`` frequency back to the un-dithered likelihood.

    ``p_hat`` is clamped to ``[eps, 1 - eps]``, then
    ``psi_hat = sqrt(1 + dither_var / noise_power) * Phi^{-1}(p_hat)`` and the
    refined likelihood is ``Phi(psi_hat)``. ``dither_var`` is in the same
    units as ``noise_power`` (see :func:`dither_noise_equivalent`).
    Returns ``(psi_hat, refined)``; both broadcast over array inputs.
    """
    if not noise_power > 0:
        raise ContractError("noise_power must be positive")
    if np.any(np.asarray(dither_var) < 0):
        raise ContractError("dither variance must be nonnegative")
    if not 0.0 < clamp_epsilon < 0.5:
        raise ContractError("clamp_epsilon must lie in (0, 0.5)")
    clamped = np.clip(p_hat, clamp_epsilon, 1.0 - clamp_epsilon)
    psi_hat = np.sqrt(1.0 + np.asarray(dither_var) / noise_power) * std_normal_quantile(clamped)
    return psi_hat, std_normal_cdf(psi_hat)


def dither_noise_equivalent(dither_var):
    """Per-component dither variance expressed as a complex noise power."""
    return 2.0 * np.asarray(dither_var, dtype=float)


def _repeat_rows(s_rows, reps):
    return np.broadcast_to(s_rows[:, None, :], (s_rows.shape[0], reps, s_rows.shape[1]))


def observe_training(s_rows, H, config, train, rng):
    """Run the sub-block dithering schedule and record every quantized sample.

    ``s_rows`` is ``(K, 2Nu)``. Sub-blocks are processed in order for all
    symbols at once; each symbol's variances start at
    ``train.initial_dither_var``. Random draws per sub-block: noise
    ``(K, N_tr/N, 2Nr)`` then dither of the same shape.
    """
    s_rows = np.asarray(s_rows, dtype=float)
    num = s_rows.shape[0]
    two_nr = 2 * config.num_rx_antennas
    length = train.subblock_length
    variances = np.full((num, two_nr), float(train.initial_dither_var))
    indicators = np.zeros((num, two_nr), dtype=np.int8)
    observations = np.empty((num, train.reps_per_symbol, two_nr), dtype=np.int8)
    history = np.empty((num, train.num_subblocks, two_nr))
    s_block = _repeat_rows(s_rows, length)
    for n in range(train.num_subblocks):
        history[:, n] = variances
        r = synthesize_received(H, s_block, config, dither_vars=variances[:, None, :], rng=rng)
        y = quantize(r)
        observations[:, n * length:(n + 1) * length] = y
        plus = np.count_nonzero(y > 0, axis=1)
        indicators = ((plus == 0) | (plus == length)).astype(np.int8)
        variances = variances + indicators * train.dither_step
    return TrainingRecord(observations, history, DitherState(variances, indicators))


def fit_dithered(record, noise_power, clamp_epsilon):
    """Average of the per-sub-block de-noised likelihoods.

    Returns ``(p_plus, log_plus, log_minus)``, each ``(K, 2Nr)``; the logs
    are the same averages accumulated with ``logaddexp``.
    """
    num_sub = record.num_subblocks
    length = record.observations.shape[1] // num_sub
    shape = record.subblock_variances[:, 0].shape
    p_plus = np.zeros(shape)
    log_plus = np.full(shape, -np.inf)
    log_minus = np.full(shape, -np.inf)
    log_n = np.log(num_sub)
    for n in range(num_sub):
        p_hat = record.plus_counts(n) / length
        sigma2 = dither_noise_equivalent(record.subblock_variances[:, n])
        psi_hat, refined = denoise(p_hat, sigma2, noise_power, clamp_epsilon)
        p_plus = p_plus + refined / num_sub
        log_plus = np.logaddexp(log_plus, std_normal_logcdf(psi_hat) - log_n)
        log_minus = np.logaddexp(log_minus, std_normal_logcdf(-psi_hat) - log_n)
    return p_plus, log_plus, log_minus


def learn_naive(book, H, config, train, rng):
    """Raw ``+1`` frequencies over ``N_tr`` un-dithered repetitions; 0 and 1 kept."""
    s = _repeat_rows(book.vectors_real, train.reps_per_symbol)
    y = quantize(synthesize_received(H, s, config, rng=rng))
    raw = np.count_nonzero(y > 0, axis=1) / train.reps_per_symbol
    return LikelihoodTable(raw, raw, train, "naive")


def learn_dl(book, H, config, train, dither_var, rng, noise_power=None):
    """Fixed-dither learning: every component gets variance ``dither_var``.

    Uses the whole ``N_tr`` block as one estimate (``train.num_subblocks`` is
    ignored) with clamp ``1/(2 N_tr)`` unless ``train.clamp_epsilon`` is set.
    """
    if dither_var < 0:
        raise ContractError("dither variance must be nonnegative")
    reps = train.reps_per_symbol
    eps = train.clamp_epsilon if train.clamp_epsilon is not None else 1.0 / (2.0 * reps)
    if noise_power is None:
        noise_power = train.denoise_noise_power(config)
    s = _repeat_rows(book.vectors_real, reps)
    dither = np.full((book.count, 1, 2 * config.num_rx_antennas), float(dither_var))
    y = quantize(synthesize_received(H, s, config, dither_vars=dither, rng=rng))
    counts = np.count_nonzero(y > 0, axis=1)
    raw = counts / reps
    psi_hat, refined = denoise(raw, dither_noise_equivalent(dither[:, 0]), noise_power, eps)
    dl_train = replace(train, num_subblocks=1, dither_step=0.0, initial_dither_var=float(dither_var))
    return LikelihoodTable(
        refined, raw, dl_train, "dl",
        std_normal_logcdf(psi_hat), std_normal_logcdf(-psi_hat),
    )


def learn_idl(book, H, config, train, rng, noise_power=None):
    """Incremental dither-and-learning.

    Returns ``(table, final_state)`` where ``final_state`` stacks each
    symbol's last variances and indicators as ``(K, 2Nr)`` arrays.
    """
    record = observe_training(book.vectors_real, H, config, train, rng)
    if noise_power is None:
        noise_power = train.denoise_noise_power(config)
    p_plus, log_plus, log_minus = fit_dithered(record, noise_power, train.epsilon)
    table = LikelihoodTable(p_plus, record.raw_frequencies(), train, "idl", log_plus, log_minus)
    return table, record.final_state


def count_undertrained(raw_frequencies):
    """Average over symbols of the number of entries at exactly 0 or 1."""
    raw = np.asarray(raw_frequencies, dtype=float)
    if raw.ndim != 2:
        raise ContractError("expected a (K, 2Nr) matrix of frequencies")
    if np.any((raw < 0) | (raw > 1)):
        raise ContractError("frequencies must lie in [0, 1]")
    return float(np.mean(np.count_nonzero((raw == 0.0) | (raw == 1.0), axis=1)))


def save_table_csv(table, path):
    """Write ``p_plus`` as CSV: ``#`` metadata lines, a header, one row per symbol."""
    k, d = table.p_plus.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# method={table.method or 'unknown'}\n")
        if table.train is not None:
            t = table.train
            fh.write(
                f"# reps_per_symbol={t.reps_per_symbol} num_subblocks={t.num_subblocks} "
                f"dither_step={t.dither_step!r} initial_dither_var={t.initial_dither_var!r}\n"
            )
        fh.write("k," + ",".join(f"p{i}" for i in range(d)) + "\n")
        for row_index, row in enumerate(table.p_plus):
            fh.write(f"{row_index}," + ",".join(repr(float(v)) for v in row) + "\n")


def load_table_csv(path):
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
                continue
            if line.startswith("k,"):
                continue
            values = line.split(",")
            rows.append([float(v) for v in values[1:]])
    p_plus = np.array(rows, dtype=float)
    train = None
    if "reps_per_symbol" in meta:
        train = TrainConfig(
            int(meta["reps_per_symbol"]), int(meta["num_subblocks"]),
            float(meta["dither_step"]), float(meta["initial_dither_var"]),
        )
    return LikelihoodTable(p_plus, None, train, meta.get("method", ""))
