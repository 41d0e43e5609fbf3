"""Monte Carlo SER and undertrained-count sweeps.

Every random draw comes from a stream derived from
``(master_seed, snr_index, trial_index, role)``, so a trial's outcome depends
only on the spec and its indices: adding a detector, changing the worker
count or the execution order leaves the others untouched.

Detector ids:

``naive``, ``dl``, ``idl-n<N>`` and ``idl-est-n<N>`` are learned ML
detectors; ``zf`` and ``csi`` use the true channel. ``idl`` and ``idl-est`` in
a detector list expand to one entry per configured sub-block count.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import logging
import math
import time

import numpy as np

from .core import (
    SystemConfig,
    db_to_linear,
    draw_rayleigh_channel,
    enumerate_symbol_book,
    quantize,
    synthesize_received,
)
from .detectors import (
    csi_log_tables,
    ml_detect_csi_batch,
    ml_detect_learned_batch,
    zf_detect_batch,
)
from .exceptions import ConfigurationError, DetectionError
from .learning import (
    LikelihoodTable,
    TrainConfig,
    count_undertrained,
    fit_dithered,
    learn_dl,
    learn_naive,
    observe_training,
)
from .snr import estimate_snr_db, load_mlp

__all__ = [
    "ExperimentSpec",
    "SweepRow",
    "SweepResult",
    "TrialOutcome",
    "CSV_COLUMNS",
    "expand_detectors",
    "trial_rng",
    "run_trial",
    "run_ser_sweep",
    "run_undertrained_sweep",
    "emit_csv",
    "write_csv",
    "read_csv",
    "snr_at_ser",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("snr_db", "detector", "decisions", "errors", "ser", "avg_undertrained", "wall_time_s")
LEARNED = ("naive", "dl", "idl", "idl-est")
CSI_DETECTORS = ("zf", "csi")

# role ids for per-trial random streams
_CHANNEL, _DATA, _NAIVE, _DL, _IDL = 0, 1, 2, 3, 100


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a sweep.

    ``train`` supplies ``N_tr``, the iDL dither step and the clamp; its
    ``num_subblocks`` is ignored in favour of ``subblocks`` (one iDL variant
    per entry). ``min_trials`` is a floor on channel realizations per grid
    point on top of the ``min_errors`` stopping rule.
    """

    system: SystemConfig = field(default_factory=lambda: SystemConfig(32, 4, 4))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(30, 1, 0.5))
    snr_grid_db: tuple = tuple(np.arange(-10.0, 30.0 + 1e-9, 2.5).tolist())
    detectors: tuple = ("naive", "dl", "idl", "zf", "csi")
    subblocks: tuple = (3,)
    dl_dither_var: float | None = None
    num_channel_realizations: int = 200
    min_trials: int = 0
    data_symbols_per_channel: int = 500
    min_errors: int = 100
    master_seed: int = 0
    snr_mode: str = "oracle"
    mlp_file: str | None = None
    ser_mode: str = "user"
    workers: int = 1

    def __post_init__(self):
        grid = tuple(float(v) for v in self.snr_grid_db)
        object.__setattr__(self, "snr_grid_db", grid)
        if not grid:
            raise ConfigurationError("SNR grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("SNR grid must be strictly increasing")
        object.__setattr__(self, "subblocks", tuple(int(n) for n in self.subblocks))
        for n in self.subblocks:
            if n < 1 or self.train.reps_per_symbol % n:
                raise ConfigurationError(
                    f"sub-block count {n} must divide N_tr={self.train.reps_per_symbol}"
                )
        object.__setattr__(self, "detectors", tuple(self.detectors))
        for det in self.detectors:
            if det not in LEARNED + CSI_DETECTORS:
                raise ConfigurationError(f"unknown detector {det!r}")
        if self.snr_mode not in ("oracle", "estimated"):
            raise ConfigurationError("snr_mode must be 'oracle' or 'estimated'")
        if self.ser_mode not in ("user", "vector"):
            raise ConfigurationError("ser_mode must be 'user' or 'vector'")
        if (self.snr_mode == "estimated" or "idl-est" in self.detectors) and not self.mlp_file:
            raise ConfigurationError("estimated SNR needs an MLP parameter file")
        for name in ("num_channel_realizations", "data_symbols_per_channel", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.min_errors < 0 or self.min_trials < 0:
            raise ConfigurationError("min_errors and min_trials must be nonnegative")
        if self.dl_dither_var is not None and self.dl_dither_var < 0:
            raise ConfigurationError("dl_dither_var must be nonnegative")

    @property
    def dl_variance(self):
        """Fixed DL dither variance; defaults to ``rho / 2``."""
        if self.dl_dither_var is not None:
            return self.dl_dither_var
        return self.system.transmit_power / 2.0

    @property
    def training_slots(self):
        return self.system.num_symbol_vectors * self.train.reps_per_symbol

    @property
    def coherence_slots(self):
        return self.training_slots + self.data_symbols_per_channel

    def idl_train(self, num_subblocks):
        return replace(self.train, num_subblocks=num_subblocks)


def expand_detectors(spec):
    out = []
    for det in spec.detectors:
        if det in ("idl", "idl-est"):
            out.extend(f"{det}-n{n}" for n in spec.subblocks)
        else:
            out.append(det)
    return out


def trial_rng(spec, snr_index, trial_index, role):
    seq = np.random.SeedSequence(spec.master_seed, spawn_key=(snr_index, trial_index, role))
    return np.random.default_rng(seq)


@dataclass
class TrialOutcome:
    """Per-detector decision/error counts and undertrained counts of one channel."""

    decisions: dict
    errors: dict
    undertrained: dict
    degenerate: dict
    channel_redraws: int = 0
    noise_power_estimate: float | None = None


def _draw_full_rank_channel(config, rng, max_attempts=100):
    for attempt in range(max_attempts):
        H = draw_rayleigh_channel(config, rng)
        if np.linalg.matrix_rank(H.complex_form) == config.num_users:
            return H, attempt
        log.warning("rank-deficient channel drawn; redrawing")
    raise DetectionError("could not draw a full-rank channel")


def _estimate_noise_power(mlp, record, config):
    length = int(mlp.meta.get("block_length", record.observations.shape[1] // record.num_subblocks))
    sub = record.observations.shape[1] // record.num_subblocks
    if length > sub:
        raise ConfigurationError(
            f"MLP expects blocks of {length} un-dithered samples; iDL sub-blocks hold {sub}"
        )
    freqs = np.count_nonzero(record.observations[:, :length] > 0, axis=1) / length
    snr_db = estimate_snr_db(mlp, freqs)
    return config.transmit_power / float(db_to_linear(snr_db))


def _learn_tables(spec, config, book, H, snr_index, trial_index, mlp=None, detectors=None,
                  need_raw=False):
    """Tables for every learned detector (``detectors`` limits which ones)."""
    wanted = set(detectors if detectors is not None else expand_detectors(spec))
    tables = {}
    est_n0 = None
    records = {}

    def idl_record(n):
        if n not in records:
            rng = trial_rng(spec, snr_index, trial_index, _IDL + n)
            records[n] = observe_training(book.vectors_real, H, config, spec.idl_train(n), rng)
        return records[n]

    estimated = spec.snr_mode == "estimated" or any(d.startswith("idl-est") for d in wanted)
    if estimated:
        est_n0 = _estimate_noise_power(mlp, idl_record(spec.subblocks[0]), config)
    learned_n0 = est_n0 if spec.snr_mode == "estimated" else config.noise_power

    if "naive" in wanted:
        rng = trial_rng(spec, snr_index, trial_index, _NAIVE)
        tables["naive"] = learn_naive(book, H, config, spec.train, rng)
    if "dl" in wanted:
        rng = trial_rng(spec, snr_index, trial_index, _DL)
        tables["dl"] = learn_dl(book, H, config, spec.train, spec.dl_variance, rng,
                                noise_power=learned_n0)
    for n in spec.subblocks:
        for det, n0 in ((f"idl-n{n}", learned_n0), (f"idl-est-n{n}", est_n0)):
            if det not in wanted:
                continue
            record = idl_record(n)
            train = spec.idl_train(n)
            p_plus, log_plus, log_minus = fit_dithered(record, n0, train.epsilon)
            tables[det] = LikelihoodTable(p_plus, record.raw_frequencies(), train, det,
                                          log_plus, log_minus)
    return tables, est_n0


def _count_errors(book, sent, detected, mode):
    if mode == "vector":
        return int(np.count_nonzero(sent != detected))
    return int(np.count_nonzero(book.indices[sent] != book.indices[detected]))


def run_trial(spec, snr_index, trial_index, book=None, mlp=None, noiseless=False):
    """One channel realization: learn, transmit ``N_d`` data vectors, detect.

    ``noiseless`` is a test hook that removes the data-phase noise.
    """
    config = spec.system.with_snr_db(spec.snr_grid_db[snr_index])
    if book is None:
        book = enumerate_symbol_book(config)
    if mlp is None and spec.mlp_file and (
        spec.snr_mode == "estimated" or "idl-est" in spec.detectors
    ):
        mlp = load_mlp(spec.mlp_file)
    H, redraws = _draw_full_rank_channel(config, trial_rng(spec, snr_index, trial_index, _CHANNEL))
    detectors = expand_detectors(spec)
    tables, est_n0 = _learn_tables(spec, config, book, H, snr_index, trial_index, mlp, detectors)

    data_rng = trial_rng(spec, snr_index, trial_index, _DATA)
    sent = data_rng.integers(0, book.count, spec.data_symbols_per_channel)
    r = synthesize_received(H, book.vectors_real[sent], config, rng=data_rng, noiseless=noiseless)
    Y = quantize(r)

    per_decision = config.num_users if spec.ser_mode == "user" else 1
    outcome = TrialOutcome({}, {}, {}, {}, redraws, est_n0)
    for det in detectors:
        if det == "csi":
            detected, scores = ml_detect_csi_batch(Y, H, book, config, csi_log_tables(H, book, config))
        elif det == "zf":
            detected, scores = zf_detect_batch(Y, H, book), None
        else:
            table = tables[det]
            detected, scores = ml_detect_learned_batch(Y, table)
            outcome.undertrained[det] = count_undertrained(table.raw_plus)
        outcome.decisions[det] = len(sent) * per_decision
        outcome.errors[det] = _count_errors(book, sent, detected, spec.ser_mode)
        outcome.degenerate[det] = 0 if scores is None else int(np.count_nonzero(np.isneginf(scores)))
    return outcome


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    detector: str
    decisions: int
    errors: int
    ser: float | None
    avg_undertrained: float | None
    wall_time_s: float


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    spec: ExperimentSpec | None = None

    def select(self, detector):
        return [row for row in self.rows if row.detector == detector]

    def curve(self, detector):
        rows = self.select(detector)
        return np.array([r.snr_db for r in rows]), np.array([r.ser for r in rows], dtype=float)


def _run_trials(spec, snr_index, indices, book, mlp):
    if spec.workers == 1:
        return [run_trial(spec, snr_index, t, book, mlp) for t in indices]
    with ProcessPoolExecutor(spec.workers) as pool:
        futures = [pool.submit(run_trial, spec, snr_index, t) for t in indices]
        return [f.result() for f in futures]


def run_ser_sweep(spec, progress=None):
    """SER per (grid SNR, detector).

    Per grid point, trials run in index order. A detector's row aggregates
    trials ``0..j`` where ``j`` is the first trial at which its cumulative
    errors reach ``min_errors`` (and at least ``min_trials`` trials have been
    included), or all ``num_channel_realizations`` trials. Batches of
    ``workers`` trials run concurrently; surplus trials are discarded, so the
    result does not depend on ``workers``.
    """
    detectors = expand_detectors(spec)
    book = enumerate_symbol_book(spec.system)
    mlp = load_mlp(spec.mlp_file) if spec.mlp_file and (
        spec.snr_mode == "estimated" or "idl-est" in spec.detectors) else None
    result = SweepResult([], spec)
    for snr_index, snr_db in enumerate(spec.snr_grid_db):
        start = time.perf_counter()
        totals = {d: [0, 0, 0.0, 0] for d in detectors}  # decisions, errors, undertrained sum, trials
        done = set()
        trial = 0
        while len(done) < len(detectors) and trial < spec.num_channel_realizations:
            batch = range(trial, min(trial + spec.workers, spec.num_channel_realizations))
            for t, outcome in zip(batch, _run_trials(spec, snr_index, batch, book, mlp)):
                for det in detectors:
                    if det in done:
                        continue
                    acc = totals[det]
                    acc[0] += outcome.decisions[det]
                    acc[1] += outcome.errors[det]
                    acc[2] += outcome.undertrained.get(det, 0.0)
                    acc[3] += 1
                    if acc[1] >= spec.min_errors and acc[3] >= spec.min_trials:
                        done.add(det)
            trial = batch.stop
        elapsed = time.perf_counter() - start
        for det in detectors:
            decisions, errors, under, trials = totals[det]
            result.rows.append(SweepRow(
                snr_db, det, decisions, errors, errors / decisions,
                under / trials if det not in CSI_DETECTORS else None, elapsed,
            ))
        if progress:
            progress(snr_db, result.rows[-len(detectors):])
    return result


def run_undertrained_sweep(spec, progress=None):
    """Average undertrained count per (grid SNR, learning method) over all channel realizations.

    Rows carry ``decisions`` = number of channels averaged and no SER.
    """
    methods = [d for d in expand_detectors(spec) if d not in CSI_DETECTORS]
    if not methods:
        raise ConfigurationError("undertrained sweep needs at least one learned method")
    book = enumerate_symbol_book(spec.system)
    mlp = load_mlp(spec.mlp_file) if spec.mlp_file and (
        spec.snr_mode == "estimated" or "idl-est" in spec.detectors) else None
    result = SweepResult([], spec)
    for snr_index, snr_db in enumerate(spec.snr_grid_db):
        start = time.perf_counter()
        config = spec.system.with_snr_db(snr_db)
        sums = dict.fromkeys(methods, 0.0)
        for trial in range(spec.num_channel_realizations):
            H, _ = _draw_full_rank_channel(config, trial_rng(spec, snr_index, trial, _CHANNEL))
            tables, _ = _learn_tables(spec, config, book, H, snr_index, trial, mlp, methods)
            for m in methods:
                sums[m] += count_undertrained(tables[m].raw_plus)
        elapsed = time.perf_counter() - start
        n = spec.num_channel_realizations
        for m in methods:
            result.rows.append(SweepRow(snr_db, m, n, 0, None, sums[m] / n, elapsed))
        if progress:
            progress(snr_db, result.rows[-len(methods):])
    return result


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(result, fh):
    """Header plus one line per row in :data:`CSV_COLUMNS` order; absent values are empty."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in result.rows:
        writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])


def emit_csv(result, path):
    with open(path, "w", newline="") as fh:
        write_csv(result, fh)


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            rows.append(SweepRow(
                float(rec["snr_db"]), rec["detector"], int(rec["decisions"]), int(rec["errors"]),
                float(rec["ser"]) if rec["ser"] else None,
                float(rec["avg_undertrained"]) if rec["avg_undertrained"] else None,
                float(rec["wall_time_s"]),
            ))
    return SweepResult(rows)


def snr_at_ser(snr_db, ser, target):
    """SNR where the curve first falls to ``target``, interpolating log10(SER) linearly.

    Returns ``nan`` if the curve never crosses ``target`` from above.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    with np.errstate(divide="ignore"):
        log_ser = np.log10(np.asarray(ser, dtype=float))
    log_target = math.log10(target)
    for i in range(len(snr_db) - 1):
        a, b = log_ser[i], log_ser[i + 1]
        if a >= log_target > b or (a > log_target >= b):
            if not np.isfinite(b):
                return float(snr_db[i + 1])
            frac = (a - log_target) / (a - b)
            return float(snr_db[i] + frac * (snr_db[i + 1] - snr_db[i]))
    if len(log_ser) and log_ser[0] <= log_target:
        return float(snr_db[0])
    return float("nan")
