"""Physical-layer model: constellations, symbol books, channels, one-bit ADCs.

Everything here works in the real-valued expansion used throughout the
package: a complex vector ``a`` becomes ``[Re a; Im a]`` and a complex matrix
``A`` becomes ``[[Re A, -Im A], [Im A, Re A]]`` so that products commute with
the expansion.

Conventions fixed here and relied on elsewhere:

* Constellation points are ordered row-major over the I/Q grid with the most
  negative level first (I is the slow index, Q the fast one).
* Symbol-book row ``k`` is the ``k``-th lexicographic combination of per-user
  constellation indices, user 0 being the most significant digit. Indices
  are 0-based.
* ``Q(0) = +1``.
"""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from .exceptions import ConfigurationError, ContractError, SizeError
from .gaussian import std_normal_cdf, std_normal_logcdf, std_normal_quantile

__all__ = [
    "SUPPORTED_ORDERS",
    "DEFAULT_BOOK_CAP",
    "SystemConfig",
    "Constellation",
    "SymbolBook",
    "ChannelMatrix",
    "QuantizedObservation",
    "build_constellation",
    "enumerate_symbol_book",
    "real_expand_vector",
    "real_expand_matrix",
    "draw_rayleigh_channel",
    "synthesize_received",
    "quantize",
    "one_bit_quantize",
    "effective_channel",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_logcdf",
    "db_to_linear",
    "linear_to_db",
]

SUPPORTED_ORDERS = (4, 16, 64)
DEFAULT_BOOK_CAP = 2**20


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    return 10.0 * np.log10(np.asarray(value, dtype=float))


@dataclass(frozen=True)
class SystemConfig:
    """Uplink system parameters. Powers are linear; ``snr = rho / N0``."""

    num_rx_antennas: int
    num_users: int
    modulation_order: int = 4
    transmit_power: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        if int(self.num_rx_antennas) != self.num_rx_antennas or self.num_rx_antennas < 1:
            raise ConfigurationError("num_rx_antennas must be a positive integer")
        if int(self.num_users) != self.num_users or self.num_users < 1:
            raise ConfigurationError("num_users must be a positive integer")
        if self.num_rx_antennas < self.num_users:
            raise ConfigurationError("need num_rx_antennas >= num_users")
        if self.modulation_order not in SUPPORTED_ORDERS:
            raise ConfigurationError(
                f"modulation order {self.modulation_order} not in {SUPPORTED_ORDERS}"
            )
        for name in ("transmit_power", "noise_power"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive and finite")

    @classmethod
    def from_snr_db(cls, num_rx_antennas, num_users, modulation_order=4, snr_db=10.0,
                    transmit_power=1.0):
        """Build a config with ``rho`` fixed and ``N0`` chosen to realise ``snr_db``."""
        noise_power = transmit_power / float(db_to_linear(snr_db))
        return cls(num_rx_antennas, num_users, modulation_order, transmit_power, noise_power)

    def with_snr_db(self, snr_db):
        return SystemConfig.from_snr_db(
            self.num_rx_antennas, self.num_users, self.modulation_order, snr_db,
            self.transmit_power,
        )

    @property
    def snr(self):
        return self.transmit_power / self.noise_power

    @property
    def snr_db(self):
        return float(linear_to_db(self.snr))

    @property
    def num_symbol_vectors(self):
        return self.modulation_order**self.num_users


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray

    @property
    def order(self):
        return len(self.points)

    @property
    def energy(self):
        """Average symbol energy (1 for every constellation built here)."""
        return float(np.mean(np.abs(self.points) ** 2))

    def nearest_index(self, x):
        """Index of the closest point (Euclidean) for each entry of ``x``."""
        x = np.asarray(x)
        return np.abs(x[..., None] - self.points).argmin(axis=-1)


def build_constellation(order):
    """Square M-QAM with zero mean and unit average energy."""
    if order not in SUPPORTED_ORDERS:
        raise ConfigurationError(f"unsupported modulation order {order}; use one of {SUPPORTED_ORDERS}")
    side = math.isqrt(order)
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    grid = levels[:, None] + 1j * levels[None, :]
    points = grid.reshape(-1)
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    points.setflags(write=False)
    return Constellation(points)


@dataclass(frozen=True)
class SymbolBook:
    """All ``K = M**Nu`` candidate symbol vectors.

    ``indices[k]`` holds the per-user constellation indices of row ``k``.
    """

    config: SystemConfig
    constellation: Constellation
    indices: np.ndarray
    vectors_complex: np.ndarray
    vectors_real: np.ndarray

    @property
    def count(self):
        return self.indices.shape[0]

    def __len__(self):
        return self.count

    def index_of(self, user_indices):
        """Row number of a tuple of per-user constellation indices."""
        user_indices = np.asarray(user_indices)
        weights = self.config.modulation_order ** np.arange(self.config.num_users - 1, -1, -1)
        return user_indices @ weights


def enumerate_symbol_book(config, cap=DEFAULT_BOOK_CAP):
    count = config.num_symbol_vectors
    if count > cap:
        raise SizeError(f"K = {count} exceeds the symbol-book cap {cap}")
    constellation = build_constellation(config.modulation_order)
    indices = np.array(
        list(itertools.product(range(config.modulation_order), repeat=config.num_users)),
        dtype=np.int64,
    ).reshape(count, config.num_users)
    vectors_complex = constellation.points[indices]
    vectors_real = real_expand_vector(vectors_complex)
    for arr in (indices, vectors_complex, vectors_real):
        arr.setflags(write=False)
    return SymbolBook(config, constellation, indices, vectors_complex, vectors_real)


def real_expand_vector(a):
    """``[Re a; Im a]`` along the last axis (so batches of vectors work too)."""
    a = np.asarray(a)
    return np.concatenate([a.real, a.imag], axis=-1).astype(float)


def real_expand_matrix(a):
    """``[[Re A, -Im A], [Im A, Re A]]``."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise ContractError("real_expand_matrix expects a 2-D array")
    re, im = a.real.astype(float), a.imag.astype(float)
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class ChannelMatrix:
    complex_form: np.ndarray
    real_form: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.real_form is None:
            object.__setattr__(self, "real_form", real_expand_matrix(self.complex_form))

    @property
    def shape(self):
        return self.complex_form.shape


def draw_rayleigh_channel(config, rng):
    """i.i.d. CN(0, 1) entries: real and imaginary parts each have variance 1/2."""
    shape = (config.num_rx_antennas, config.num_users)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelMatrix(h)


def synthesize_received(H, s_real, config, dither_vars=None, rng=None, noiseless=False):
    """Real-valued receive vector ``sqrt(rho) H s + z + d``.

    ``s_real`` may carry leading batch axes (``(..., 2Nu)``); the output then
    has shape ``(..., 2Nr)``. ``z`` has per-component variance ``N0/2``; ``d``
    is real Gaussian with per-component variance ``dither_vars`` (broadcast
    against the output). Draw order: all of ``z``, then all of ``d``.
    ``noiseless=True`` suppresses both and needs no ``rng``.
    """
    s_real = np.asarray(s_real, dtype=float)
    two_nr, two_nu = H.real_form.shape
    if two_nu != 2 * config.num_users or two_nr != 2 * config.num_rx_antennas:
        raise ContractError("channel dimensions disagree with config")
    if s_real.shape[-1:] != (two_nu,):
        raise ContractError(f"symbol vector length must be {two_nu}, got {s_real.shape[-1:]}")
    clean = np.sqrt(config.transmit_power) * (s_real @ H.real_form.T)
    if dither_vars is not None:
        dither_vars = np.asarray(dither_vars, dtype=float)
        try:
            fits = np.broadcast_shapes(dither_vars.shape, clean.shape) == clean.shape
        except ValueError:
            fits = False
        if not fits:
            raise ContractError(f"dither variances {dither_vars.shape} do not fit output {clean.shape}")
        if np.any(dither_vars < 0) or not np.all(np.isfinite(dither_vars)):
            raise ContractError("dither variances must be finite and nonnegative")
    if noiseless:
        return clean
    if rng is None:
        raise ContractError("rng required unless noiseless=True")
    r = clean + np.sqrt(config.noise_power / 2.0) * rng.standard_normal(clean.shape)
    if dither_vars is not None:
        r = r + np.sqrt(dither_vars) * rng.standard_normal(clean.shape)
    return r


@dataclass(frozen=True)
class QuantizedObservation:
    values: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        if not np.all(np.abs(self.values) == 1):
            raise ContractError("quantized values must be exactly +1 or -1")

    def __len__(self):
        return len(self.values)


def quantize(r):
    """Elementwise one-bit ADC on an array of any shape; int8 output, Q(0)=+1."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ContractError("one-bit quantizer received non-finite input")
    return np.where(r >= 0.0, 1, -1).astype(np.int8)


def one_bit_quantize(r, time_index=0):
    return QuantizedObservation(quantize(r), time_index)


def effective_channel(H, book, config):
    """``psi[k, i] = sqrt(2 rho / N0) h_i^T s_k``, shape ``(K, 2Nr)``."""
    scale = np.sqrt(2.0 * config.transmit_power / config.noise_power)
    return scale * (book.vectors_real @ H.real_form.T)
