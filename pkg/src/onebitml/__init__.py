"""Learning-based one-bit ML detection for uplink massive MIMO."""

from .core import (
    ChannelMatrix,
    Constellation,
    QuantizedObservation,
    SymbolBook,
    SystemConfig,
    build_constellation,
    draw_rayleigh_channel,
    enumerate_symbol_book,
    one_bit_quantize,
    real_expand_matrix,
    real_expand_vector,
    synthesize_received,
)
from .exceptions import (
    ConfigurationError,
    ContractError,
    DetectionError,
    SizeError,
    TrainingError,
)

__version__ = "0.1.0"
