"""Soft-output finite-alphabet spatial equalization for the massive
MU-MIMO uplink, with a coded OFDM link-level simulator."""

from .channel import (
    ChannelRealization,
    GeometricChannelParams,
    LinkNoise,
    apply_power_control,
    geometric,
    load_realization,
    rayleigh_iid,
    save_realization,
    transmit,
)
from .equalize import (
    FbsSchedule,
    FiniteAlphabetEqualizer,
    FiniteAlphabetRow,
    LmmseEqualizer,
    beta_of,
    default_fbs_schedule,
    equalize_biased,
    equalize_unbiased,
    fame_bruteforce,
    fame_fbs,
    fame_objective,
    flmmse,
    lmmse,
    load_equalizer,
    npi_variance,
    quantize_row,
    save_equalizer,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    DegenerateDirection,
    FameqError,
    InvalidBias,
    LengthMismatch,
    NonpositiveVariance,
    NotPositiveDefinite,
    ZeroVector,
)
from .fec import CodecSpec, Frame, coded_length, default_codec, encode, viterbi_soft, viterbi_soft_many
from .modem import Constellation, hard_demap, make_constellation, make_qam16, make_qpsk, map_bits, soft_demap
from .numerics import gram, hpd_solve, spectral_norm_sq_estimate
from .simkit import (
    BerReport,
    EqualizerSpec,
    FrameOutcome,
    SimConfig,
    config_from_dict,
    config_to_dict,
    run_frame,
    snr_to_no,
    sweep,
)

__version__ = "0.1.0"
