"""Entanglement-based dispersive-optics QKD: simulation and key extraction.

The package covers the full desk-scale pipeline: stochastic generation of
time-tagged detection streams, coincidence analytics, three-level bin
sifting, covariance-matrix security analysis, LDPC syndrome reconciliation,
and Toeplitz-hash privacy amplification.
"""

from .errors import (CalibrationError, ConfigError, DoqkdError, EstimationError,
                     NoPeakError, ProtocolAbort, ReconciliationError, StageError)
from .io import read_csv, read_ttag, write_csv, write_ttag
from .ldpc import LdpcCode, SUPPORTED_RATES, decode_syndrome, make_code, syndrome
from .postproc import (ReconciliationOutcome, efficiency, gray_decode_bits,
                       gray_encode_symbols, privacy_amplify, reconcile,
                       reconcile_key, secret_length, select_rate,
                       verification_hash)
from .security import (Baseline, FourBasisHistograms, SecurityReport, Tfcm,
                       estimate_tfcm, excess_noise, gaussian_entropy_g,
                       holevo_bound, histogram_moments, mutual_information,
                       secret_fraction, shannon_info)
from .session import (OptimizeEntry, SessionReport, SweepRow, SweepTable,
                      compute_baseline, optimize, run_experiment, sweep)
from .sifting import (FrameFormat, Message, MessageType, SiftResult, TimeAddress,
                      Transcript, assign_address, pack_symbols, qber,
                      run_sifting, single_event_frames, split_security_fraction,
                      unpack_symbols)
from .simulate import (CalibrationTargets, ChannelModel, DetectorModel,
                       DispersiveBasis, SessionTags, SimConfig, SourceModel,
                       calibrate, dispersive_shift, paper_default_config,
                       simulate_session)
from .timetags import (Basis, Channel, CoincidenceHistogram, EffectiveRates,
                       Party, TagStream, TimeTag, coincidence_histogram,
                       effective_rates, find_coincidences, fwhm, merge_sorted)

__version__ = "0.1.0"
