"""End-to-end session orchestration, parameter sweeps, and format optimization.

The pipeline: simulate -> clock-align -> security/key split -> four-basis
histograms from the security subset -> covariance analysis against a
back-to-back baseline run -> bin sifting of the key subset -> empirical
information -> syndrome reconciliation -> privacy amplification. Everything
derives from the session seed, so identical configurations produce
byte-identical keys and (timing aside) byte-identical reports.
"""
from __future__ import annotations

import hashlib
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import DoqkdError, StageError
from .io import canonical_json
from .postproc import (ReconciliationOutcome, gray_encode_symbols,
                       privacy_amplify, reconcile_key, secret_length)
from .security import (Baseline, FourBasisHistograms, SecurityReport, Tfcm,
                       estimate_tfcm, excess_noise, gaussian_time_information,
                       holevo_bound, mutual_information, secret_fraction,
                       shannon_info)
from .sifting import (FrameFormat, pack_symbols, qber, run_sifting,
                      security_mask, split_security_fraction)
from .simulate import SessionTags, SimConfig, simulate_session
from .timetags import (Channel, TagStream, coincidence_histogram,
                       effective_rates)

SPLIT_SEED_SALT = 0x53504C49
PA_SEED_SALT = 0x50414D50
CODE_SEED = 1          # the parity-check structure is public and shared
NOMINAL_BETA = 0.9     # used when a session is too short to reconcile


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def session_format(config: SimConfig) -> FrameFormat:
    return FrameFormat(config.format_n_bits, config.format_bins_per_slot,
                       config.format_bin_width_ps)


def align_bob(tags: SessionTags, delay_ps: int) -> SessionTags:
    """Remove the known propagation delay from Bob's streams."""
    if delay_ps == 0:
        return tags
    def unshift(s: TagStream) -> TagStream:
        shifted = s.shifted(-delay_ps)
        return shifted.select(shifted.times >= 0)
    return SessionTags(tags.t1, tags.f1, unshift(tags.t2), unshift(tags.f2))


def four_basis_histograms(t1: TagStream, f1: TagStream, t2: TagStream,
                          f2: TagStream, bin_ps: int, range_ps: int,
                          acquisition_s: float) -> FourBasisHistograms:
    rng = (-range_ps, range_ps)
    return FourBasisHistograms(
        tt=coincidence_histogram(t1, t2, bin_ps, rng, acquisition_s),
        tf=coincidence_histogram(t1, f2, bin_ps, rng, acquisition_s),
        ft=coincidence_histogram(f1, t2, bin_ps, rng, acquisition_s),
        ff=coincidence_histogram(f1, f2, bin_ps, rng, acquisition_s),
    )


def _histogram_summaries(hists: FourBasisHistograms) -> dict:
    out = {}
    for name in ("tt", "tf", "ft", "ff"):
        h = getattr(hists, name)
        try:
            er = effective_rates(h)
            out[name] = {
                "fwhm_ps": er.fwhm_ps,
                "effective_rate_hz": er.effective_coincidence_rate_hz,
                "effective_car": (er.effective_car if math.isfinite(er.effective_car)
                                  else None),
                "peak_offset_ps": er.peak_bin_offset,
            }
        except DoqkdError as e:
            out[name] = {"error": str(e)}
    return out


def analyze_security(tags: SessionTags, config: SimConfig,
                     fmt: FrameFormat | None = None) -> tuple[FourBasisHistograms, Tfcm]:
    """Security-subset four-basis histograms and the covariance estimate."""
    fmt = fmt or session_format(config)
    split_seed = config.seed ^ SPLIT_SEED_SALT
    sec_t1, _ = split_security_fraction(tags.t1, config.security_fraction,
                                        split_seed, fmt)
    sec_t2, _ = split_security_fraction(tags.t2, config.security_fraction,
                                        split_seed, fmt)
    hists = four_basis_histograms(sec_t1, tags.f1, sec_t2, tags.f2,
                                  config.hist_bin_ps, config.hist_range_ps,
                                  config.duration_s)
    tfcm = estimate_tfcm(hists, config.basis.beta_d_ps_per_rad_s)
    return hists, tfcm


def compute_baseline(config: SimConfig) -> Baseline:
    """Run the back-to-back reference session and estimate its covariances."""
    bcfg = config.baseline_config()
    tags = align_bob(simulate_session(bcfg), bcfg.channel.propagation_delay_ps)
    _, tfcm = analyze_security(tags, bcfg)
    return Baseline(tfcm)


@dataclass
class SessionReport:
    """Machine-readable record of one end-to-end session."""

    config: dict
    singles_rates_hz: dict
    histograms: dict
    kept_frames: int
    discarded_bin_mismatch: int
    discarded_multi_event: int
    raw_rate_bps: float
    qber_symbol: float | None
    qber_bit: float | None
    security: SecurityReport
    reconciliation: ReconciliationOutcome
    secret_key_bits: int
    secret_rate_bps: float
    wall_clock_s: float
    secret_key: bytes = b""
    raw_key_a: bytes = b""          # packed sifted symbols, sender side
    raw_key_b: bytes = b""
    reconciled_key: bytes = b""     # packed corrected bitstream

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config,
            "singles_rates_hz": self.singles_rates_hz,
            "histograms": self.histograms,
            "sift": {
                "kept_frames": self.kept_frames,
                "discarded_bin_mismatch": self.discarded_bin_mismatch,
                "discarded_multi_event": self.discarded_multi_event,
                "raw_rate_bps": self.raw_rate_bps,
                "qber_symbol": self.qber_symbol,
                "qber_bit": self.qber_bit,
            },
            "security": self.security.to_dict(),
            "reconciliation": self.reconciliation.to_dict(),
            "secret_key_bits": self.secret_key_bits,
            "secret_rate_bps": self.secret_rate_bps,
            "secret_key_sha256": hashlib.sha256(self.secret_key).hexdigest(),
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization (volatile timing excluded)."""
        return canonical_json(self.to_dict(include_timing=False)).encode()


def run_experiment(config: SimConfig, baseline: Baseline | None = None) -> SessionReport:
    """Simulate and post-process one full session."""
    t_start = time.monotonic()
    fmt = session_format(config)

    with _stage("simulate"):
        tags = align_bob(simulate_session(config), config.channel.propagation_delay_ps)
        singles = tags.singles_rates_hz()

    with _stage("security"):
        hists, tfcm = analyze_security(tags, config, fmt)
        if baseline is None:
            baseline = compute_baseline(config)
        xi_t = excess_noise(tfcm.sigma_t_sq, baseline.sigma_t0_sq)
        xi_w = excess_noise(tfcm.sigma_w_sq, baseline.sigma_w0_sq)
        chi = holevo_bound(tfcm, baseline)
        i_gauss = gaussian_time_information(tfcm, baseline)

    with _stage("sift"):
        split_seed = config.seed ^ SPLIT_SEED_SALT
        _, key_t1 = split_security_fraction(tags.t1, config.security_fraction,
                                            split_seed, fmt)
        _, key_t2 = split_security_fraction(tags.t2, config.security_fraction,
                                            split_seed, fmt)
        sift = run_sifting(key_t1, key_t2, fmt)
        raw_rate = fmt.n_bits * sift.kept_frames / config.duration_s
        if sift.kept_frames:
            qber_sym = qber(sift.key_a, sift.key_b)
            a_bits = gray_encode_symbols(sift.key_a, fmt.n_bits)
            b_bits = gray_encode_symbols(sift.key_b, fmt.n_bits)
            qber_bit = float(np.count_nonzero(a_bits != b_bits) / a_bits.size)
        else:
            qber_sym = qber_bit = None
            a_bits = b_bits = np.empty(0, np.uint8)

    with _stage("information"):
        i_ab = shannon_info(sift) if sift.kept_frames >= 1000 else (
            mutual_information(sift.key_a, sift.key_b, fmt.slots_per_frame)
            if sift.kept_frames else 0.0)

    with _stage("reconcile"):
        outcome = reconcile_key(a_bits, b_bits, block_length=config.block_length,
                                max_iters=config.max_iterations,
                                min_overhead=config.min_overhead,
                                code_seed=CODE_SEED)
        beta = outcome.efficiency_beta if outcome.n_blocks else NOMINAL_BETA

    with _stage("amplify"):
        delta_i, no_key = secret_fraction(i_ab, chi, beta)
        coinc_in_blocks = outcome.n_blocks * config.block_length // fmt.n_bits
        sec_bits = secret_length(coinc_in_blocks, delta_i, outcome)
        reconciled = outcome.corrected_bits()
        sec_bits = min(sec_bits, reconciled.size)
        if no_key or sec_bits == 0:
            key_bytes = b""
            sec_bits = 0
        else:
            key_bits = privacy_amplify(reconciled, sec_bits,
                                       config.seed ^ PA_SEED_SALT)
            key_bytes = np.packbits(key_bits).tobytes()

    security = SecurityReport(xi_t, xi_w, i_ab, chi, beta,
                              delta_i if not no_key else 0.0, no_key,
                              i_ab_gaussian_bpc=i_gauss)
    return SessionReport(
        config=config.to_dict(),
        singles_rates_hz=singles,
        histograms=_histogram_summaries(hists),
        kept_frames=sift.kept_frames,
        discarded_bin_mismatch=sift.discarded_bin_mismatch,
        discarded_multi_event=sift.discarded_multi_event,
        raw_rate_bps=raw_rate,
        qber_symbol=qber_sym,
        qber_bit=qber_bit,
        security=security,
        reconciliation=outcome,
        secret_key_bits=sec_bits,
        secret_rate_bps=sec_bits / config.duration_s,
        wall_clock_s=time.monotonic() - t_start,
        secret_key=key_bytes,
        raw_key_a=pack_symbols(sift.key_a, fmt.n_bits),
        raw_key_b=pack_symbols(sift.key_b, fmt.n_bits),
        reconciled_key=np.packbits(reconciled).tobytes() if reconciled.size else b"",
    )


# ---------------------------------------------------------------------------
# sweeps and optimization

DEFAULT_TAU_GRID = tuple(range(40, 401, 20))
DEFAULT_I_GRID = (3, 4, 5)
DEFAULT_N_GRID = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class SweepRow:
    n_bits: int
    bins_per_slot: int
    tau_ps: int
    raw_rate_bps: float
    qber: float | None
    delta_i_bpc: float | None
    secret_rate_bps: float | None
    status: str = "ok"

    def to_dict(self) -> dict:
        return {"n_bits": self.n_bits, "bins_per_slot": self.bins_per_slot,
                "tau_ps": self.tau_ps, "raw_rate_bps": self.raw_rate_bps,
                "qber": self.qber, "delta_i_bpc": self.delta_i_bpc,
                "secret_rate_bps": self.secret_rate_bps, "status": self.status}


@dataclass
class SweepTable:
    rows: list[SweepRow] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def select(self, n_bits: int | None = None, bins_per_slot: int | None = None
               ) -> list[SweepRow]:
        out = self.rows
        if n_bits is not None:
            out = [r for r in out if r.n_bits == n_bits]
        if bins_per_slot is not None:
            out = [r for r in out if r.bins_per_slot == bins_per_slot]
        return out

    def to_csv(self) -> str:
        lines = ["# n_bits,bins_per_slot,tau_ps,raw_rate_bps,qber,delta_i_bpc,"
                 "secret_rate_bps,status"]
        for r in self.rows:
            q = "" if r.qber is None else f"{r.qber:.6f}"
            di = "" if r.delta_i_bpc is None else f"{r.delta_i_bpc:.6f}"
            sr = "" if r.secret_rate_bps is None else f"{r.secret_rate_bps:.3f}"
            lines.append(f"{r.n_bits},{r.bins_per_slot},{r.tau_ps},"
                         f"{r.raw_rate_bps:.3f},{q},{di},{sr},{r.status}")
        return "\n".join(lines) + "\n"


def sweep(config: SimConfig,
          tau_list: tuple[int, ...] = DEFAULT_TAU_GRID,
          i_list: tuple[int, ...] = DEFAULT_I_GRID,
          n_list: tuple[int, ...] = DEFAULT_N_GRID,
          tags: SessionTags | None = None,
          nominal_beta: float = NOMINAL_BETA) -> SweepTable:
    """Re-sift one simulated dataset over the whole format grid.

    Tags are generated once per seed and re-split/re-sifted per grid point,
    so curves isolate format effects from Monte-Carlo noise. The secret-rate
    column combines per-point empirical information with the session-level
    eavesdropper bound at a nominal reconciliation efficiency; it is a
    planning figure, not a per-point reconciliation run.
    """
    if not tau_list or not i_list or not n_list:
        raise ValueError("sweep grids must be non-empty")
    if tags is None:
        tags = align_bob(simulate_session(config), config.channel.propagation_delay_ps)
    try:
        _, tfcm = analyze_security(tags, config)
        baseline = compute_baseline(config)
        chi = holevo_bound(tfcm, baseline)
    except DoqkdError:
        chi = None

    split_seed = config.seed ^ SPLIT_SEED_SALT
    # times-only stream skeletons: re-splitting per grid point must not copy
    # truth annotations around
    t1_times, t2_times = tags.t1.times, tags.t2.times
    dur_ps = tags.t1.duration_ps
    rows = []
    for n in n_list:
        for i_bins in i_list:
            for tau in tau_list:
                fmt = FrameFormat(n, i_bins, tau)
                try:
                    m1 = security_mask(t1_times, config.security_fraction,
                                       split_seed, fmt)
                    m2 = security_mask(t2_times, config.security_fraction,
                                       split_seed, fmt)
                    key_t1 = TagStream(t1_times[~m1], Channel.T1, dur_ps)
                    key_t2 = TagStream(t2_times[~m2], Channel.T2, dur_ps)
                    res = run_sifting(key_t1, key_t2, fmt)
                    raw = n * res.kept_frames / config.duration_s
                    if res.kept_frames == 0:
                        rows.append(SweepRow(n, i_bins, tau, 0.0, None, None, None,
                                             "aborted:no-kept-frames"))
                        continue
                    q = qber(res.key_a, res.key_b)
                    if chi is not None and res.kept_frames >= 1000:
                        i_ab = mutual_information(res.key_a, res.key_b,
                                                  fmt.slots_per_frame)
                        di, no_key = secret_fraction(i_ab, chi, nominal_beta)
                        sr = (res.kept_frames / config.duration_s) * di
                    else:
                        di = sr = None
                    rows.append(SweepRow(n, i_bins, tau, raw, q, di, sr))
                except DoqkdError as e:
                    rows.append(SweepRow(n, i_bins, tau, 0.0, None, None, None,
                                         f"aborted:{e}"))
    return SweepTable(rows)


@dataclass(frozen=True)
class OptimizeEntry:
    n_bits: int
    feasible: bool
    tau_ps: int | None = None
    bins_per_slot: int | None = None
    raw_rate_bps: float | None = None
    qber: float | None = None

    def to_dict(self) -> dict:
        return {"n_bits": self.n_bits, "feasible": self.feasible,
                "tau_ps": self.tau_ps, "bins_per_slot": self.bins_per_slot,
                "raw_rate_bps": self.raw_rate_bps, "qber": self.qber}


def optimize(config: SimConfig, qber_cap: float = 0.05,
             n_list: tuple[int, ...] = DEFAULT_N_GRID,
             tau_list: tuple[int, ...] = DEFAULT_TAU_GRID,
             i_list: tuple[int, ...] = DEFAULT_I_GRID,
             table: SweepTable | None = None,
             tags: SessionTags | None = None) -> list[OptimizeEntry]:
    """Per dimension, maximize raw rate subject to a QBER cap.

    Ties break deterministically toward smaller bin width, then fewer bins
    per slot. Dimensions without a feasible grid point are marked as such.
    """
    if not 0.0 < qber_cap < 0.5:
        raise ValueError("qber_cap must be in (0, 0.5)")
    if table is None:
        table = sweep(config, tau_list, i_list, n_list, tags=tags)
    out = []
    for n in n_list:
        rows = [r for r in table.select(n_bits=n)
                if r.status == "ok" and r.qber is not None and r.qber <= qber_cap]
        if not rows:
            out.append(OptimizeEntry(n, False))
            continue
        best = sorted(rows, key=lambda r: (-r.raw_rate_bps, r.tau_ps,
                                           r.bins_per_slot))[0]
        out.append(OptimizeEntry(n, True, best.tau_ps, best.bins_per_slot,
                                 best.raw_rate_bps, best.qber))
    return out
