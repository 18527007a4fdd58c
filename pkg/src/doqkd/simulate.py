"""Stochastic generator of entangled-pair detection streams.

Models a CW-pumped photon-pair source with anti-correlated spectral
detunings, lossy fiber arms, a 50:50 basis coupler per party, signed
dispersive elements forming the frequency bases, detector jitter/efficiency/
dark counts, and an optional eavesdropper hook that adds Gaussian time and
frequency noise on the receiver arm.

The session is generated in fixed canonical time chunks with per-chunk
derived seeds, so output is reproducible and independent of how the work is
batched. All randomness flows from the single 64-bit session seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ConfigError
from .io import read_json, write_json
from .timetags import (PS_PER_SECOND, Basis, Channel, Party, TagStream,
                       coincidence_histogram, fwhm)

SPEED_OF_LIGHT_NM_S = 2.99792458e17
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
CHUNK_PS = 250_000_000_000  # canonical generation chunk: 0.25 s

CHANNELS = (Channel.T1, Channel.F1, Channel.T2, Channel.F2)


def beta_from_dispersion(dispersion_ps_per_nm: float, wavelength_nm: float = 1550.0) -> float:
    """Group-delay coefficient in ps per rad/s for a dispersive element."""
    return dispersion_ps_per_nm * wavelength_nm**2 / (2.0 * math.pi * SPEED_OF_LIGHT_NM_S)


@dataclass(frozen=True)
class SourceModel:
    """Pair source: emission rate and joint spectral/temporal spreads.

    Detunings are anti-correlated (idler = -signal) up to an optional
    correlation-breaking spread modeling finite pump linewidth.
    """

    pair_rate_hz: float
    spectral_sigma_rad_s: float
    correlation_time_sigma_ps: float = 0.0
    correlation_break_sigma_rad_s: float = 0.0

    def __post_init__(self):
        if self.pair_rate_hz <= 0:
            raise ConfigError("pair_rate_hz must be > 0")
        if self.spectral_sigma_rad_s < 0 or self.correlation_time_sigma_ps < 0:
            raise ConfigError("spectral/temporal spreads must be >= 0")


@dataclass(frozen=True)
class ChannelModel:
    """Fiber arms and the receiver-side noise injection hook."""

    alice_transmission: float = 1.0
    bob_transmission: float = 1.0
    residual_dispersion_ps_per_nm: float = 0.0
    propagation_delay_ps: int = 0
    eve_time_sigma_ps: float = 0.0
    eve_freq_sigma_rad_s: float = 0.0

    def __post_init__(self):
        for p in (self.alice_transmission, self.bob_transmission):
            if not 0.0 < p <= 1.0:
                raise ConfigError("arm transmission must be in (0, 1]")


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float
    jitter_sigma_ps: float
    dark_rate_hz: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("efficiency must be in [0, 1]")
        if self.jitter_sigma_ps < 0 or self.dark_rate_hz < 0:
            raise ConfigError("jitter and dark rate must be >= 0")


@dataclass(frozen=True)
class DispersiveBasis:
    """Signed dispersive elements forming the frequency bases.

    Alice's element applies +beta_d * detuning to the arrival time, Bob's
    applies -beta_d * detuning (normal vs anomalous dispersion).
    """

    dispersion_ps_per_nm: float
    beta_d_ps_per_rad_s: float

    @classmethod
    def from_dispersion(cls, dispersion_ps_per_nm: float,
                        wavelength_nm: float = 1550.0) -> "DispersiveBasis":
        return cls(dispersion_ps_per_nm,
                   beta_from_dispersion(dispersion_ps_per_nm, wavelength_nm))

    def coefficient(self, party: Party) -> float:
        return self.beta_d_ps_per_rad_s if party == Party.ALICE else -self.beta_d_ps_per_rad_s


def dispersive_shift(detuning_rad_s: float, basis: DispersiveBasis, party: Party) -> float:
    """Arrival-time shift in ps for a photon of given detuning, per party."""
    return basis.coefficient(party) * detuning_rad_s


@dataclass
class SimConfig:
    """Full session configuration (simcfg-v1 on disk)."""

    source: SourceModel
    channel: ChannelModel
    detectors: dict[Channel, DetectorModel]
    basis: DispersiveBasis
    duration_s: float
    seed: int
    wavelength_nm: float = 1550.0
    security_fraction: float = 0.3
    format_n_bits: int = 4
    format_bins_per_slot: int = 3
    format_bin_width_ps: int = 160
    hist_bin_ps: int = 30
    hist_range_ps: int = 3840
    block_length: int = 16384
    max_iterations: int = 60
    min_overhead: float = 1.25
    baseline_duration_s: float | None = None

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be > 0")
        if not 0.0 < self.security_fraction < 1.0:
            raise ConfigError("security_fraction must be in (0, 1)")
        if set(self.detectors) != set(CHANNELS):
            raise ConfigError("detectors must cover T1, F1, T2, F2")

    @property
    def duration_ps(self) -> int:
        return int(round(self.duration_s * PS_PER_SECOND))

    def to_dict(self) -> dict:
        return {
            "format_version": "simcfg-v1",
            "pair_rate_hz": self.source.pair_rate_hz,
            "spectral_sigma_rad_s": self.source.spectral_sigma_rad_s,
            "correlation_time_sigma_ps": self.source.correlation_time_sigma_ps,
            "correlation_break_sigma_rad_s": self.source.correlation_break_sigma_rad_s,
            "jitter_sigma_ps": {c.name: self.detectors[c].jitter_sigma_ps for c in CHANNELS},
            "dark_rate_hz": {c.name: self.detectors[c].dark_rate_hz for c in CHANNELS},
            "efficiency": {c.name: self.detectors[c].efficiency for c in CHANNELS},
            "transmission": {"alice": self.channel.alice_transmission,
                             "bob": self.channel.bob_transmission},
            "dispersion_ps_per_nm": self.basis.dispersion_ps_per_nm,
            "beta_d_ps_per_rad_s": self.basis.beta_d_ps_per_rad_s,
            "wavelength_nm": self.wavelength_nm,
            "propagation_delay_ps": self.channel.propagation_delay_ps,
            "residual_dispersion_ps_per_nm": self.channel.residual_dispersion_ps_per_nm,
            "eve_time_sigma_ps": self.channel.eve_time_sigma_ps,
            "eve_freq_sigma_rad_s": self.channel.eve_freq_sigma_rad_s,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "security_fraction": self.security_fraction,
            "format": {"n_bits": self.format_n_bits,
                       "bins_per_slot": self.format_bins_per_slot,
                       "bin_width_ps": self.format_bin_width_ps},
            "histogram": {"bin_ps": self.hist_bin_ps, "range_ps": self.hist_range_ps},
            "reconciliation": {"block_length": self.block_length,
                               "max_iterations": self.max_iterations,
                               "min_overhead": self.min_overhead},
            "baseline": {"duration_s": self.baseline_duration_s or self.duration_s},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        try:
            source = SourceModel(
                d["pair_rate_hz"], d["spectral_sigma_rad_s"],
                d.get("correlation_time_sigma_ps", 0.0),
                d.get("correlation_break_sigma_rad_s", 0.0))
            channel = ChannelModel(
                d["transmission"]["alice"], d["transmission"]["bob"],
                d.get("residual_dispersion_ps_per_nm", 0.0),
                int(d.get("propagation_delay_ps", 0)),
                d.get("eve_time_sigma_ps", 0.0),
                d.get("eve_freq_sigma_rad_s", 0.0))
            detectors = {
                c: DetectorModel(d["efficiency"][c.name],
                                 d["jitter_sigma_ps"][c.name],
                                 d.get("dark_rate_hz", {}).get(c.name, 0.0))
                for c in CHANNELS}
            wavelength = d.get("wavelength_nm", 1550.0)
            beta = d.get("beta_d_ps_per_rad_s")
            disp = d.get("dispersion_ps_per_nm", 1800.0)
            basis = (DispersiveBasis(disp, beta) if beta is not None
                     else DispersiveBasis.from_dispersion(disp, wavelength))
            fmt = d.get("format", {})
            hist = d.get("histogram", {})
            rec = d.get("reconciliation", {})
            return cls(
                source, channel, detectors, basis,
                duration_s=d["duration_s"], seed=int(d["seed"]),
                wavelength_nm=wavelength,
                security_fraction=d.get("security_fraction", 0.3),
                format_n_bits=int(fmt.get("n_bits", 4)),
                format_bins_per_slot=int(fmt.get("bins_per_slot", 3)),
                format_bin_width_ps=int(fmt.get("bin_width_ps", 160)),
                hist_bin_ps=int(hist.get("bin_ps", 30)),
                hist_range_ps=int(hist.get("range_ps", 3840)),
                block_length=int(rec.get("block_length", 16384)),
                max_iterations=int(rec.get("max_iterations", 60)),
                min_overhead=float(rec.get("min_overhead", 1.25)),
                baseline_duration_s=d.get("baseline", {}).get("duration_s"),
            )
        except KeyError as e:
            raise ConfigError(f"missing config key: {e}") from e

    def save(self, path: str | Path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        return cls.from_dict(read_json(path))

    def baseline_config(self) -> "SimConfig":
        """Back-to-back reference: no channel loss, no injected noise."""
        cfg = replace(
            self,
            channel=ChannelModel(1.0, 1.0, 0.0, 0, 0.0, 0.0),
            duration_s=self.baseline_duration_s or self.duration_s,
            seed=(self.seed ^ 0x5EEDBA5E) & 0xFFFFFFFFFFFFFFFF,
        )
        return cfg


def paper_default_config(**overrides) -> SimConfig:
    """The bundled reference scenario (calibrated defaults)."""
    import json
    with resources.files("doqkd").joinpath("configs/paper_default.json").open() as f:
        d = json.load(f)
    d.update(overrides)
    return SimConfig.from_dict(d)


@dataclass
class SessionTags:
    """The four detection streams of one session."""

    t1: TagStream
    f1: TagStream
    t2: TagStream
    f2: TagStream

    @property
    def alice(self) -> tuple[TagStream, TagStream]:
        return (self.t1, self.f1)

    @property
    def bob(self) -> tuple[TagStream, TagStream]:
        return (self.t2, self.f2)

    def stream(self, ch: Channel) -> TagStream:
        return {Channel.T1: self.t1, Channel.F1: self.f1,
                Channel.T2: self.t2, Channel.F2: self.f2}[ch]

    @property
    def total_tags(self) -> int:
        return len(self.t1) + len(self.f1) + len(self.t2) + len(self.f2)

    def singles_rates_hz(self) -> dict[str, float]:
        return {c.name: self.stream(c).rate_hz for c in CHANNELS}


def _chunk_rng(seed: int, chunk: int, purpose: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, chunk)))


def simulate_session(config: SimConfig) -> SessionTags:
    """Generate the four tag streams for one session.

    Photon-origin tags carry truth annotations (pair id, emitted detuning,
    true emission time); dark counts do not. Fully reproducible from
    ``config.seed``.
    """
    src, ch, det, basis = config.source, config.channel, config.detectors, config.basis
    duration_ps = config.duration_ps
    n_chunks = max(1, math.ceil(duration_ps / CHUNK_PS))

    p_route = 0.5  # fair coupler
    surv = {
        Channel.T1: ch.alice_transmission * det[Channel.T1].efficiency,
        Channel.F1: ch.alice_transmission * det[Channel.F1].efficiency,
        Channel.T2: ch.bob_transmission * det[Channel.T2].efficiency,
        Channel.F2: ch.bob_transmission * det[Channel.F2].efficiency,
    }
    beta_res = beta_from_dispersion(ch.residual_dispersion_ps_per_nm, config.wavelength_nm)

    parts: dict[Channel, list[dict]] = {c: [] for c in CHANNELS}

    for chunk in range(n_chunks):
        start = chunk * CHUNK_PS
        if start >= duration_ps:
            break
        # chunks always generate at full canonical width and truncate to the
        # session, so a session is a prefix of one infinite seeded tape
        width_ps = CHUNK_PS
        rng = _chunk_rng(config.seed, chunk)
        n_pairs = rng.poisson(src.pair_rate_hz * width_ps / PS_PER_SECOND)

        # Detection decisions first: most pairs are never seen. One uniform
        # per photon folds the 50:50 routing and the survival thinning.
        p_t1 = p_route * surv[Channel.T1]
        p_f1 = p_route * surv[Channel.F1]
        p_t2 = p_route * surv[Channel.T2]
        p_f2 = p_route * surv[Channel.F2]
        u_a = rng.random(n_pairs)
        u_b = rng.random(n_pairs)
        det_a = u_a < p_t1 + p_f1
        det_b = u_b < p_t2 + p_f2
        route_a = u_a < p_t1           # True -> detected in the time path
        route_b = u_b < p_t2
        keep = det_a | det_b
        route_a, route_b = route_a[keep], route_b[keep]
        det_a, det_b = det_a[keep], det_b[keep]
        k = int(keep.sum())

        emit = start + rng.random(k) * width_ps
        omega_a = (rng.normal(0.0, src.spectral_sigma_rad_s, k)
                   if src.spectral_sigma_rad_s else np.zeros(k))
        omega_b = -omega_a
        if src.correlation_break_sigma_rad_s:
            omega_b = omega_b + rng.normal(0.0, src.correlation_break_sigma_rad_s, k)
        pair_ids = (np.int64(chunk) << np.int64(36)) + np.arange(k, dtype=np.int64)

        for party, detected, route, omega in (
                (Party.ALICE, det_a, route_a, omega_a),
                (Party.BOB, det_b, route_b, omega_b)):
            idx = np.nonzero(detected)[0]
            if not idx.size:
                continue
            m = idx.size
            t = emit[idx].copy()
            om_emit = omega[idx]
            om_phys = om_emit
            if src.correlation_time_sigma_ps:
                t += rng.normal(0.0, src.correlation_time_sigma_ps, m)
            if party == Party.BOB:
                t += ch.propagation_delay_ps
                if ch.eve_time_sigma_ps:
                    t += rng.normal(0.0, ch.eve_time_sigma_ps, m)
                if ch.eve_freq_sigma_rad_s:
                    om_phys = om_phys + rng.normal(0.0, ch.eve_freq_sigma_rad_s, m)
                if beta_res:
                    t += beta_res * om_phys
            in_freq = ~route[idx]
            if in_freq.any():
                coeff = basis.coefficient(party)
                t[in_freq] += coeff * om_phys[in_freq]
            for basis_kind, chan in ((Basis.TIME, Channel.T1 if party == Party.ALICE else Channel.T2),
                                     (Basis.FREQ, Channel.F1 if party == Party.ALICE else Channel.F2)):
                sel = route[idx] if basis_kind == Basis.TIME else in_freq
                if not sel.any():
                    continue
                tt = t[sel] + rng.normal(0.0, det[chan].jitter_sigma_ps, int(sel.sum()))
                times = np.rint(tt).astype(np.int64)
                ok = (times >= 0) & (times < duration_ps)
                parts[chan].append(dict(
                    times=times[ok],
                    pair_ids=pair_ids[idx][sel][ok],
                    detunings=om_emit[sel][ok],
                    emit_times=np.rint(emit[idx][sel][ok]).astype(np.int64),
                ))

        # dark counts, uniform over the chunk
        rng_dark = _chunk_rng(config.seed, chunk, purpose=1)
        for chan in CHANNELS:
            rate = det[chan].dark_rate_hz
            n_d = rng_dark.poisson(rate * width_ps / PS_PER_SECOND) if rate > 0 else 0
            if n_d:
                times = start + np.sort(rng_dark.integers(0, width_ps, n_d))
                times = times[times < duration_ps].astype(np.int64)
                parts[chan].append(dict(
                    times=times,
                    pair_ids=np.full(len(times), -1, np.int64),
                    detunings=np.full(len(times), np.nan),
                    emit_times=np.zeros(len(times), np.int64),
                ))

    streams = {}
    for chan in CHANNELS:
        if parts[chan]:
            times = np.concatenate([p["times"] for p in parts[chan]])
            order = np.argsort(times, kind="stable")
            streams[chan] = TagStream(
                times[order], chan, duration_ps,
                pair_ids=np.concatenate([p["pair_ids"] for p in parts[chan]])[order],
                detunings=np.concatenate([p["detunings"] for p in parts[chan]])[order],
                emit_times=np.concatenate([p["emit_times"] for p in parts[chan]])[order],
            )
        else:
            streams[chan] = TagStream(
                np.empty(0, np.int64), chan, duration_ps,
                pair_ids=np.empty(0, np.int64), detunings=np.empty(0, float),
                emit_times=np.empty(0, np.int64))
    return SessionTags(streams[Channel.T1], streams[Channel.F1],
                       streams[Channel.T2], streams[Channel.F2])


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationTargets:
    """Observables the calibrated default scenario must reproduce.

    Singles rates enter as ratios between channels; the absolute scale is
    set by the effective coincidence rate and CAR at the reference bin
    width, measured on the key (non-security) fraction of events.
    """

    tt_fwhm_ps: float = 150.0
    cross_fwhm_ps: float = 900.0
    singles_rates_hz: tuple[float, float, float, float] = (554e3, 321e3, 315e3, 245e3)
    effective_rate_hz: float = 30e3
    effective_car: float = 200.0
    car_bin_ps: int = 160
    baseline_ff_tt_variance_ratio: float = 1.10
    excess_time_noise: float = 0.03
    excess_freq_noise: float = 0.135


def _std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def jitter_sigma_for_fwhm(tt_fwhm_ps: float) -> float:
    """Per-detector Gaussian jitter giving a two-detector peak of given FWHM."""
    return tt_fwhm_ps / FWHM_PER_SIGMA / math.sqrt(2.0)


def dispersion_spread_ps(tt_fwhm_ps: float, cross_fwhm_ps: float) -> float:
    """Dispersion-induced arrival spread (1 sigma) from quadrature subtraction."""
    if cross_fwhm_ps < tt_fwhm_ps:
        raise CalibrationError("cross-basis width below time-basis width")
    return math.sqrt(cross_fwhm_ps**2 - tt_fwhm_ps**2) / FWHM_PER_SIGMA


def calibrate(targets: CalibrationTargets = CalibrationTargets(),
              *,
              dispersion_ps_per_nm: float = 1800.0,
              wavelength_nm: float = 1550.0,
              transmission: tuple[float, float] = (1.0, 0.4),
              dark_rate_hz: float = 100.0,
              security_fraction: float = 0.3,
              format_n_bits: int = 4,
              format_bins_per_slot: int = 3,
              format_bin_width_ps: int = 160,
              hist_range_ps: int = 3840,
              duration_s: float = 5.0,
              seed: int = 20260808,
              refine_iterations: int = 0) -> SimConfig:
    """Fit the free simulator parameters to the target observables.

    The temporal/spectral spreads follow from closed-form Gaussian algebra;
    an optional deterministic fixed-point refinement re-simulates short
    sessions and rescales the spreads until the measured widths match within
    5 percent. Pair rate and per-channel efficiencies follow from the
    singles-rate ratios and the (effective rate, CAR) pair at the reference
    bin width.
    """
    basis = DispersiveBasis.from_dispersion(dispersion_ps_per_nm, wavelength_nm)
    sigma_delta = targets.tt_fwhm_ps / FWHM_PER_SIGMA
    jitter = jitter_sigma_for_fwhm(targets.tt_fwhm_ps)
    spread = dispersion_spread_ps(targets.tt_fwhm_ps, targets.cross_fwhm_ps)
    spectral = spread / basis.beta_d_ps_per_rad_s
    corr_break = math.sqrt(max(targets.baseline_ff_tt_variance_ratio - 1.0, 0.0)) \
        * sigma_delta / basis.beta_d_ps_per_rad_s
    eve_t = math.sqrt(targets.excess_time_noise) * sigma_delta
    eve_w = math.sqrt(targets.excess_freq_noise) * corr_break

    # absolute rate scale from (effective rate, CAR) on the key fraction
    kf = 1.0 - security_fraction
    tau_s = targets.car_bin_ps * 1e-12
    frame_ps = (1 << format_n_bits) * format_bins_per_slot * format_bin_width_ps
    excl_ps = 3.0 * targets.tt_fwhm_ps
    # frame-keyed splitting decorrelates tag pairs that straddle a frame
    # boundary; the accidental floor seen on the key subset decays linearly
    # with offset accordingly
    mean_abs_offset = 0.5 * (excl_ps + hist_range_ps)
    g = kf - kf * (1.0 - kf) * min(mean_abs_offset / frame_ps, 1.0)
    f_peak = _std_normal_cdf(targets.car_bin_ps / sigma_delta) - 0.5
    rho = targets.effective_rate_hz / (targets.effective_car * tau_s * g)
    coinc = (targets.effective_rate_hz / kf - rho * tau_s) / f_peak
    if coinc <= 0:
        raise CalibrationError("CAR/effective-rate targets leave no true coincidences")

    s = targets.singles_rates_hz
    r_t1 = math.sqrt(rho * s[0] / s[2])
    r_t2 = rho / r_t1
    rates = {Channel.T1: r_t1, Channel.F1: r_t1 * s[1] / s[0],
             Channel.T2: r_t2, Channel.F2: r_t2 * s[3] / s[2]}
    pair_rate = rho / coinc
    trans = {Channel.T1: transmission[0], Channel.F1: transmission[0],
             Channel.T2: transmission[1], Channel.F2: transmission[1]}
    eta = {}
    for c in CHANNELS:
        eta[c] = rates[c] / pair_rate / (trans[c] * 0.5)
        if not 0.0 < eta[c] <= 1.0:
            raise CalibrationError(f"required efficiency for {c.name} is {eta[c]:.3f}; "
                                   "targets unattainable")

    def build(jit: float, spec: float) -> SimConfig:
        return SimConfig(
            source=SourceModel(pair_rate, spec, 0.0, corr_break),
            channel=ChannelModel(transmission[0], transmission[1], 0.0, 0, eve_t, eve_w),
            detectors={c: DetectorModel(eta[c], jit, dark_rate_hz) for c in CHANNELS},
            basis=basis, duration_s=duration_s, seed=seed,
            wavelength_nm=wavelength_nm, security_fraction=security_fraction,
            format_n_bits=format_n_bits, format_bins_per_slot=format_bins_per_slot,
            format_bin_width_ps=format_bin_width_ps, hist_range_ps=hist_range_ps,
        )

    for _ in range(refine_iterations):
        cfg = replace(build(jitter, spectral),
                      duration_s=0.5, seed=seed,
                      channel=ChannelModel(transmission[0], transmission[1]))
        tags = simulate_session(cfg)
        rng_ps = hist_range_ps
        h_tt = coincidence_histogram(tags.t1, tags.t2, 30, (-rng_ps, rng_ps))
        h_tf = coincidence_histogram(tags.t1, tags.f2, 30, (-rng_ps, rng_ps))
        m_tt = fwhm(h_tt)
        m_tf = fwhm(h_tf)
        jitter *= targets.tt_fwhm_ps / m_tt
        measured_spread = math.sqrt(max(m_tf**2 - m_tt**2, 1e-12)) / FWHM_PER_SIGMA
        spectral *= spread / measured_spread
        if (abs(m_tt - targets.tt_fwhm_ps) / targets.tt_fwhm_ps < 0.01
                and abs(m_tf - targets.cross_fwhm_ps) / targets.cross_fwhm_ps < 0.01):
            break

    return build(jitter, spectral)


def write_paper_default(path: str | Path, duration_s: float = 5.0,
                        seed: int = 20260808) -> SimConfig:
    """Regenerate the bundled calibrated configuration file."""
    cfg = calibrate(duration_s=duration_s, seed=seed)
    cfg.save(path)
    return cfg
