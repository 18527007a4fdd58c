"""Command-line surface.

Subcommands: simulate, analyze, sift, secure, keygen, sweep, optimize.
Exit codes: 0 success, 2 config error, 3 protocol abort, 4 no key extracted.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DoqkdError, ProtocolAbort, StageError
from .io import read_ttag, write_json, write_ttag
from .security import Baseline, excess_noise, holevo_bound
from .session import (CODE_SEED, DEFAULT_I_GRID, DEFAULT_N_GRID,
                      DEFAULT_TAU_GRID, PA_SEED_SALT, analyze_security,
                      optimize, run_experiment, sweep)
from .sifting import FrameFormat, pack_symbols, qber, run_sifting
from .simulate import SessionTags, SimConfig, paper_default_config, simulate_session
from .timetags import Channel, coincidence_histogram, effective_rates

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_NO_KEY = 4

_STREAM_FILES = {Channel.T1: "t1.ttag", Channel.F1: "f1.ttag",
                 Channel.T2: "t2.ttag", Channel.F2: "f2.ttag"}


def _load_config(args) -> SimConfig:
    cfg = SimConfig.load(args.config) if args.config else paper_default_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "duration", None) is not None:
        cfg.duration_s = args.duration
    return cfg


def _parse_format(text: str) -> FrameFormat:
    try:
        n, i, tau = (int(x) for x in text.split(","))
        return FrameFormat(n, i, tau)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad --format '{text}', expected N,I,tau_ps") from e


def _load_session_dir(path: str | Path, duration_ps: int | None = None) -> SessionTags:
    d = Path(path)
    streams = {}
    for ch, name in _STREAM_FILES.items():
        f = d / name
        if not f.exists():
            raise ConfigError(f"missing stream file {f}")
        streams[ch] = read_ttag(f, duration_ps)
    dur = max(s.duration_ps for s in streams.values())
    for ch in streams:
        streams[ch].duration_ps = dur
    return SessionTags(streams[Channel.T1], streams[Channel.F1],
                       streams[Channel.T2], streams[Channel.F2])


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    tags = simulate_session(cfg)
    for ch, name in _STREAM_FILES.items():
        write_ttag(out / name, tags.stream(ch))
    cfg.save(out / "session.json")
    print(f"wrote {tags.total_tags} tags to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_config(args) if args.config else None
    bin_ps = args.bin or (cfg.hist_bin_ps if cfg else 30)
    range_ps = args.range or (cfg.hist_range_ps if cfg else 3840)
    tags = _load_session_dir(args.indir)
    out = _out_dir(args)
    pairs = {"tt": (tags.t1, tags.t2), "tf": (tags.t1, tags.f2),
             "ft": (tags.f1, tags.t2), "ff": (tags.f1, tags.f2)}
    lines = ["# combo,offset_ps,counts"]
    summary = {}
    for name, (a, b) in pairs.items():
        h = coincidence_histogram(a, b, bin_ps, (-range_ps, range_ps))
        for c, x in zip(h.counts, h.bin_centers()):
            lines.append(f"{name},{x:.1f},{int(c)}")
        try:
            er = effective_rates(h)
            summary[name] = {"fwhm_ps": float(er.fwhm_ps),
                             "effective_rate_hz": float(er.effective_coincidence_rate_hz),
                             "effective_car": float(er.effective_car)
                             if np.isfinite(er.effective_car) else None,
                             "peak_offset_ps": int(er.peak_bin_offset)}
        except DoqkdError as e:
            summary[name] = {"error": str(e)}
    (out / "histograms.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "analysis.json", summary)
    for name, s in summary.items():
        print(name, s)
    return EXIT_OK


def cmd_sift(args) -> int:
    fmt = _parse_format(args.format)
    fmt_b = _parse_format(args.format_b) if args.format_b else None
    d = Path(args.indir)
    t1 = read_ttag(d / "t1.ttag")
    t2 = read_ttag(d / "t2.ttag")
    dur = max(t1.duration_ps, t2.duration_ps)
    t1.duration_ps = t2.duration_ps = dur
    out = _out_dir(args)
    result = run_sifting(t1, t2, fmt, fmt_b)
    (out / "key_a.bin").write_bytes(pack_symbols(result.key_a, fmt.n_bits))
    (out / "key_b.bin").write_bytes(pack_symbols(result.key_b, fmt.n_bits))
    (out / "transcript.bin").write_bytes(result.transcript.to_bytes())
    stats = {"kept_frames": result.kept_frames,
             "discarded_bin_mismatch": result.discarded_bin_mismatch,
             "discarded_multi_event": result.discarded_multi_event,
             "qber_symbol": qber(result.key_a, result.key_b)
             if result.kept_frames else None,
             "n_bits": fmt.n_bits}
    write_json(out / "sift.json", stats)
    print(stats)
    return EXIT_OK


def cmd_secure(args) -> int:
    cfg = _load_config(args)
    tags = _load_session_dir(args.indir, cfg.duration_ps)
    base_tags = _load_session_dir(args.baseline, cfg.duration_ps)
    _, tfcm = analyze_security(tags, cfg)
    _, tfcm0 = analyze_security(base_tags, cfg)
    baseline = Baseline(tfcm0)
    xi_t = excess_noise(tfcm.sigma_t_sq, baseline.sigma_t0_sq)
    xi_w = excess_noise(tfcm.sigma_w_sq, baseline.sigma_w0_sq)
    chi = holevo_bound(tfcm, baseline)
    report = {"xi_t": xi_t, "xi_w": xi_w, "chi_ae_bpc": chi,
              "tfcm": tfcm.matrix.tolist(),
              "baseline_tfcm": baseline.tfcm.matrix.tolist()}
    out = _out_dir(args)
    write_json(out / "security.json", report)
    print({k: report[k] for k in ("xi_t", "xi_w", "chi_ae_bpc")})
    return EXIT_OK


def cmd_keygen(args) -> int:
    cfg = _load_config(args)
    if args.format:
        fmt = _parse_format(args.format)
        cfg.format_n_bits = fmt.n_bits
        cfg.format_bins_per_slot = fmt.bins_per_slot
        cfg.format_bin_width_ps = fmt.bin_width_ps
    report = run_experiment(cfg)
    out = _out_dir(args)
    (out / "secret_key.bin").write_bytes(report.secret_key)
    (out / "raw_key_a.bin").write_bytes(report.raw_key_a)
    (out / "raw_key_b.bin").write_bytes(report.raw_key_b)
    (out / "reconciled_key.bin").write_bytes(report.reconciled_key)
    rec = report.reconciliation
    write_json(out / "key_material.json", {
        "raw_symbols": report.kept_frames,
        "n_bits_per_symbol": cfg.format_n_bits,
        "reconciled_bits": rec.corrected_blocks * rec.block_length,
        "code_rate": rec.code_rate,
        "disclosed_bits": rec.disclosed_bits_total,
        "secret_bits": report.secret_key_bits,
        "seeds": {"session": cfg.seed,
                  "amplification": cfg.seed ^ PA_SEED_SALT,
                  "code": CODE_SEED},
    })
    write_json(out / "report.json", report.to_dict())
    print(f"raw {report.raw_rate_bps:.0f} bps, QBER(sym) "
          f"{report.qber_symbol if report.qber_symbol is not None else float('nan'):.4f}, "
          f"secret {report.secret_rate_bps:.0f} bps "
          f"({report.secret_key_bits} bits)")
    if report.security.no_key or report.secret_key_bits == 0:
        return EXIT_NO_KEY
    return EXIT_OK


def _parse_grid(text: str | None, default: tuple[int, ...]) -> tuple[int, ...]:
    if not text:
        return default
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as e:
        raise ConfigError(f"bad grid '{text}'") from e


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    table = sweep(cfg,
                  tau_list=_parse_grid(args.tau_list, DEFAULT_TAU_GRID),
                  i_list=_parse_grid(args.i_list, DEFAULT_I_GRID),
                  n_list=_parse_grid(args.n_list, DEFAULT_N_GRID))
    out = _out_dir(args)
    (out / "sweep.csv").write_text(table.to_csv())
    print(f"wrote {len(table)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    entries = optimize(cfg, qber_cap=args.qber_cap,
                       n_list=_parse_grid(args.n_list, DEFAULT_N_GRID),
                       tau_list=_parse_grid(args.tau_list, DEFAULT_TAU_GRID),
                       i_list=_parse_grid(args.i_list, DEFAULT_I_GRID))
    out = _out_dir(args)
    write_json(out / "optimize.json", [e.to_dict() for e in entries])
    for e in entries:
        print(e.to_dict())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doqkd",
                                description="dispersive-optics QKD session toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out=True):
        if config:
            sp.add_argument("--config", help="simcfg-v1 JSON (default: bundled scenario)")
            sp.add_argument("--seed", type=int, help="override session seed")
            sp.add_argument("--duration", type=float, help="override duration (s)")
        if out:
            sp.add_argument("--out", help="output directory (default: cwd)")

    sp = sub.add_parser("simulate", help="config -> ttag streams")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="ttag streams -> histogram/FWHM/CAR CSV")
    sp.add_argument("--in", dest="indir", required=True)
    sp.add_argument("--bin", type=int, help="histogram bin width (ps)")
    sp.add_argument("--range", type=int, help="histogram half-range (ps)")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sift", help="time-basis ttag pair -> keys + transcript")
    sp.add_argument("--in", dest="indir", required=True)
    sp.add_argument("--format", required=True, metavar="N,I,TAU_PS")
    sp.add_argument("--format-b", help="Bob-side format (mismatch aborts)")
    common(sp, config=False)
    sp.set_defaults(func=cmd_sift)

    sp = sub.add_parser("secure", help="four-basis ttag + baseline -> security report")
    sp.add_argument("--in", dest="indir", required=True)
    sp.add_argument("--baseline", required=True, help="baseline session directory")
    common(sp)
    sp.set_defaults(func=cmd_secure)

    sp = sub.add_parser("keygen", help="end-to-end secret key generation")
    sp.add_argument("--format", metavar="N,I,TAU_PS")
    common(sp)
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("sweep", help="rate/QBER over the format grid")
    sp.add_argument("--tau-list", help="comma-separated bin widths (ps)")
    sp.add_argument("--i-list", help="comma-separated bins per slot")
    sp.add_argument("--n-list", help="comma-separated bit depths")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("optimize", help="best format per dimension under a QBER cap")
    sp.add_argument("--qber-cap", type=float, default=0.05)
    sp.add_argument("--tau-list")
    sp.add_argument("--i-list")
    sp.add_argument("--n-list")
    common(sp)
    sp.set_defaults(func=cmd_optimize)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolAbort as e:
        print(f"protocol abort: {e}", file=sys.stderr)
        return EXIT_ABORT
    except StageError as e:
        if isinstance(e.cause, ProtocolAbort):
            print(f"protocol abort: {e}", file=sys.stderr)
            return EXIT_ABORT
        if isinstance(e.cause, ConfigError):
            print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DoqkdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
