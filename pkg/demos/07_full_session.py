"""A complete key-generation session, end to end.

simulate -> split 30/70 -> four-basis security histograms -> covariance
analysis vs the back-to-back reference -> bin sifting -> information
estimate -> syndrome reconciliation -> privacy amplification.
"""
import doqkd as dq

cfg = dq.paper_default_config()
cfg.duration_s = 1.0
cfg.baseline_duration_s = 1.0

rep = dq.run_experiment(cfg)

print(f"session: {cfg.duration_s} s, seed {cfg.seed}")
print("singles:", {k: f"{v/1e3:.0f} kHz" for k, v in rep.singles_rates_hz.items()})
print(f"\nsift: kept {rep.kept_frames} frames -> raw {rep.raw_rate_bps/1e3:.1f} kbps, "
      f"QBER {100*rep.qber_symbol:.2f}% (symbols) / {100*rep.qber_bit:.2f}% (bits)")
s = rep.security
print(f"security: xi_t={s.xi_t:+.3f} xi_w={s.xi_w:+.3f}  "
      f"I(A;B)={s.i_ab_bpc:.2f} bpc  chi={s.chi_ae_bpc:.3f} bpc  "
      f"beta={s.beta:.3f}  delta_i={s.delta_i_bpc:.2f} bpc")
r = rep.reconciliation
print(f"reconciliation: rate-{r.code_rate} code, "
      f"{r.corrected_blocks}/{r.n_blocks} blocks, ber={r.measured_ber:.4f}")
print(f"\nsecret key: {rep.secret_key_bits} bits = {rep.secret_rate_bps/1e3:.1f} kbps")
print(f"wall clock: {rep.wall_clock_s:.1f} s")
