"""Best encoding dimension under a QBER cap.

For each bit depth N the optimizer maximizes the raw rate over the
(bin width, bins-per-slot) grid subject to QBER <= 5%. Higher N packs more
bits per coincidence but stretches the frame, so accidentals eventually
push the error rate over the cap.
"""
import doqkd as dq
from doqkd.session import align_bob, optimize, sweep

cfg = dq.paper_default_config()
cfg.duration_s = 1.0
cfg.baseline_duration_s = 1.0
tags = align_bob(dq.simulate_session(cfg), cfg.channel.propagation_delay_ps)

table = sweep(cfg, tau_list=tuple(range(80, 401, 40)), i_list=(3, 4, 5),
              n_list=(2, 3, 4, 5), tags=tags)
entries = optimize(cfg, qber_cap=0.05, n_list=(2, 3, 4, 5), table=table)

print(f"{'N':>2} {'feasible':>8} {'tau_ps':>7} {'I':>3} {'raw kbps':>9} {'QBER %':>7}")
for e in entries:
    if e.feasible:
        print(f"{e.n_bits:>2} {'yes':>8} {e.tau_ps:>7} {e.bins_per_slot:>3} "
              f"{e.raw_rate_bps/1e3:>9.1f} {100*e.qber:>7.2f}")
    else:
        print(f"{e.n_bits:>2} {'no':>8} {'-':>7} {'-':>3} {'-':>9} {'-':>7}")

best = max((e for e in entries if e.feasible), key=lambda e: e.raw_rate_bps)
print(f"\nbest dimension: N={best.n_bits} at {best.tau_ps} ps "
      f"({best.raw_rate_bps/1e3:.1f} kbps under the 5% cap)")
