"""Raw rate and QBER across the (bin width, bins-per-slot) grid.

One dataset is simulated, then re-split and re-sifted per grid point, so
the curves isolate the encoding-format tradeoff from Monte-Carlo noise.
Wider bins keep more coincidences (rate up) but admit more accidentals
(QBER up); too-narrow bins lose events to slot straddling (QBER up again).
Writes a gnuplot-ready CSV next to this script.
"""
from pathlib import Path

import doqkd as dq
from doqkd.session import align_bob, sweep

cfg = dq.paper_default_config()
cfg.duration_s = 1.0
cfg.baseline_duration_s = 1.0
tags = align_bob(dq.simulate_session(cfg), cfg.channel.propagation_delay_ps)

table = sweep(cfg, tau_list=tuple(range(40, 401, 40)), i_list=(3, 4, 5),
              n_list=(4,), tags=tags)

out = Path(__file__).with_suffix(".csv")
out.write_text(table.to_csv())
print(f"wrote {len(table)} rows to {out.name}\n")

print("I=3 row (tau, raw kbps, QBER %):")
for r in sorted(table.select(n_bits=4, bins_per_slot=3), key=lambda r: r.tau_ps):
    print(f"  {r.tau_ps:4d}  {r.raw_rate_bps/1e3:7.1f}  {100*r.qber:6.2f}")

print("\nthe QBER minimum sits where the slot just covers the coincidence "
      "peak; the 5% cap picks the largest feasible bin width.")
