"""Coincidence analytics on a short simulated session.

Builds the time-difference histogram between the two time-basis detectors,
reads off the peak width, and reports the effective coincidence rate and
coincidence-to-accidental ratio at the key-generation bin width.
"""
import numpy as np

import doqkd as dq

cfg = dq.paper_default_config()
cfg.duration_s = 0.5
print(f"simulating {cfg.duration_s} s at pair rate {cfg.source.pair_rate_hz/1e6:.1f} MHz ...")
tags = dq.simulate_session(cfg)
print("singles rates:", {k: f"{v/1e3:.0f} kHz" for k, v in tags.singles_rates_hz().items()})

# fine histogram for the peak shape
h = dq.coincidence_histogram(tags.t1, tags.t2, 30, (-3840, 3840))
print(f"\ntime/time histogram: {h.n_bins} bins of {h.bin_width} ps, "
      f"{h.total} pairs in range")
print(f"peak FWHM: {dq.fwhm(h):.0f} ps  (detector jitter dominated)")

# coarser binning trades accidental floor against peak capture
for tau in (40, 160, 400):
    half = tau * (3840 // tau)
    hh = dq.coincidence_histogram(tags.t1, tags.t2, tau, (-half, half))
    er = dq.effective_rates(hh)
    print(f"bin {tau:3d} ps: effective rate {er.effective_coincidence_rate_hz/1e3:6.1f} kHz, "
          f"CAR {er.effective_car:6.0f}")

print("\nwider bins capture more of the peak but collect accidentals "
      "linearly, so the CAR falls.")
