"""Nonlocal dispersion cancellation across the four basis combinations.

Both parties split photons 50:50 between direct (time-basis) detection and
detection behind a signed dispersive element (frequency basis). With
anti-correlated detunings and opposite-sign dispersion, the freq/freq
coincidence peak collapses back to the jitter-limited width, while the
mixed combinations stay broadened — the security signature.
"""
import doqkd as dq

cfg = dq.paper_default_config()
cfg.duration_s = 0.5
tags = dq.simulate_session(cfg)

pairs = {
    "T1 x T2 (time/time)  ": (tags.t1, tags.t2),
    "T1 x F2 (time/freq)  ": (tags.t1, tags.f2),
    "F1 x T2 (freq/time)  ": (tags.f1, tags.t2),
    "F1 x F2 (freq/freq)  ": (tags.f1, tags.f2),
}
print(f"dispersive element: {cfg.basis.dispersion_ps_per_nm:+.0f} ps/nm at the "
      f"sender, {-cfg.basis.dispersion_ps_per_nm:+.0f} ps/nm at the receiver\n")
for name, (a, b) in pairs.items():
    h = dq.coincidence_histogram(a, b, 30, (-3840, 3840))
    print(f"{name} FWHM = {dq.fwhm(h):6.0f} ps")

print("\nthe freq/freq peak recovers the narrow width: the dispersion applied "
      "at one side is undone nonlocally at the other.")
