"""Focused-ultrasound power delivery to the stent harvesters.

Walks the acoustic chain for the default head path at the 30 kPa safe point:
layer losses, focal pressure, skull heating, one element's tuned output,
the six-element array, and a frequency x load map.

    python demos/04_ultrasound_power.py [--plot fus.png]
"""

import argparse

import numpy as np

from translum import fus

ap = argparse.ArgumentParser()
ap.add_argument("--plot", help="save the frequency x load map here (needs matplotlib)")
args = ap.parse_args()

path = fus.safety_gate(fus.default_path())
print(f"{'layer':<8}{'mm':>6}{'dB/cm/MHz':>11}{'MRayl':>7}{'amp':>8}{'dT C':>7}")
heat = fus.layer_heating(path)
for l in path.layers:
    print(f"{l.name:<8}{l.thickness:>6.1f}{l.attenuation:>11.4g}{l.impedance:>7.2f}"
          f"{l.amplitude_factor(path.f):>8.4f}{heat[l.name]:>7.2f}")
print(f"focal pressure {fus.focal_pressure(path) / 1e3:.1f} kPa from P0 {path.P0 / 1e3:g} kPa "
      f"with focal gain {path.focal_gain:g}")
print(f"hottest layer rises {fus.thermal_estimate(path):.2f} C (limit 2 C)")

p, f, r = fus.tuned_power(fus.PiezoElement(), path)
print(f"\none on-axis element: {p * 1e3:.2f} mW at {f / 1e3:.1f} kHz into {r:.0f} ohm")

res = fus.array_power(fus.array_preset("six-element"), path)
for k, (o, pw, fk) in enumerate(zip(res.orientations, res.per_element, res.frequencies), 1):
    print(f"  element {k}: {o:4.0f} deg  {fk / 1e3:7.1f} kHz  {pw * 1e3:5.2f} mW")
print(f"six elements, each tuned: {res.total * 1e3:.2f} mW")
flat = fus.array_power(fus.array_preset("six-element"), path, per_element_tuning=False)
print(f"six elements at one shared 1 MHz drive: {flat.total * 1e3:.2f} mW")

for p0 in (30e3, 31e3):
    try:
        fus.safety_gate(path.at(P0=p0))
        print(f"P0 {p0 / 1e3:g} kPa: pass")
    except fus.SafetyViolation as exc:
        print(f"P0 {p0 / 1e3:g} kPa: rejected ({'; '.join(exc.violations)})")

surf = fus.harvest_sweep(fus.PiezoElement(), path, np.linspace(0.8e6, 1.2e6, 81),
                         np.geomspace(100, 1e5, 61))
i, j = surf.argmax()
print(f"\nsweep maximum {surf.max_power * 1e3:.2f} mW at {surf.f_grid[i] / 1e3:.0f} kHz, "
      f"{surf.r_grid[j]:.0f} ohm")

if args.plot:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4))
    m = ax.pcolormesh(surf.r_grid, surf.f_grid / 1e3, surf.power * 1e3, shading="auto")
    ax.set_xscale("log")
    ax.set_xlabel("load (ohm)")
    ax.set_ylabel("frequency (kHz)")
    fig.colorbar(m, label="power (mW)")
    fig.tight_layout()
    fig.savefig(args.plot, dpi=120)
    print(f"plot written to {args.plot}")
