"""BER against receiver thermal noise, with Clopper-Pearson upper bounds.

At the shipped calibration (8 mV rms) no errors show up at all, so the
useful number there is the 95% bound, which falls as ln(20)/N. Raising the
noise makes errors appear; lost frames (no prefix found) are counted apart
from the bit comparison.

    python demos/02_ber_vs_noise.py [--frames 300] [--pdm] [--plot ber.png]
"""

import argparse
from dataclasses import replace

import numpy as np

from translum import LinkConfig, channel
from translum.harness import run_link

ap = argparse.ArgumentParser()
ap.add_argument("--frames", type=int, default=300)
ap.add_argument("--pdm", action="store_true")
ap.add_argument("--plot", help="save a BER plot here (needs matplotlib)")
args = ap.parse_args()

cfg = LinkConfig(data_rate=3e6, modulation="PDM") if args.pdm else LinkConfig(data_rate=5e6)
stack = channel.tissue_preset("bone10_skin7")
sigmas = np.array([0.008, 0.02, 0.025, 0.03, 0.035, 0.04, 0.05])

print(f"{cfg.modulation.value} {cfg.data_rate / 1e6:g} Mbit/s, {args.frames} frames per point")
print(f"{'noise mV':>9}{'bits':>10}{'errors':>8}{'lost':>6}{'BER':>11}{'95% bound':>11}")
rows = []
for s in sigmas:
    rep = run_link(cfg, stack, replace(channel.RxModel(), thermal_noise_vrms=s), args.frames)
    rows.append((s, rep.ber or 0.0, rep.ber_upper_95))
    ber = "-" if rep.ber is None else f"{rep.ber:.2e}"
    print(f"{s * 1e3:>9.1f}{rep.bits_compared:>10}{rep.bit_errors:>8}{rep.sync_failures:>6}"
          f"{ber:>11}{rep.ber_upper_95:>11.2e}")

if args.plot:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    s, ber, up = np.array(rows).T
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(s * 1e3, np.where(ber > 0, ber, np.nan), "o-", label="measured")
    ax.semilogy(s * 1e3, up, "k--", lw=0.8, label="95% upper bound")
    ax.set_xlabel("thermal noise (mV rms)")
    ax.set_ylabel("BER")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.plot, dpi=120)
    print(f"plot written to {args.plot}")
