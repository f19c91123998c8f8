"""Transmitter efficiency for the Table 1 operating points and the capacity claims.

Energy per bit is simply measured power over data rate. Eleven rows agree
with the printed efficiency to 0.01 nJ/bit; the 0.5 Mbit/s row computes to
2.2 nJ/bit against a printed 2.3 and is flagged rather than corrected.

The channel-count arithmetic shows that both recording configurations fit
their link rate on raw payload, and both stop fitting once every 1520
payload bits carry a 32-bit prefix.

    python demos/03_table1_budget.py
"""

from translum.powerbudget import TABLE1, efficiency_check, feasibility

print(f"{'row':<12}{'preset':<14}{'mW':>5}{'nJ/bit':>8}{'printed':>9}")
for row in TABLE1:
    c = efficiency_check(row)
    flag = "" if c["consistent"] else "  <- printed value inconsistent"
    print(f"{c['key']:<12}{c['preset']:<14}{row.point.power * 1e3:>5.1f}"
          f"{c['computed_nj_per_bit']:>8.3f}{c['printed_nj_per_bit']:>9.2f}{flag}")

print()
for ch, fs, bits, rate in [(41, 2000, 24, 2e6), (32, 9700, 16, 5e6)]:
    f = feasibility(ch, fs, bits, rate)
    print(f"{ch} ch x {fs} Hz x {bits} bit: raw {int(f.required):,} bit/s "
          f"({'fits' if f.raw_ok else 'does not fit'} {rate / 1e6:g} Mbit/s), "
          f"framed {float(f.framed):,.0f} bit/s "
          f"({'fits' if f.framed_ok else f'short by {-f.margin:,.0f} bit/s'})")

# channels that do fit once framing is counted
for fs, bits, rate in [(2000, 24, 2e6), (9700, 16, 5e6)]:
    n = 1
    while feasibility(n + 1, fs, bits, rate).framed_ok:
        n += 1
    print(f"at {fs} Hz / {bits} bit, {rate / 1e6:g} Mbit/s carries {n} framed channels")
