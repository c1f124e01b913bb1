"""
How the deadline miss ratio depends on rate and sampling period
===============================================================

Three identical loops share one 802.11b cell.  Each sample costs two frames
(sensor to controller, controller to actuator) and must complete within one
sampling period.  Shorter periods mean more offered load, and at some point
the medium saturates.  This script sweeps the fixed period at both rates.
"""

# %%
from wcsched import ScenarioConfig
from wcsched.runner import sweep

# A smaller grid than the full sweep keeps this quick; pass more periods or
# replications for smoother curves.
periods = [8, 10, 12, 14, 16, 20, 30]
points = sweep(ScenarioConfig(), rates=[5.5, 11.0], periods_ms=periods,
               replications=4, duration_us=2_000_000)

# %%
# Tabulate mean DMR (rows: period, columns: rate).
table = {(p.rate, p.h_ms): p.dmr_mean for p in points}
print(" h [ms]   5.5 Mb/s   11 Mb/s")
for h in periods:
    print(f"{h:7d}   {table[(5.5, h)]:8.3f}   {table[(11.0, h)]:7.3f}")

# %%
# The knee: the smallest period where DMR is below 10% at each rate.
for rate in (5.5, 11.0):
    ok = [h for h in periods if table[(rate, float(h))] < 0.10]
    print(f"{rate:>4} Mb/s: DMR < 0.10 from h = {min(ok) if ok else None} ms")

# Halving the rate nearly doubles the payload airtime while the PHY preamble
# stays fixed, so the knee moves to a longer period, though by less than 2x.
