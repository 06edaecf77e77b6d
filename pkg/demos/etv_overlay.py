"""Treated reduced model against the bundled synthetic mouse series.

Writes V.csv/V.svg plus the series to the given directory so they can be
overlaid. Pass your own digitised CSVs after the directory to score them.
"""

import sys
from pathlib import Path

from hbvsim.experiments import example_mouse_files, load_mouse_csv, run_etv_validation, write_scenario

out = Path(sys.argv[1] if len(sys.argv) > 1 else "etv-demo")
files = [Path(f) for f in sys.argv[2:]] or example_mouse_files()
res = run_etv_validation([load_mouse_csv(f) for f in files])
write_scenario(res, out, states=["V"])
for key in ("V_at_start", "V_at_end", "declines_over_window", "pre_window_bit_identical"):
    print(f"{key}: {res.metrics[key]}")
for mouse, err in res.metrics["rms_log10_error"].items():
    print(f"mouse {mouse}: RMS log10 error {err:.2f}")
for note in res.notes:
    print("note:", note)
