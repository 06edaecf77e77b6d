"""A quick sensitivity run (N=100) showing the report API.

The full N=1000 run takes a few minutes per seed; use `hbvsim gsa` for that.
"""

from hbvsim.experiments import run_gsa

res = run_gsa(n=100, seed=7)
rep = res.report
for out in ("P", "Z", "C_p", "V"):
    print(f"{out:>4}: most positive {rep.most_positive(out):>10}, "
          f"most negative {rep.most_negative(out):>10}")
print()
print("parameters classified positive for V:", ", ".join(rep.by_class("V", "positive")))
