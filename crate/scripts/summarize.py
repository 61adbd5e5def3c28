"""Mean final cumulative round trips per method from a benchmark.csv."""

import csv
import sys
from collections import defaultdict

path = sys.argv[1]
with open(path) as f:
    rows = list(csv.DictReader(line for line in f if not line.startswith("#")))

last = defaultdict(dict)
for r in rows:
    key = (r["method"], r["seed"])
    if int(r["round"]) >= last[key].get("round", 0):
        last[key] = {"round": int(r["round"]), "value": float(r["cumulative_round_trips"])}

totals = defaultdict(list)
for (method, _), v in last.items():
    totals[method].append(v["value"])

means = {m: sum(v) / len(v) for m, v in totals.items()}
for m, v in sorted(means.items(), key=lambda kv: -kv[1]):
    print(f"{m:20s} {v:10.1f}  ({len(totals[m])} seeds)")

order = ["spline", "nrpt-linear", "reversible-linear"]
if all(m in means for m in order):
    beats = means["spline"] > max(means["nrpt-linear"], means["reversible-linear"])
    nonrev = means["nrpt-linear"] >= means["reversible-linear"]
    print("spline above both linear baselines:", "yes" if beats else "no")
    print("nrpt-linear at least reversible-linear:", "yes" if nonrev else "no")
