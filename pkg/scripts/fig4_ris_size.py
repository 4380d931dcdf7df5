"""Bounds at user [8, 8, -5] versus the number of RIS elements, four known-state variants."""

from collections import defaultdict

import numpy as np

from _common import parser, read_rows, run

args = parser(__doc__).parse_args()
sizes = ",".join(str((2 * n) ** 2) for n in range(1, 16))
rows = read_rows(run("bounds-vs-ris-size", "bounds_vs_ris_size.csv", args, "--sizes", sizes))

curves = defaultdict(list)
for r in rows:
    curves[r["variant"]].append((int(r["n_ris"]), float(r["user_bound_m"]), float(r["ris_bound_m"]), float(r["orient_bound_deg"])))
print(f"{'variant':<10} {'N_R':>5} {'user [m]':>10} {'RIS [m]':>10} {'yaw [deg]':>10}")
for v, pts in curves.items():
    for n, u, ris, o in pts:
        if n in (100, 400, 900):
            print(f"{v:<10} {n:>5} {u:>10.3f} {ris:>10.3f} {o:>10.3f}")
    arr = np.array(pts)
    col = 3 if np.all(arr[:, 3] > 0) else 2  # yaw is pinned in known_oR
    slope = np.polyfit(np.log(arr[:, 0]), np.log(arr[:, col]), 1)[0]
    print(f"{v:<10} {'yaw' if col == 3 else 'RIS'}-bound log-log slope {slope:.2f}")
