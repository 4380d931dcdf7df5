"""Bounds over the 10 m x 10 m user area at z = -5 m.

Writes results/bounds_map.csv and prints a coarse text rendering of the
user-position bound (log scale, '#' marks singular or > 5x median cells).
"""

import math

import numpy as np

from _common import parser, read_rows, run

p = parser(__doc__)
p.add_argument("--full-fidelity", action="store_true")
p.add_argument("--nx", type=int, default=50)
p.add_argument("--ny", type=int, default=50)
args = p.parse_args()

extra = ["--nx", str(args.nx), "--ny", str(args.ny)] + (["--full-fidelity"] if args.full_fidelity else [])
rows = read_rows(run("bounds-map", "bounds_map.csv", args, *extra))
u = np.array([float(r["user_bound_m"]) for r in rows]).reshape(args.nx, args.ny)
med = np.median(u[np.isfinite(u)])
shades = " .:-=+*%@"
for j in range(args.ny - 1, -1, -max(1, args.ny // 25)):
    line = ""
    for i in range(args.nx):
        v = u[i, j]
        if not math.isfinite(v) or v > 5 * med:
            line += "#"
        else:
            line += shades[min(len(shades) - 1, max(0, int(3 * math.log10(v / med) + 4)))]
    print(line)
print(f"median user bound {med:.3f} m; {np.mean(u < 1):.0%} of cells under 1 m")
