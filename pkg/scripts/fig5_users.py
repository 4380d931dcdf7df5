"""Monte Carlo estimator RMSE and bounds versus the number of users."""

from _common import parser, read_rows, run

p = parser(__doc__)
p.add_argument("--trials", type=int, default=100)
p.add_argument("--users", default="1,2,3,4,5,6,7,8,9,10")
args = p.parse_args()

rows = read_rows(run("mc-sweep-users", "mc_sweep_users.csv", args, "--users", args.users, "--trials", str(args.trials)))
cols = [
    ("ris_position", "m"),
    ("ris_yaw", "deg"),
    ("user_position", "m"),
    ("clock_offset", "ns"),
]
print("M   " + "  ".join(f"{c} bound/rmse [{u}]" for c, u in cols))
for r in rows:
    cells = [f"{float(r[f'{c}_bound_{u}']):.3g}/{float(r[f'{c}_rmse_{u}']):.3g}" for c, u in cols]
    print(f"{r['n_users']:<3} " + "  ".join(f"{c:>22}" for c in cells))
