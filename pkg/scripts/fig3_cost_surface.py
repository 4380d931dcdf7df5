"""Initialisation cost surfaces for a blind-area and a non-blind user."""


from _common import parser, run

p = parser(__doc__)
p.add_argument("--zero-noise", action="store_true")
args = p.parse_args()

for name, user in (("blind", "5,6,-5"), ("nonblind", "9,8,-5")):
    extra = ["--user", user, "-v"] + (["--zero-noise"] if args.zero_noise else [])
    out = run("cost-surface", f"cost_surface_{name}.csv", args, *extra)
    print(f"user [{user}] -> {out}")
