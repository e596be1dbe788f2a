"""
Task streams over a class x domain grid
=======================================

Cut the same 6 x 4 grid of (class, domain) cells into tasks under each
incremental regime and look at how many classes and domains every task gets.
"""

from uillab import GridSpec, Regime, degenerate_to_vil, generate_scenario, serialize_scenario

grid = GridSpec(num_classes=6, num_domains=4)

streams = {
    "uil": generate_scenario(grid, Regime("uil"), 8, seed=0),
    "vil": generate_scenario(grid, Regime("vil", 2), 12, seed=0),
    "cil": generate_scenario(grid, Regime("cil"), 3, seed=0),
    "dil": generate_scenario(grid, Regime("dil"), 4, seed=0),
}

for name, spec in streams.items():
    shapes = [(len(spec.classes_of(t)), len(spec.domains_of(t))) for t in range(spec.num_tasks)]
    print(f"{name}: (classes, domains) per task = {shapes}")
    print(f"     collapses to fixed-shape VIL: {degenerate_to_vil(spec)}")

# the text form is what the CLI writes and reads back
print()
print(serialize_scenario(streams["uil"]).decode())

# how often does a random UIL stream happen to look like VIL?
hits = sum(degenerate_to_vil(generate_scenario(GridSpec(3, 3), Regime("uil"), 3, s)) for s in range(500))
print(f"3x3 grid, 3 tasks: {hits}/500 random streams have one domain and equal class counts per task")
