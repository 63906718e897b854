"""Plot scripts for a simulation directory.

The scripts are plain matplotlib programs written next to the data, so the
package itself never imports a plotting library.
"""

from __future__ import annotations

from pathlib import Path

from cfwd.io import atomic_write, read_csv

_HEAD = '''"""Generated by cfwd; run with python inside the simulation directory."""
import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def rows(name):
    with open(HERE / name) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
'''

ATOMS = _HEAD + '''

records = [json.loads(ln) for ln in open(HERE / "measures.jsonl")]
fig, ax = plt.subplots(figsize=(8, 4.5))
for r in records:
    shade = [str(max(0.0, 0.85 - 0.85 * m)) for m in r["masses"]]
    ax.scatter([r["t"]] * len(r["positions"]), r["positions"], c=shade, s=2, linewidths=0)
traj = rows("trajectory.csv")
ax.plot([float(r["t"]) for r in traj], [float(r["com"]) for r in traj], color="tab:red", lw=0.8,
        label="centre of mass")
ax.set_xlabel("t")
ax.set_ylabel("atom position")
ax.legend(loc="upper left")
fig.tight_layout()
fig.savefig(HERE / "fig_atoms.png", dpi=150)
'''

COUNT = _HEAD + '''

traj = rows("trajectory.csv")
t = [float(r["t"]) for r in traj]
k = [int(r["atom_count"]) for r in traj]
w = max(1, len(k) // 50)
avg = [sum(k[max(0, i - w + 1): i + 1]) / len(k[max(0, i - w + 1): i + 1]) for i in range(len(k))]
fig, ax = plt.subplots(figsize=(8, 3))
ax.step(t, k, where="post", color="0.6", lw=0.6, label="atoms")
ax.plot(t, avg, color="k", lw=1.2, label=f"moving average ({w} snapshots)")
ax.set_xlabel("t")
ax.set_ylabel("number of atoms")
ax.legend(loc="upper right")
fig.tight_layout()
fig.savefig(HERE / "fig_atom_count.png", dpi=150)
'''

PARTITIONS = _HEAD + '''

parts = rows("partitions.csv")
fig, ax = plt.subplots(figsize=(8, 4))
for r in parts:
    t = float(r["t"])
    for u in filter(None, r["boundaries"].split(";")):
        ax.plot([t], [float(u)], "k.", ms=1)
ax.set_ylim(0, 1)
ax.set_xlabel("t")
ax.set_ylabel("block boundaries in mass coordinates")
fig.tight_layout()
fig.savefig(HERE / "fig_partitions.png", dpi=150)
'''

REQUIRED = {"trajectory.csv": {"t", "atom_count", "com"}, "partitions.csv": {"t", "boundaries"}}


def emit_figures(directory) -> list[Path]:
    """Write plot_atoms.py, plot_atom_count.py and plot_partitions.py into ``directory``."""
    d = Path(directory)
    for name, cols in REQUIRED.items():
        if not (d / name).exists():
            raise FileNotFoundError(f"{d / name} is missing; run simulate first")
        header, _ = read_csv(d / name)
        missing = cols - set(header)
        if missing:
            raise ValueError(f"{name} lacks columns: {', '.join(sorted(missing))}")
    if not (d / "measures.jsonl").exists():
        raise FileNotFoundError(f"{d / 'measures.jsonl'} is missing; run simulate first")
    return [atomic_write(d / "plot_atoms.py", ATOMS), atomic_write(d / "plot_atom_count.py", COUNT),
            atomic_write(d / "plot_partitions.py", PARTITIONS)]
