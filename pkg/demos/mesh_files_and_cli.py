"""The file format and the command line, exercised from Python.

The ASCII mesh format is three blocks: vertices, tets, and tagged
boundary faces (D for essential, N for natural).  This script writes a
mesh, validates it with the `check-mesh` subcommand, runs a two-level
`run` on it, and reads the resulting CSVs back.  Everything the command
line does is also callable as plain functions, which is what the tests
use.
"""

import csv
import tempfile
from pathlib import Path

from curlcurl.cases import generate_cube
from curlcurl.cli import main
from curlcurl.mesh import read_mesh, write_mesh

workdir = Path(tempfile.mkdtemp(prefix="curlcurl-demo-"))
mesh_path = workdir / "cube.mesh"
out_path = workdir / "levels.csv"

# write, reread, and compare the mesh roundtrip
mesh = generate_cube(2, boundary="N")
write_mesh(mesh, mesh_path)
again = read_mesh(mesh_path)
assert again.num_tets == mesh.num_tets
print(f"wrote and reread {mesh_path.name}: {again.num_tets} tets")
print(f"first lines:")
for line in mesh_path.read_text().splitlines()[:4]:
    print(f"  {line}")

# the subcommands return process exit codes
code = main(["check-mesh", str(mesh_path)])
assert code == 0

code = main([
    "run", "--case", "file", "--mesh", str(mesh_path),
    "--degree", "0", "--levels", "2", "--estimator", "patch",
    "--theta", "0.5", "--out", str(out_path),
])
assert code == 0

with open(out_path, newline="") as fh:
    rows = list(csv.DictReader(fh))
print(f"\n{out_path.name}:")
for row in rows:
    print(f"  level {row['level']}: h = {float(row['h']):.4f}, "
          f"error = {float(row['error']):.6e}, "
          f"upper bound = {float(row['upper_bound']):.6e}")

marks = out_path.with_name("levels.marks.csv")
with open(marks, newline="") as fh:
    marked = list(csv.DictReader(fh))
last_level = rows[-1]["level"]
n_last = sum(1 for m in marked if m["level"] == last_level)
print(f"{marks.name}: {n_last} edges marked on the last level")
print(f"\nartifacts left in {workdir}")
