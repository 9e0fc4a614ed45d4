"""Identities that hold the discretization together.

Three checks, all exact up to rounding:

  1. partition of unity: the lowest-order edge functions reassemble the
     identity matrix, sum_e tau_e (x) psi_e(x) = I at every point;
  2. the defining edge moments: the tangential moment of psi_e along
     edge e' is |e| when e' = e and zero otherwise;
  3. Piola transport: mapping a Nedelec field covariantly commutes with
     the curl through the contravariant map.

These are the invariants the estimator leans on, so they come first.
"""

import numpy as np

from curlcurl.cases import generate_cube
from curlcurl.piola import AffineMap, contravariant_piola, covariant_piola
from curlcurl.quadrature import tetrahedron_rule
from curlcurl.spaces import NEDELEC, DofSpace, basis_eval, edge_function

mesh = generate_cube(1, boundary="N")
rule = tetrahedron_rule(4)

# 1. partition of unity ------------------------------------------------
space = DofSpace(mesh, NEDELEC, 0)
worst = 0.0
for t in range(mesh.num_tets):
    values = basis_eval(space, t, rule.points)[0]
    acc = np.zeros((len(rule.points), 3, 3))
    for le in range(6):
        tau = mesh.edge_tangents[mesh.tet_edges[t, le]]
        acc += tau[None, :, None] * values[:, le, None, :]
    worst = max(worst, float(np.abs(acc - np.eye(3)).max()))
print(f"partition of unity: max |sum tau (x) psi - I| = {worst:.2e}")

# 2. edge moments ------------------------------------------------------
e = 0
psi = edge_function(mesh, e)
moments = []
glq = np.polynomial.legendre.leggauss(4)
for ep in range(min(mesh.num_edges, 8)):
    a, b = mesh.edges[ep]
    va, vb = mesh.vertices[a], mesh.vertices[b]
    # map Gauss points from [-1, 1] onto the edge and integrate psi . tau
    pts = 0.5 * (va + vb) + 0.5 * np.outer(glq[0], vb - va)
    length = np.linalg.norm(vb - va)
    tot = 0.0
    for t in range(mesh.num_tets):
        if ep in mesh.tet_edges[t]:
            v0 = mesh.vertices[mesh.tets[t, 0]]
            ref = (pts - v0) @ mesh.inv_jacobians[t].T
            vals = psi.eval([t], ref)[0]
            tot = 0.5 * length * (glq[1][:, None] * vals).sum(axis=0) @ (
                (vb - va) / length
            )
            break
    moments.append(tot)
    marker = "<-- its own edge" if ep == e else ""
    print(f"  edge {ep}: moment {tot: .3e} {marker}")
print(f"edge moments: psi_{e} integrates to |e| = "
      f"{np.linalg.norm(mesh.vertices[mesh.edges[e][1]] - mesh.vertices[mesh.edges[e][0]]):.6f} "
      f"on its edge, 0 elsewhere")

# 3. Piola commuting ---------------------------------------------------
rng = np.random.default_rng(0)
B = rng.normal(size=(3, 3))
while abs(np.linalg.det(B)) < 0.3:
    B = rng.normal(size=(3, 3))
amap = AffineMap(B, rng.normal(size=3))


def field(x):
    return np.column_stack([x[:, 1] ** 2, x[:, 0] * x[:, 2], x[:, 2]])


def curl_field(x):
    return np.column_stack(
        [-x[:, 0], np.zeros(len(x)), x[:, 2] - 2.0 * x[:, 1]]
    )


pts = rng.uniform(0.1, 0.3, size=(40, 3))
pushed = covariant_piola(amap, field)
pushed_curl = contravariant_piola(amap, curl_field)
h = 1e-6
curl_of_pushed = np.empty((len(pts), 3))
for i, x in enumerate(pts):
    J = np.empty((3, 3))
    for k in range(3):
        dx = np.zeros(3)
        dx[k] = h
        J[:, k] = (pushed(x[None] + dx)[0] - pushed(x[None] - dx)[0]) / (2 * h)
    curl_of_pushed[i] = [J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]]
gap = np.abs(curl_of_pushed - pushed_curl(pts)).max()
print(f"piola commuting: |curl(covariant push) - contravariant push of curl| "
      f"= {gap:.2e} (finite differences)")
