"""Affine maps between tetrahedra and the Piola field transports.

The covariant transport preserves tangential traces (H(curl) fields),
the contravariant one preserves normal fluxes up to orientation
(H(div) fields), and the pair intertwines the curl: taking the curl of
a covariantly mapped field equals contravariantly mapping the curl.
"""

from __future__ import annotations

import numpy as np

from .spaces import NEDELEC, DofSpace

__all__ = [
    "AffineMap",
    "covariant_piola",
    "contravariant_piola",
    "reflection_map",
    "covariant_transport",
]


class AffineMap:
    """x -> J x + b with invertible J; det and its sign are cached."""

    def __init__(self, matrix, offset):
        self.matrix = np.asarray(matrix, dtype=float).reshape(3, 3)
        self.offset = np.asarray(offset, dtype=float).reshape(3)
        self.det = float(np.linalg.det(self.matrix))
        if abs(self.det) < 1e-14:
            raise ValueError("affine map is singular")
        self.sign = 1.0 if self.det > 0 else -1.0
        self.inv_matrix = np.linalg.inv(self.matrix)

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_vertices(cls, src, dst) -> "AffineMap":
        """The unique affine map sending the 4 src points to the 4 dst points."""
        src = np.asarray(src, dtype=float).reshape(4, 3)
        dst = np.asarray(dst, dtype=float).reshape(4, 3)
        Dx = (src[1:] - src[0]).T
        Dy = (dst[1:] - dst[0]).T
        J = Dy @ np.linalg.inv(Dx)
        return cls(J, dst[0] - J @ src[0])

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T + self.offset

    def inverse(self) -> "AffineMap":
        return AffineMap(self.inv_matrix, -self.inv_matrix @ self.offset)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """The map x -> self(other(x))."""
        return AffineMap(
            self.matrix @ other.matrix, self.matrix @ other.offset + self.offset
        )


def covariant_piola(amap: AffineMap, field):
    """Transport of H(curl) fields: y -> J^{-T} field(T^{-1} y)."""
    inv = amap.inverse()

    def mapped(pts):
        return np.asarray(field(inv.apply(pts)), dtype=float) @ amap.inv_matrix

    return mapped


def contravariant_piola(amap: AffineMap, field):
    """Transport of H(div) fields: y -> (det J)^{-1} J field(T^{-1} y)."""
    inv = amap.inverse()
    scale = amap.matrix / amap.det

    def mapped(pts):
        return np.asarray(field(inv.apply(pts)), dtype=float) @ scale.T

    return mapped


def reflection_map(verts_in, verts_out) -> AffineMap:
    """The affine map between two face-sharing tets fixing the shared face.

    The three shared vertices (matched by coordinates) map to themselves
    and the remaining vertex of `verts_in` maps to the remaining vertex of
    `verts_out`; the result is orientation-reversing (sign = -1) whenever
    the tets sit on opposite sides of the face.
    """
    verts_in = np.asarray(verts_in, dtype=float).reshape(4, 3)
    verts_out = np.asarray(verts_out, dtype=float).reshape(4, 3)
    scale = max(np.abs(verts_in).max(), np.abs(verts_out).max(), 1.0)
    src, dst = [], []
    used = set()
    free_in = []
    for i in range(4):
        hits = [
            j
            for j in range(4)
            if j not in used
            and np.abs(verts_in[i] - verts_out[j]).max() < 1e-12 * scale
        ]
        if hits:
            used.add(hits[0])
            src.append(verts_in[i])
            dst.append(verts_out[hits[0]])
        else:
            free_in.append(i)
    if len(src) != 3 or len(free_in) != 1:
        raise ValueError("tets do not share exactly one face")
    free_out = [j for j in range(4) if j not in used]
    src.append(verts_in[free_in[0]])
    dst.append(verts_out[free_out[0]])
    return AffineMap.from_vertices(src, dst)


def covariant_transport(
    amap: AffineMap, field, space: DofSpace, tet: int, quad_degree: int | None = None
) -> np.ndarray:
    """Local dof values on the target tet of the covariantly mapped field.

    `field` is a callable on the source tet; the image of the source tet
    under the map must cover the target tet.  With a curl-conforming
    target space this is the coefficient-level version of
    covariant_piola, exact for fields in the mapped space.
    """
    if space.family != NEDELEC:
        raise ValueError("covariant transport targets a Nedelec space")
    return space.local_dof_values(covariant_piola(amap, field), quad_degree, [tet])[0]
