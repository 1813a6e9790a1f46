"""Deployment geometry: AP corners, user circle, RIS planar grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, ConfigError


@dataclass(frozen=True)
class Geometry:
    """3D positions of every radiating element in the deployment.

    The RIS is a vertical square grid in the x-z plane centred on
    ``ris_center`` with quarter-wavelength element spacing; its broadside
    normal points along +y.  All coordinates in metres.
    """

    ap_positions: np.ndarray          # (N, 3)
    user_positions: np.ndarray        # (K, 3)
    ris_center: np.ndarray            # (3,)
    ris_element_positions: np.ndarray  # (M, 3)
    ris_normal: np.ndarray            # (3,) unit vector

    @property
    def num_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def num_ris_elements(self) -> int:
        return self.ris_element_positions.shape[0]


def build_geometry(config: SystemConfig) -> Geometry:
    """Place APs on the area corners, users on a circle around the RIS.

    APs cycle through the four corners of the square service area starting
    with the two opposite ones; K users sit equally spaced on the configured
    circle around the RIS centre, projected to user height.
    """
    a = config.area_half_width_m
    corners = [(-a, -a), (a, a), (-a, a), (a, -a)]
    ap_positions = np.array(
        [[*corners[n % 4], config.ap_height_m] for n in range(config.num_aps)],
        dtype=float,
    )

    radius = config.user_circle_radius_m
    angles = 2.0 * np.pi * np.arange(config.num_users) / config.num_users
    user_positions = np.column_stack([
        radius * np.cos(angles),
        radius * np.sin(angles),
        np.full(config.num_users, config.user_height_m),
    ])

    ris_center = np.array([0.0, 0.0, config.ris_height_m])
    side = config.grid_side
    spacing = config.wavelength_m / 4.0
    offs = (np.arange(side) - (side - 1) / 2.0) * spacing
    # grid in the x-z plane, row-major over (z, x)
    xs, zs = np.meshgrid(offs, offs, indexing="xy")
    elems = np.column_stack([
        xs.ravel(),
        np.zeros(side * side),
        zs.ravel(),
    ]) + ris_center
    ris_normal = np.array([0.0, 1.0, 0.0])

    return Geometry(
        ap_positions=ap_positions,
        user_positions=user_positions,
        ris_center=ris_center,
        ris_element_positions=elems,
        ris_normal=ris_normal,
    )


def ap_antenna_positions(geometry: Geometry, config: SystemConfig, n: int) -> np.ndarray:
    """Element positions of AP ``n``'s half-wavelength ULA along x, shape (L, 3)."""
    L = config.antennas_per_ap
    offs = (np.arange(L) - (L - 1) / 2.0) * (config.wavelength_m / 2.0)
    pos = np.tile(geometry.ap_positions[n], (L, 1))
    pos[:, 0] += offs
    return pos


def ris_correlation_matrix(geometry: Geometry, wavelength_m: float) -> np.ndarray:
    """Spatial correlation of an isotropic-scattering field over the grid.

    Entry (m, m') is sinc(2 d / wavelength) with d the element distance and
    sinc(x) = sin(pi x)/(pi x); unit diagonal, symmetric PSD.
    """
    pos = geometry.ris_element_positions
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    r = np.sinc(2.0 * d / wavelength_m)
    return r.astype(complex)


def geometry_to_dict(geometry: Geometry) -> dict:
    return {
        "schema": "geometry-v1",
        "ap_positions": geometry.ap_positions.tolist(),
        "user_positions": geometry.user_positions.tolist(),
        "ris_center": geometry.ris_center.tolist(),
        "ris_element_positions": geometry.ris_element_positions.tolist(),
        "ris_normal": geometry.ris_normal.tolist(),
    }


def geometry_from_dict(d: dict) -> Geometry:
    if d.get("schema") != "geometry-v1":
        raise ConfigError(f"unsupported geometry schema {d.get('schema')!r}")
    return Geometry(
        ap_positions=np.asarray(d["ap_positions"], dtype=float),
        user_positions=np.asarray(d["user_positions"], dtype=float),
        ris_center=np.asarray(d["ris_center"], dtype=float),
        ris_element_positions=np.asarray(d["ris_element_positions"], dtype=float),
        ris_normal=np.asarray(d["ris_normal"], dtype=float),
    )
