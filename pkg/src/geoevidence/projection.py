"""Spherical Albers equal-area conic projection.

Buffer distances and area metrics need planar meters, so geographic
datasets are projected before any geometry math. Defaults are the
CONUS-style conic (standard parallels 29.5/45.5 N, origin 40 N, central
meridian 96 W) on the authalic sphere. The spherical form keeps the math
self-contained; for the area-ratio metrics computed downstream the
ellipsoidal correction is under 0.5%.

Forward equations:
    n    = (sin(lat1) + sin(lat2)) / 2
    C    = cos^2(lat1) + 2 n sin(lat1)
    rho  = R sqrt(C - 2 n sin(lat)) / n
    theta = n (lon - lon0)
    x = rho sin(theta),  y = rho0 - rho cos(theta)

The inverse is the exact algebraic inversion, used when exporting
projected layers back to WGS84 longitude/latitude.
"""

import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry.base import BaseGeometry

# CRS markers carried by datasets and layers.
GEOGRAPHIC_CRS = "geographic-wgs84"
PROJECTED_CRS = "albers-conic-projected"

AUTHALIC_RADIUS_M = 6371007.181


@dataclass(frozen=True)
class AlbersParams:
    lat_1: float = 29.5
    lat_2: float = 45.5
    lat_0: float = 40.0
    lon_0: float = -96.0
    radius: float = AUTHALIC_RADIUS_M

    @property
    def n(self) -> float:
        return (math.sin(math.radians(self.lat_1)) + math.sin(math.radians(self.lat_2))) / 2.0

    @property
    def big_c(self) -> float:
        phi1 = math.radians(self.lat_1)
        return math.cos(phi1) ** 2 + 2.0 * self.n * math.sin(phi1)

    @property
    def rho_0(self) -> float:
        return self._rho(math.radians(self.lat_0))

    def _rho(self, phi: float) -> float:
        return self.radius * math.sqrt(self.big_c - 2.0 * self.n * math.sin(phi)) / self.n


DEFAULT_PARAMS = AlbersParams()


def albers_forward(lon, lat, params: AlbersParams = DEFAULT_PARAMS):
    """Project longitude/latitude degrees to planar meters. Vectorized."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    n = params.n
    phi = np.radians(lat)
    rho = params.radius * np.sqrt(params.big_c - 2.0 * n * np.sin(phi)) / n
    theta = n * np.radians(lon - params.lon_0)
    x = rho * np.sin(theta)
    y = params.rho_0 - rho * np.cos(theta)
    return x, y


def albers_inverse(x, y, params: AlbersParams = DEFAULT_PARAMS):
    """Planar meters back to longitude/latitude degrees. Vectorized."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = params.n
    dy = params.rho_0 - y
    rho = np.hypot(x, dy)
    theta = np.arctan2(x, dy)
    sin_phi = (params.big_c - (rho * n / params.radius) ** 2) / (2.0 * n)
    lat = np.degrees(np.arcsin(np.clip(sin_phi, -1.0, 1.0)))
    lon = params.lon_0 + np.degrees(theta / n)
    return lon, lat


def project_geometry(geom: BaseGeometry, params: AlbersParams = DEFAULT_PARAMS) -> BaseGeometry:
    def fwd(coords: np.ndarray) -> np.ndarray:
        x, y = albers_forward(coords[:, 0], coords[:, 1], params)
        return np.column_stack([x, y])

    return shapely.transform(geom, fwd)


def unproject_geometry(geom: BaseGeometry, params: AlbersParams = DEFAULT_PARAMS) -> BaseGeometry:
    def inv(coords: np.ndarray) -> np.ndarray:
        lon, lat = albers_inverse(coords[:, 0], coords[:, 1], params)
        return np.column_stack([lon, lat])

    return shapely.transform(geom, inv)
