"""Spherical Web-Mercator projection between WGS-84 and the map plane.

All georeferenced inputs (aerial imagery, OSM extracts, camera calibration
points) live on the same flat plane, so a single spherical projection with
the web-tile earth radius keeps everything aligned. z coordinates are not
geodetic and pass through the rest of the system untouched.
"""

import math

EARTH_RADIUS_M = 6378137.0

# Latitude where the square web-map tile ends; poles are not projectable.
MERCATOR_LAT_CUTOFF_DEG = 85.05113


class OutOfDomain(ValueError):
    """Coordinate outside the projectable latitude band."""


def wgs84_to_mercator(lat: float, lon: float) -> tuple[float, float]:
    """Forward spherical Mercator: degrees -> meters on the map plane."""
    if abs(lat) > MERCATOR_LAT_CUTOFF_DEG:
        raise OutOfDomain(f"latitude {lat} exceeds Mercator cutoff ±{MERCATOR_LAT_CUTOFF_DEG}")
    if abs(lon) > 180.0:
        raise OutOfDomain(f"longitude {lon} outside ±180")
    x = EARTH_RADIUS_M * math.radians(lon)
    y = EARTH_RADIUS_M * math.log(math.tan(math.pi / 4.0 + math.radians(lat) / 2.0))
    return x, y


def mercator_to_wgs84(x: float, y: float) -> tuple[float, float]:
    """Inverse spherical Mercator: meters on the map plane -> degrees."""
    lon = math.degrees(x / EARTH_RADIUS_M)
    lat = math.degrees(2.0 * math.atan(math.exp(y / EARTH_RADIUS_M)) - math.pi / 2.0)
    return lat, lon
