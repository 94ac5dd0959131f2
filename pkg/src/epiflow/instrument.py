"""Exposure to WWI military camps: camp strength, distances and the instrument.

The instrument for a location is ``sum_j [ln(strength_j) - ln(dist_j)]``
over camps ``j``, with distances in kilometres. Because the value shifts by
``J * ln(unit ratio)`` under a change of distance unit, the unit is recorded
with every output.
"""
from __future__ import annotations

import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ValidationError

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DISTANCE_UNIT = "km"
STRENGTH_WINDOW = (dt.date(1918, 7, 1), dt.date(1918, 9, 30))


def _check_coord(lat: float, lon: float):
    if not (math.isfinite(lat) and math.isfinite(lon)) or abs(lat) > 90 or abs(lon) > 180:
        raise ValidationError(f"invalid coordinates ({lat}, {lon})")


def geodesic_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle (haversine) distance in km between two (lat, lon) points."""
    (lat1, lon1), (lat2, lon2) = a, b
    _check_coord(lat1, lon1)
    _check_coord(lat2, lon2)
    p1, p2 = math.radians(lat1), math.radians(lat2)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class CampRecord:
    camp_id: str
    latitude: float
    longitude: float
    monthly_strength: Mapping[dt.date, float]

    def __post_init__(self):
        _check_coord(self.latitude, self.longitude)
        for month, v in self.monthly_strength.items():
            if v < 0:
                raise ValidationError(f"camp {self.camp_id}: negative strength in {month}")


def camp_strength(camp: CampRecord, window: tuple[dt.date, dt.date] = STRENGTH_WINDOW) -> float:
    """Mean monthly troop strength over the months available in ``window``."""
    lo, hi = window
    vals = [v for m, v in camp.monthly_strength.items() if lo <= m <= hi and v is not None and math.isfinite(v)]
    if not vals:
        raise ValidationError(f"camp {camp.camp_id}: no strength data between {lo} and {hi}")
    return sum(vals) / len(vals)


@dataclass(frozen=True)
class InstrumentValue:
    location_id: str
    z: float
    n_camps: int
    unit: str = DISTANCE_UNIT


def instrument_z(
    location_id: str,
    location: tuple[float, float],
    camps: Iterable[tuple[str, tuple[float, float], float]],
) -> InstrumentValue:
    """Sum of log strength minus log distance over camps.

    ``camps`` yields ``(camp_id, (lat, lon), strength)``. Camps with zero
    strength are skipped with a warning; a location sitting on a camp
    (zero distance) is an error.
    """
    z = 0.0
    n = 0
    for camp_id, coords, strength in camps:
        if strength <= 0:
            warnings.warn(f"camp {camp_id} has no troops; excluded from instrument")
            continue
        d = geodesic_distance(location, coords)
        if d <= 0:
            raise ValidationError(f"location {location_id} coincides with camp {camp_id}")
        z += math.log(strength) - math.log(d)
        n += 1
    if n == 0:
        raise ValidationError(f"location {location_id}: no camps with positive strength")
    return InstrumentValue(location_id, z, n)


def instrument_table(
    locations: Mapping[str, tuple[float, float]],
    camps: Iterable[CampRecord],
    window: tuple[dt.date, dt.date] = STRENGTH_WINDOW,
) -> list[InstrumentValue]:
    camp_list = []
    for c in camps:
        try:
            camp_list.append((c.camp_id, (c.latitude, c.longitude), camp_strength(c, window)))
        except ValidationError as exc:
            log.warning("%s; camp excluded", exc)
    return [instrument_z(loc, locations[loc], camp_list) for loc in sorted(locations)]
