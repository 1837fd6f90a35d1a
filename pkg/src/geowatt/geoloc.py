"""NMEA-0183 sentence parsing and great-circle distance.

Understands the GGA and RMC sentence types emitted by consumer GPS
receivers. Any other validly framed sentence comes back as an
UnsupportedSentence value so an ingest loop can skip receiver chatter
without treating it as corruption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import time
from enum import Enum

EARTH_RADIUS_M = 6_371_000.0

# Degrees latitude per metre along a meridian; handy for building test traces.
METERS_PER_DEGREE = EARTH_RADIUS_M * math.pi / 180.0

_HEXDIGITS = set("0123456789ABCDEFabcdef")


class NmeaError(ValueError):
    """Base class for rejected NMEA input."""


class ChecksumMismatch(NmeaError):
    """Transmitted checksum differs from the XOR of the payload bytes."""


class FormatError(NmeaError):
    """Framing, field count, or field syntax is wrong."""


class VoidFix(NmeaError):
    """The receiver reports no position lock (RMC status field 'V')."""


class FixQuality(Enum):
    NO_FIX = "no_fix"
    FIX = "fix"
    VOID = "void"


@dataclass(frozen=True)
class NmeaSentence:
    """One framed sentence: '$' + payload + '*' + two hex digits."""

    raw_line: str
    talker_type: str
    fields: tuple[str, ...]
    checksum: str

    @property
    def payload(self) -> str:
        return ",".join((self.talker_type,) + self.fields)


@dataclass(frozen=True)
class UnsupportedSentence:
    """Validly framed sentence of a type this parser does not interpret."""

    talker_type: str


@dataclass(frozen=True)
class GeoFix:
    """A position report extracted from one sentence.

    Latitude and longitude are decimal degrees. When quality is not FIX the
    coordinates are placeholders and must not be consumed downstream.
    """

    timestamp: time
    latitude: float
    longitude: float
    quality: FixQuality
    source_sentence: str

    @property
    def usable(self) -> bool:
        return self.quality is FixQuality.FIX


def nmea_checksum(payload: str | bytes) -> str:
    """XOR every payload byte (the text between '$' and '*'), as two upper-case hex digits."""
    if isinstance(payload, str):
        payload = payload.encode("ascii")
    acc = 0
    for b in payload:
        acc ^= b
    return format(acc, "02X")


def frame_sentence(payload: str) -> str:
    """Wrap a payload into a full sentence with '$', '*' and its checksum."""
    return f"${payload}*{nmea_checksum(payload)}"


def split_frame(line: str) -> NmeaSentence:
    """Validate framing and checksum, returning the raw sentence structure.

    Raises:
        FormatError: framing is wrong (no '$', no '*XX' tail, non-ASCII).
        ChecksumMismatch: the stated checksum does not match the payload.
    """
    if not isinstance(line, str):
        raise FormatError("sentence must be text")
    raw = line.rstrip("\r\n")
    if not raw.isascii():
        raise FormatError("sentence contains non-ASCII bytes")
    if not raw.startswith("$"):
        raise FormatError("sentence must start with '$'")
    star = raw.rfind("*")
    if star == -1 or len(raw) - star - 1 != 2:
        raise FormatError("sentence must end with '*' and two checksum digits")
    stated = raw[star + 1 :]
    if not set(stated) <= _HEXDIGITS:
        raise FormatError(f"checksum digits {stated!r} are not hex")
    payload = raw[1:star]
    if not payload:
        raise FormatError("empty payload")
    computed = nmea_checksum(payload)
    if stated.upper() != computed:
        raise ChecksumMismatch(f"stated {stated.upper()} != computed {computed}")
    parts = payload.split(",")
    return NmeaSentence(
        raw_line=raw,
        talker_type=parts[0],
        fields=tuple(parts[1:]),
        checksum=computed,
    )


def ddmm_to_degrees(text: str, hemisphere: str) -> float:
    """Convert NMEA ddmm.mmmm (or dddmm.mmmm) plus hemisphere to decimal degrees.

    The final two digits before the decimal point are whole minutes; S and W
    negate the result.

    >>> ddmm_to_degrees("4807.038", "N")
    48.1173
    """
    if hemisphere not in ("N", "S", "E", "W"):
        raise FormatError(f"bad hemisphere {hemisphere!r}")
    dot = text.find(".")
    head = text[:dot] if dot != -1 else text
    if len(head) < 3 or not head.isdigit():
        raise FormatError(f"coordinate {text!r} too short for ddmm layout")
    try:
        degrees = int(head[:-2])
        minutes = float(text[len(head) - 2 :])
    except ValueError as exc:
        raise FormatError(f"coordinate {text!r} is not numeric") from exc
    if not 0.0 <= minutes < 60.0:
        raise FormatError(f"minutes {minutes} out of [0, 60)")
    value = degrees + minutes / 60.0
    if hemisphere in ("S", "W"):
        value = -value
    return value


def degrees_to_ddmm(value: float, *, lon: bool) -> tuple[str, str]:
    """Inverse of ddmm_to_degrees, minutes kept to four decimal places."""
    if lon:
        hemi = "E" if value >= 0 else "W"
        width = 3
    else:
        hemi = "N" if value >= 0 else "S"
        width = 2
    mag = abs(value)
    degrees = int(mag)
    minutes = (mag - degrees) * 60.0
    if minutes >= 59.99995:  # carry after rounding to 4 places
        degrees += 1
        minutes = 0.0
    return f"{degrees:0{width}d}{minutes:07.4f}", hemi


def _parse_time(text: str) -> time:
    head, _, frac = text.partition(".")
    if len(head) != 6 or not head.isdigit():
        raise FormatError(f"bad time field {text!r}")
    hh, mm, ss = int(head[:2]), int(head[2:4]), int(head[4:6])
    micros = 0
    if frac:
        if not frac.isdigit():
            raise FormatError(f"bad time fraction {text!r}")
        micros = round(float("0." + frac) * 1_000_000)
    try:
        return time(hh, mm, ss, micros)
    except ValueError as exc:
        raise FormatError(f"time field {text!r} out of range") from exc


def _validated(lat: float, lon: float) -> tuple[float, float]:
    if not -90.0 <= lat <= 90.0:
        raise FormatError(f"latitude {lat} out of range")
    if not -180.0 <= lon <= 180.0:
        raise FormatError(f"longitude {lon} out of range")
    return lat, lon


def _parse_gga(sentence: NmeaSentence) -> GeoFix:
    f = sentence.fields
    # time, lat, NS, lon, EW, quality, sats, hdop, alt, M, geoid, M, age, station
    if len(f) != 14:
        raise FormatError(f"GGA expects 14 fields, got {len(f)}")
    at = _parse_time(f[0])
    if not f[5].isdigit():
        raise FormatError(f"bad GGA quality field {f[5]!r}")
    if int(f[5]) == 0:
        # No lock: coordinates (often blank) are placeholders only.
        return GeoFix(at, 0.0, 0.0, FixQuality.NO_FIX, sentence.raw_line)
    lat = ddmm_to_degrees(f[1], f[2])
    lon = ddmm_to_degrees(f[3], f[4])
    lat, lon = _validated(lat, lon)
    return GeoFix(at, lat, lon, FixQuality.FIX, sentence.raw_line)


def _parse_rmc(sentence: NmeaSentence) -> GeoFix:
    f = sentence.fields
    # time, status, lat, NS, lon, EW, speed, course, date, magvar, varEW [, mode]
    if len(f) not in (11, 12):
        raise FormatError(f"RMC expects 11 or 12 fields, got {len(f)}")
    at = _parse_time(f[0])
    if f[1] == "V":
        raise VoidFix("receiver has no lock (RMC status V)")
    if f[1] != "A":
        raise FormatError(f"bad RMC status field {f[1]!r}")
    lat = ddmm_to_degrees(f[2], f[3])
    lon = ddmm_to_degrees(f[4], f[5])
    lat, lon = _validated(lat, lon)
    return GeoFix(at, lat, lon, FixQuality.FIX, sentence.raw_line)


def parse_nmea(line: str) -> GeoFix | UnsupportedSentence:
    """Parse one sentence into a GeoFix, or UnsupportedSentence for other types.

    Raises ChecksumMismatch, FormatError, or VoidFix; never anything else.
    """
    sentence = split_frame(line)
    talker = sentence.talker_type
    if len(talker) == 5 and talker.isalnum():
        if talker.endswith("GGA"):
            return _parse_gga(sentence)
        if talker.endswith("RMC"):
            return _parse_rmc(sentence)
        return UnsupportedSentence(talker)
    raise FormatError(f"bad sentence type field {talker!r}")


def gga_sentence(at: time, lat: float, lon: float, *, quality: int = 1) -> str:
    """Build a framed GGA sentence, the shape scenario scripts feed back in."""
    lat_t, ns = degrees_to_ddmm(lat, lon=False)
    lon_t, ew = degrees_to_ddmm(lon, lon=True)
    hhmmss = f"{at.hour:02d}{at.minute:02d}{at.second:02d}"
    payload = f"GPGGA,{hhmmss},{lat_t},{ns},{lon_t},{ew},{quality},08,0.9,150.0,M,-33.0,M,,"
    return frame_sentence(payload)


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres on a sphere of radius 6,371,000 m.

    >>> round(haversine_m(0.0, 0.0, 1.0, 0.0), 2)
    111194.93
    """
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    # float noise can push a just past 1.0 for antipodal points
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))
