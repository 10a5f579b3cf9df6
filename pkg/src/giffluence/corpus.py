"""Post ingestion: parsing, trading-day assignment and exogenous controls.

Two representations of a corpus live here.  :class:`PostRecord` is the
one-post value object used by :func:`parse_post` and by the reference
(streaming) index path.  :class:`PostBatch` holds the same information in
columnar numpy form and is what the bulk reader :func:`read_posts` and the
vectorized index builder work with.  Both paths share the extraction rules
below and are cross-checked in the test-suite.
"""

from __future__ import annotations

import bisect
import enum
import glob as _glob
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Sequence
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    GapError,
    InvalidDeclaration,
    MalformedRecord,
    MissingTimestamp,
    OutOfCalendar,
    SchemaMismatch,
)

try:
    import orjson

    _loads = orjson.loads

    def _dumps(obj) -> str:
        return orjson.dumps(obj).decode()

except ImportError:  # pragma: no cover - exercised only without orjson
    _loads = json.loads

    def _dumps(obj) -> str:
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


US_PER_SECOND = 1_000_000
US_PER_DAY = 86_400 * US_PER_SECOND
SLOT_US = 1_800 * US_PER_SECOND
N_SLOTS = 48

GIF_URL_RE = re.compile(r"https?://media\d*\.giphy\.com/media/([A-Za-z0-9_-]+)/giphy\.gif")
# A cashtag is "$" + letter-led ticker, optionally with a share-class suffix
# ($BRK.B).  "$5" and "US$ABC" are not cashtags.
CASHTAG_RE = re.compile(r"\$(?<![\w$]\$)([A-Za-z][A-Za-z0-9]{0,5}(?:\.[A-Za-z]{1,2})?)(?![A-Za-z0-9])")

# Sentinel variants for whole-corpus passes: "\x00" separates posts.
_GIF_SCAN_RE = re.compile("\x00|" + GIF_URL_RE.pattern)
_CASHTAG_SCAN_RE = re.compile(
    "\x00|" + r"\$(?<![\w$]\$)([A-Z][A-Z0-9]{0,5}(?:\.[A-Z]{1,2})?)(?![A-Za-z0-9])"
)


class Declaration(enum.Enum):
    BULLISH = "BULLISH"
    BEARISH = "BEARISH"
    NONE = "NONE"

    @property
    def sign(self) -> int:
        return _DECL_SIGN[self]

    @classmethod
    def from_sign(cls, s: int) -> "Declaration":
        return {1: cls.BULLISH, -1: cls.BEARISH, 0: cls.NONE}[int(s)]


_DECL_SIGN = {Declaration.BULLISH: 1, Declaration.BEARISH: -1, Declaration.NONE: 0}


def _declaration_sign(value) -> int:
    """Map a raw declaration value to +1/-1/0.

    Unrecognised strings are treated as "no declaration"; anything that is
    not a string or null is an error.
    """
    if value is None:
        return 0
    if isinstance(value, str):
        v = value.strip().lower()
        if v == "bullish":
            return 1
        if v == "bearish":
            return -1
        return 0
    if isinstance(value, Declaration):
        return value.sign
    raise InvalidDeclaration(f"declaration must be a string or null, got {value!r}")


@dataclass(frozen=True)
class PostSchema:
    """Where each canonical field lives in a raw JSON object.

    Values are key names; dotted names walk nested objects
    (``"entities.sentiment.basic"``).
    """

    post_id: str = "id"
    timestamp: str = "created_at"
    user_id: str = "user_id"
    body: str = "body"
    declaration: str = "declaration"
    text_score: str = "text_score"

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "PostSchema":
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown schema fields: {sorted(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "PostSchema":
        with open(path, encoding="utf-8") as fh:
            try:
                mapping = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"schema file {path} is not valid JSON: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError(f"schema file {path} must hold a JSON object")
        return cls.from_mapping(mapping)

    def getter(self, name: str):
        path = getattr(self, name).split(".")
        if len(path) == 1:
            key = path[0]
            return lambda obj: obj.get(key)

        def get(obj):
            for key in path:
                if not isinstance(obj, dict):
                    return None
                obj = obj.get(key)
            return obj

        return get


DEFAULT_SCHEMA = PostSchema()


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    timestamp: datetime
    user_id: str
    body: str
    cashtags: tuple[str, ...]
    gif_ids: tuple[str, ...]
    declaration: Declaration = Declaration.NONE
    text_score: float | None = None

    @property
    def market_relevant(self) -> bool:
        """False for posts without cashtags (flagged, not dropped)."""
        return bool(self.cashtags)

    @property
    def has_gif(self) -> bool:
        return bool(self.gif_ids)


def _unique(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def extract_cashtags(body: str) -> tuple[str, ...]:
    return _unique(m.upper() for m in CASHTAG_RE.findall(body))


def extract_gif_ids(body: str) -> tuple[str, ...]:
    if "giphy" not in body:
        return ()
    return _unique(GIF_URL_RE.findall(body))


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

_ISO_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2})(?::(\d{2})(?:[.,](\d+))?)?"
    r"\s*(Z|z|[+-]\d{2}(?::?\d{2})?)$"
)


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 instant with an explicit offset into aware UTC."""
    if not isinstance(text, str):
        raise MalformedRecord(f"timestamp must be a string, got {text!r}")
    m = _ISO_RE.match(text.strip())
    if m is None:
        raise MalformedRecord(f"unparseable timestamp {text!r} (ISO-8601 with offset required)")
    y, mo, d, hh, mi, ss, frac, tz = m.groups()
    us = int((frac or "0")[:6].ljust(6, "0"))
    if tz in ("Z", "z"):
        off = timedelta(0)
    else:
        sign = -1 if tz[0] == "-" else 1
        digits = tz[1:].replace(":", "")
        off = sign * timedelta(hours=int(digits[:2]), minutes=int(digits[2:4] or 0))
    try:
        local = datetime(int(y), int(mo), int(d), int(hh), int(mi), int(ss or 0), us,
                         tzinfo=timezone(off))
    except ValueError as exc:
        raise MalformedRecord(f"invalid timestamp {text!r}: {exc}") from exc
    return local.astimezone(timezone.utc)


def _to_us(ts: datetime) -> int:
    if ts.tzinfo is None:
        raise MalformedRecord("naive datetime; an explicit offset is required")
    delta = ts - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * US_PER_SECOND + delta.microseconds


def _from_us(us: int) -> datetime:
    return datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(microseconds=int(us))


def _days_from_civil(y, m, d):
    y = y - (m <= 2)
    era = np.floor_divide(y, 400)
    yoe = y - era * 400
    doy = (153 * (m + np.where(m > 2, -3, 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


_MONTH_DAYS = np.array([0, 31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])


def timestamps_to_us(texts: Sequence[str]) -> np.ndarray:
    """Vectorised :func:`parse_timestamp` returning int64 UTC microseconds.

    Handles ``YYYY-MM-DDTHH:MM:SS[.f+](Z|+HH:MM)`` in bulk; anything else is
    routed through the scalar parser, which also produces the errors.
    """
    n = len(texts)
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    try:
        raw = np.array(texts, dtype="S")
    except (UnicodeEncodeError, TypeError, ValueError):
        for i, t in enumerate(texts):
            out[i] = _to_us(parse_timestamp(t))
        return out
    width = raw.dtype.itemsize
    if width < 20:
        for i, t in enumerate(texts):
            out[i] = _to_us(parse_timestamp(t))
        return out
    u8 = raw.view(np.uint8).reshape(n, width)
    lengths = width - (u8[:, ::-1] != 0).argmax(axis=1)
    lengths[(u8 == 0).all(axis=1)] = 0

    def dig(cols):
        v = u8[:, cols].astype(np.int64) - 48
        return v

    digit_cols = [0, 1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15, 17, 18]
    dv = dig(digit_cols)
    ok = (lengths >= 20) & ((dv >= 0) & (dv <= 9)).all(axis=1)
    ok &= (u8[:, 4] == 45) & (u8[:, 7] == 45) & (u8[:, 13] == 58) & (u8[:, 16] == 58)
    ok &= (u8[:, 10] == 84) | (u8[:, 10] == 32)
    rows = np.arange(n)
    last = u8[rows, np.maximum(lengths - 1, 0)]
    is_z = last == 90
    off_start = np.where(is_z, lengths - 1, lengths - 6)
    off_start = np.clip(off_start, 0, width - 1)
    # +HH:MM layout
    sign_c = u8[rows, off_start]
    is_off = ~is_z & ((sign_c == 43) | (sign_c == 45))
    ok &= is_z | is_off
    colon = u8[rows, np.clip(off_start + 3, 0, width - 1)]
    ok &= is_z | (colon == 58)
    frac_len = off_start - 20
    has_frac = u8[:, 19] == 46
    ok &= np.where(has_frac, frac_len >= 1, off_start == 19)
    ok &= frac_len <= 12

    y = dv[:, 0] * 1000 + dv[:, 1] * 100 + dv[:, 2] * 10 + dv[:, 3]
    mo = dv[:, 4] * 10 + dv[:, 5]
    d = dv[:, 6] * 10 + dv[:, 7]
    hh = dv[:, 8] * 10 + dv[:, 9]
    mi = dv[:, 10] * 10 + dv[:, 11]
    ss = dv[:, 12] * 10 + dv[:, 13]
    leap = ((y % 4 == 0) & (y % 100 != 0)) | (y % 400 == 0)
    mdays = _MONTH_DAYS[np.clip(mo, 0, 12)] - ((mo == 2) & ~leap)
    ok &= (mo >= 1) & (mo <= 12) & (d >= 1) & (d <= mdays) & (hh < 24) & (mi < 60) & (ss < 60)

    # fractional microseconds: first six digits after the dot
    frac_us = np.zeros(n, dtype=np.int64)
    scale = 100_000
    for k in range(6):
        col = 20 + k
        if col >= width:
            break
        c = u8[:, col].astype(np.int64) - 48
        inside = has_frac & (k < frac_len)
        ok &= ~inside | ((c >= 0) & (c <= 9))
        frac_us += np.where(inside, np.clip(c, 0, 9), 0) * scale
        scale //= 10
    for k in range(6, 12):
        col = 20 + k
        if col >= width:
            break
        c = u8[:, col].astype(np.int64) - 48
        inside = has_frac & (k < frac_len)
        ok &= ~inside | ((c >= 0) & (c <= 9))

    oh = np.zeros(n, dtype=np.int64)
    om = np.zeros(n, dtype=np.int64)
    for i, (dst, base) in enumerate(((oh, 1), (om, 4))):
        c1 = u8[rows, np.clip(off_start + base, 0, width - 1)].astype(np.int64) - 48
        c2 = u8[rows, np.clip(off_start + base + 1, 0, width - 1)].astype(np.int64) - 48
        good = (c1 >= 0) & (c1 <= 9) & (c2 >= 0) & (c2 <= 9)
        ok &= is_z | good
        dst += np.where(is_off, c1 * 10 + c2, 0)
    ok &= (oh < 24) & (om < 60)
    off_sign = np.where(sign_c == 45, -1, 1)
    offset_s = np.where(is_off, off_sign * (oh * 3600 + om * 60), 0)

    days = _days_from_civil(y, mo, d)
    secs = days * 86_400 + hh * 3600 + mi * 60 + ss - offset_s
    out[:] = secs * US_PER_SECOND + frac_us
    bad = np.flatnonzero(~ok)
    for i in bad:
        out[i] = _to_us(parse_timestamp(texts[i]))
    return out


# ---------------------------------------------------------------------------
# calendar
# ---------------------------------------------------------------------------


class Bucket(NamedTuple):
    trading_day: date
    slot: int

    @property
    def key(self) -> str:
        return bucket_key(self.trading_day, self.slot)


def bucket_key(day: date, slot: int) -> str:
    return f"{day.isoformat()}Tslot{slot:02d}"


def _parse_cutoff(value) -> int:
    """Cutoff as seconds after local midnight, 0..86400 inclusive."""
    if isinstance(value, time):
        return value.hour * 3600 + value.minute * 60 + value.second
    if isinstance(value, (int, float)):
        secs = int(value)
    else:
        m = re.fullmatch(r"(\d{1,2}):(\d{2})(?::(\d{2}))?", str(value).strip())
        if m is None:
            raise ConfigError(f"cutoff must look like HH:MM, got {value!r}")
        secs = int(m.group(1)) * 3600 + int(m.group(2)) * 60 + int(m.group(3) or 0)
    if not 0 <= secs <= 86_400:
        raise ConfigError(f"cutoff {value!r} outside 00:00-24:00")
    return secs


@dataclass(frozen=True, eq=False)
class TradingCalendar:
    """Ordered trading dates plus the exchange-local session cutoff.

    A trading day ``t`` collects posts in ``[cutoff(prev day), cutoff(t))``;
    posts on non-trading days roll forward to the next trading date.
    """

    dates: tuple[date, ...]
    cutoff: str | time | int = "16:00"
    zone: str = "America/New_York"

    def __post_init__(self):
        dates = tuple(self.dates)
        if not dates:
            raise ConfigError("calendar has no dates")
        for a, b in zip(dates, dates[1:]):
            if not a < b:
                raise ConfigError(f"calendar dates must be strictly increasing ({a} then {b})")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "cutoff_seconds", _parse_cutoff(self.cutoff))
        try:
            object.__setattr__(self, "tz", ZoneInfo(self.zone))
        except Exception as exc:
            raise ConfigError(f"unknown time zone {self.zone!r}") from exc

    cutoff_seconds: int = field(init=False, repr=False)
    tz: ZoneInfo = field(init=False, repr=False)

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        return (isinstance(other, TradingCalendar) and self.dates == other.dates
                and self.cutoff_seconds == other.cutoff_seconds and self.zone == other.zone)

    def __hash__(self):
        return hash((self.dates, self.cutoff_seconds, self.zone))

    @classmethod
    def from_file(cls, path, cutoff="16:00", zone="America/New_York") -> "TradingCalendar":
        """Read one ISO date per line; a leading ``date`` header is allowed."""
        dates = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                s = line.strip().split(",")[0].strip()
                if not s or s.startswith("#") or (lineno == 1 and s.lower() == "date"):
                    continue
                try:
                    dates.append(date.fromisoformat(s))
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad calendar date {s!r}") from exc
        return cls(tuple(dates), cutoff=cutoff, zone=zone)

    @classmethod
    def weekdays(cls, start: date, end: date, holidays: Iterable[date] = (), **kw) -> "TradingCalendar":
        skip = set(holidays)
        out = []
        d = start
        while d <= end:
            if d.weekday() < 5 and d not in skip:
                out.append(d)
            d += timedelta(days=1)
        return cls(tuple(out), **kw)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("date\n")
            for d in self.dates:
                fh.write(d.isoformat() + "\n")

    def index_of(self, day: date) -> int:
        i = bisect.bisect_left(self.dates, day)
        if i == len(self.dates) or self.dates[i] != day:
            raise OutOfCalendar(f"{day} is not a trading date")
        return i

    @cached_property
    def _ordinals(self) -> np.ndarray:
        epoch = date(1970, 1, 1)
        return np.array([(d - epoch).days for d in self.dates], dtype=np.int64)

    def _cutoff_instant(self, d: date) -> datetime:
        # wall-clock arithmetic, so DST days still cut at the local hour
        wall = datetime.combine(d, time(0)) + timedelta(seconds=self.cutoff_seconds)
        local = wall.replace(tzinfo=self.tz)
        return local.astimezone(timezone.utc)

    @cached_property
    def span_us(self) -> tuple[int, int]:
        """[first window start, last cutoff) in UTC microseconds."""
        first = self._cutoff_instant(self.dates[0] - timedelta(days=1))
        last = self._cutoff_instant(self.dates[-1])
        return _to_us(first), _to_us(last)

    @cached_property
    def _offset_table(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.span_us
        return _zone_transitions(self.tz, lo - 3 * US_PER_DAY, hi + 3 * US_PER_DAY)

    def local_offsets_us(self, ts_us: np.ndarray) -> np.ndarray:
        trans, offs = self._offset_table
        pos = np.searchsorted(trans, ts_us, side="right") - 1
        return offs[np.clip(pos, 0, len(offs) - 1)]

    def locate(self, ts_us: np.ndarray, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised (trading-day index, slot) for UTC microsecond instants.

        Out-of-calendar instants raise unless ``strict`` is False, in which
        case their day index is -1.
        """
        ts_us = np.asarray(ts_us, dtype=np.int64)
        local = ts_us + self.local_offsets_us(ts_us)
        local_day = np.floor_divide(local, US_PER_DAY)
        tod = local - local_day * US_PER_DAY
        cut = self.cutoff_seconds * US_PER_SECOND
        candidate = local_day + (tod >= cut)
        ords = self._ordinals
        idx = np.searchsorted(ords, candidate, side="left")
        bad = (candidate < ords[0]) | (idx >= len(ords))
        slot = (np.mod(tod - cut, US_PER_DAY) // SLOT_US).astype(np.int8)
        if bad.any():
            if strict:
                first = int(np.flatnonzero(bad)[0])
                raise OutOfCalendar(
                    f"instant {_from_us(ts_us[first]).isoformat()} outside calendar "
                    f"{self.dates[0]}..{self.dates[-1]}", index=first)
            idx = np.where(bad, -1, idx)
        return idx.astype(np.int64), slot


def _zone_transitions(tz: ZoneInfo, lo_us: int, hi_us: int) -> tuple[np.ndarray, np.ndarray]:
    """Offset change points of ``tz`` within [lo, hi], found by hourly scan + bisection."""

    def offset_at(sec: int) -> int:
        return int(datetime.fromtimestamp(sec, tz).utcoffset().total_seconds())

    lo = lo_us // US_PER_SECOND
    hi = hi_us // US_PER_SECOND
    trans = [lo]
    offs = [offset_at(lo)]
    prev_t, prev_o = lo, offs[0]
    t = lo + 3600
    while True:
        t = min(t, hi)
        o = offset_at(t)
        if o != prev_o:
            a, b = prev_t, t  # offset(a) == prev_o, offset(b) == o
            while b - a > 1:
                mid = (a + b) // 2
                if offset_at(mid) == prev_o:
                    a = mid
                else:
                    b = mid
            trans.append(b)
            offs.append(o)
        prev_t, prev_o = t, o
        if t >= hi:
            break
        t += 3600
    return (np.array(trans, dtype=np.int64) * US_PER_SECOND,
            np.array(offs, dtype=np.int64) * US_PER_SECOND)


def _local_parts(ts: datetime, cal: TradingCalendar) -> tuple[date, int]:
    if ts.tzinfo is None:
        raise MalformedRecord("naive datetime; an explicit offset is required")
    local = ts.astimezone(cal.tz)
    tod = (local.hour * 3600 + local.minute * 60 + local.second) * US_PER_SECOND + local.microsecond
    return local.date(), tod


def assign_trading_day(ts: datetime, cal: TradingCalendar) -> date:
    """Trading date whose ``[prev cutoff, cutoff)`` window holds ``ts``."""
    local_date, tod = _local_parts(ts, cal)
    candidate = local_date + timedelta(days=1) if tod >= cal.cutoff_seconds * US_PER_SECOND else local_date
    i = bisect.bisect_left(cal.dates, candidate)
    if candidate < cal.dates[0] or i == len(cal.dates):
        raise OutOfCalendar(f"{ts.isoformat()} outside calendar {cal.dates[0]}..{cal.dates[-1]}")
    return cal.dates[i]


def assign_bucket(ts: datetime, cal: TradingCalendar) -> Bucket:
    """Trading day plus the half-hour slot (0..47, slot 0 starts at the cutoff)."""
    day = assign_trading_day(ts, cal)
    _, tod = _local_parts(ts, cal)
    slot = ((tod - cal.cutoff_seconds * US_PER_SECOND) % US_PER_DAY) // SLOT_US
    return Bucket(day, int(slot))


def slot_start(slot: int, cal: TradingCalendar) -> time:
    """Local wall-clock start of a slot."""
    secs = (cal.cutoff_seconds + slot * 1800) % 86_400
    return time(secs // 3600, (secs % 3600) // 60)


# ---------------------------------------------------------------------------
# single-record parsing
# ---------------------------------------------------------------------------


def _coerce_id(value, what: str, where: str) -> str:
    if value is None or value == "":
        raise MalformedRecord(f"{where}missing {what}")
    if isinstance(value, (str, int)) and not isinstance(value, bool):
        return str(value)
    raise MalformedRecord(f"{where}{what} must be a string or integer, got {value!r}")


def _coerce_user(value) -> str:
    if value is None or value == "":
        return ""
    return _coerce_id(value, "user id", "")


def _coerce_score(value, where: str) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRecord(f"{where}text_score must be numeric, got {value!r}")
    v = float(value)
    if not -1.0 <= v <= 1.0:
        raise MalformedRecord(f"{where}text_score {v} outside [-1, 1]")
    return v


def parse_post(raw_line: str | bytes, schema: PostSchema = DEFAULT_SCHEMA) -> PostRecord:
    """Parse one JSON line into a :class:`PostRecord`."""
    try:
        obj = _loads(raw_line)
    except Exception as exc:
        raise MalformedRecord(f"unparseable record: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not a JSON object")
    ts_raw = schema.getter("timestamp")(obj)
    if ts_raw is None or ts_raw == "":
        raise MissingTimestamp("record has no timestamp")
    body = schema.getter("body")(obj)
    if body is None:
        body = ""
    if not isinstance(body, str):
        raise MalformedRecord(f"body must be a string, got {type(body).__name__}")
    return PostRecord(
        post_id=_coerce_id(schema.getter("post_id")(obj), "post id", ""),
        timestamp=parse_timestamp(ts_raw),
        user_id=_coerce_user(schema.getter("user_id")(obj)),
        body=body,
        cashtags=extract_cashtags(body),
        gif_ids=extract_gif_ids(body),
        declaration=Declaration.from_sign(_declaration_sign(schema.getter("declaration")(obj))),
        text_score=_coerce_score(schema.getter("text_score")(obj), ""),
    )


def _format_us(us: int) -> str:
    return _from_us(us).isoformat()


def post_to_dict(record: PostRecord) -> dict:
    out = {
        DEFAULT_SCHEMA.post_id: record.post_id,
        DEFAULT_SCHEMA.timestamp: _format_us(_to_us(record.timestamp)),
        DEFAULT_SCHEMA.user_id: record.user_id,
        DEFAULT_SCHEMA.body: record.body,
        DEFAULT_SCHEMA.declaration: None if record.declaration is Declaration.NONE else record.declaration.value,
    }
    if record.text_score is not None:
        out[DEFAULT_SCHEMA.text_score] = record.text_score
    return out


def serialize_post(record: PostRecord) -> str:
    """Canonical JSON line (default schema, UTC timestamp) for a record."""
    return _dumps(post_to_dict(record))


# ---------------------------------------------------------------------------
# columnar batches
# ---------------------------------------------------------------------------


def _csr_take(ptr: np.ndarray, values: np.ndarray, order: np.ndarray):
    lengths = np.diff(ptr)[order]
    new_ptr = np.zeros(len(order) + 1, dtype=np.int64)
    np.cumsum(lengths, out=new_ptr[1:])
    if new_ptr[-1] == 0:
        return new_ptr, values[:0]
    starts = ptr[:-1][order]
    idx = np.repeat(starts - new_ptr[:-1], lengths) + np.arange(new_ptr[-1])
    return new_ptr, values[idx]


def _scan(regex: re.Pattern, big: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Run a sentinel-aware scan; returns deduplicated CSR (ptr, values)."""
    found = regex.findall(big)
    arr = np.array(found, dtype=object) if found else np.empty(0, dtype=object)
    sentinel = arr == ""
    post = np.cumsum(sentinel) - 1
    keep = ~sentinel
    vals = arr[keep]
    owner = post[keep].astype(np.int64)
    if len(vals):
        codes, _ = pd.factorize(vals)
        key = owner * (int(codes.max()) + 1) + codes
        _, first = np.unique(key, return_index=True)
        first.sort()
        vals = vals[first]
        owner = owner[first]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=n), out=ptr[1:])
    return ptr, vals


@dataclass
class PostBatch:
    """Columnar corpus.

    ``decl`` is +1/-1/0, ``text_score`` uses NaN for "absent", timestamps are
    int64 UTC microseconds.  Cashtags and GIF ids are stored as CSR pairs
    (``*_ptr`` offsets into the flat ``*`` value arrays), deduplicated
    within each post in first-appearance order.
    """

    post_id: np.ndarray
    ts_us: np.ndarray
    user_id: np.ndarray
    decl: np.ndarray
    text_score: np.ndarray
    cashtag_ptr: np.ndarray
    cashtags: np.ndarray
    gif_ptr: np.ndarray
    gif_ids: np.ndarray
    body: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ts_us)

    @property
    def n_cashtags(self) -> np.ndarray:
        return np.diff(self.cashtag_ptr)

    @property
    def n_gifs(self) -> np.ndarray:
        return np.diff(self.gif_ptr)

    @property
    def market_relevant(self) -> np.ndarray:
        return self.n_cashtags > 0

    @classmethod
    def empty(cls, with_body: bool = True) -> "PostBatch":
        z = np.zeros(1, dtype=np.int64)
        return cls(np.empty(0, dtype=object), np.empty(0, dtype=np.int64), np.empty(0, dtype=object),
                   np.empty(0, dtype=np.int8), np.empty(0), z, np.empty(0, dtype=object), z.copy(),
                   np.empty(0, dtype=object), np.empty(0, dtype=object) if with_body else None)

    @classmethod
    def from_columns(cls, post_id, ts_us, user_id, body, decl, text_score) -> "PostBatch":
        """Build a batch from raw columns, extracting cashtags and GIF ids from bodies."""
        n = len(ts_us)
        bodies = list(body)
        big = "\x00" + "\x00".join(bodies)
        gif_ptr, gif_ids = _scan(_GIF_SCAN_RE, big, n)
        cash_ptr, cashtags = _scan(_CASHTAG_SCAN_RE, big.upper(), n)
        return cls(
            post_id=np.asarray(post_id, dtype=object),
            ts_us=np.asarray(ts_us, dtype=np.int64),
            user_id=np.asarray(user_id, dtype=object),
            decl=np.asarray(decl, dtype=np.int8),
            text_score=np.asarray(text_score, dtype=np.float64),
            cashtag_ptr=cash_ptr,
            cashtags=cashtags,
            gif_ptr=gif_ptr,
            gif_ids=gif_ids,
            body=np.array(bodies, dtype=object) if n else np.empty(0, dtype=object),
        )

    @classmethod
    def from_records(cls, records: Sequence[PostRecord]) -> "PostBatch":
        batch = cls.from_columns(
            [r.post_id for r in records],
            [_to_us(r.timestamp) for r in records],
            [r.user_id for r in records],
            [r.body for r in records],
            [r.declaration.sign for r in records],
            [np.nan if r.text_score is None else r.text_score for r in records],
        )
        return batch

    def without_body(self) -> "PostBatch":
        return PostBatch(**{**self.__dict__, "body": None})

    def take(self, order) -> "PostBatch":
        order = np.asarray(order, dtype=np.int64)
        cptr, cvals = _csr_take(self.cashtag_ptr, self.cashtags, order)
        gptr, gvals = _csr_take(self.gif_ptr, self.gif_ids, order)
        return PostBatch(
            post_id=self.post_id[order],
            ts_us=self.ts_us[order],
            user_id=self.user_id[order],
            decl=self.decl[order],
            text_score=self.text_score[order],
            cashtag_ptr=cptr,
            cashtags=cvals,
            gif_ptr=gptr,
            gif_ids=gvals,
            body=None if self.body is None else self.body[order],
        )

    def sort_order(self) -> np.ndarray:
        """Permutation ordering posts by (timestamp, post_id), stable on ties."""
        order = np.argsort(self.ts_us, kind="stable")
        s = self.ts_us[order]
        if len(s) > 1:
            tie = np.flatnonzero(s[1:] == s[:-1])
            if len(tie):
                starts = tie[np.r_[True, np.diff(tie) > 1]]
                ends = np.r_[tie[1:][np.diff(tie) > 1], tie[-1]] + 2
                for a, b in zip(starts, ends):
                    seg = order[a:b]
                    ids = self.post_id[seg]
                    order[a:b] = seg[sorted(range(len(seg)), key=ids.__getitem__)]
        return order

    def sorted(self) -> "PostBatch":
        return self.take(self.sort_order())

    @staticmethod
    def concat(batches: Sequence["PostBatch"]) -> "PostBatch":
        batches = [b for b in batches]
        if not batches:
            return PostBatch.empty()
        if len(batches) == 1:
            return batches[0]

        def cat_ptr(ptrs):
            out = [np.zeros(1, dtype=np.int64)]
            total = 0
            for p in ptrs:
                out.append(p[1:] + total)
                total += p[-1]
            return np.concatenate(out)

        has_body = all(b.body is not None for b in batches)
        return PostBatch(
            post_id=np.concatenate([b.post_id for b in batches]),
            ts_us=np.concatenate([b.ts_us for b in batches]),
            user_id=np.concatenate([b.user_id for b in batches]),
            decl=np.concatenate([b.decl for b in batches]),
            text_score=np.concatenate([b.text_score for b in batches]),
            cashtag_ptr=cat_ptr([b.cashtag_ptr for b in batches]),
            cashtags=np.concatenate([b.cashtags for b in batches]),
            gif_ptr=cat_ptr([b.gif_ptr for b in batches]),
            gif_ids=np.concatenate([b.gif_ids for b in batches]),
            body=np.concatenate([b.body for b in batches]) if has_body else None,
        )

    def gif_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(post index, gif id) for every deduplicated (post, GIF) pair."""
        owner = np.repeat(np.arange(len(self), dtype=np.int64), self.n_gifs)
        return owner, self.gif_ids

    def record(self, i: int) -> PostRecord:
        a, b = self.gif_ptr[i], self.gif_ptr[i + 1]
        c, d = self.cashtag_ptr[i], self.cashtag_ptr[i + 1]
        score = self.text_score[i]
        return PostRecord(
            post_id=str(self.post_id[i]),
            timestamp=_from_us(int(self.ts_us[i])),
            user_id=str(self.user_id[i]),
            body="" if self.body is None else str(self.body[i]),
            cashtags=tuple(self.cashtags[c:d]),
            gif_ids=tuple(self.gif_ids[a:b]),
            declaration=Declaration.from_sign(int(self.decl[i])),
            text_score=None if np.isnan(score) else float(score),
        )

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    def write_jsonl(self, path) -> int:
        """Write canonical JSON lines; returns the number written."""
        if self.body is None:
            raise ValueError("batch was read without bodies; cannot serialise")
        ts_text = [_format_us(int(u)) for u in self.ts_us]
        decl_text = {1: "BULLISH", -1: "BEARISH", 0: None}
        s = DEFAULT_SCHEMA
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in range(len(self)):
                obj = {
                    s.post_id: self.post_id[i],
                    s.timestamp: ts_text[i],
                    s.user_id: self.user_id[i],
                    s.body: self.body[i],
                    s.declaration: decl_text[int(self.decl[i])],
                }
                score = self.text_score[i]
                if score == score:
                    obj[s.text_score] = float(score)
                fh.write(_dumps(obj))
                fh.write("\n")
        return len(self)


def parse_lines(lines: Iterable[bytes | str], schema: PostSchema = DEFAULT_SCHEMA, *,
                keep_body: bool = True, source: str = "", first_line: int = 1) -> PostBatch:
    """Parse JSON lines into a :class:`PostBatch` (blank lines are skipped)."""
    g_id = schema.getter("post_id")
    g_ts = schema.getter("timestamp")
    g_user = schema.getter("user_id")
    g_body = schema.getter("body")
    g_decl = schema.getter("declaration")
    g_score = schema.getter("text_score")
    decl_fast = {None: 0, "Bullish": 1, "Bearish": -1, "BULLISH": 1, "BEARISH": -1,
                 "bullish": 1, "bearish": -1, "NONE": 0, "": 0}
    loads = _loads
    ids, tss, users, bodies, decls, scores, linenos = [], [], [], [], [], [], []
    nan = float("nan")
    prefix = f"{source}:" if source else "line "
    for lineno, line in enumerate(lines, first_line):
        try:
            obj = loads(line)
        except Exception as exc:
            if not line.strip():
                continue
            raise MalformedRecord(f"{prefix}{lineno}: unparseable record ({exc})", line=lineno) from exc
        if type(obj) is not dict:
            raise MalformedRecord(f"{prefix}{lineno}: record is not a JSON object", line=lineno)
        pid = g_id(obj)
        if type(pid) is not str:
            pid = _coerce_id(pid, "post id", f"{prefix}{lineno}: ")
        ts = g_ts(obj)
        if type(ts) is not str or not ts:
            if ts is None or ts == "":
                raise MissingTimestamp(f"{prefix}{lineno}: record has no timestamp", line=lineno)
            raise MalformedRecord(f"{prefix}{lineno}: timestamp must be a string", line=lineno)
        user = g_user(obj)
        if type(user) is not str:
            user = "" if user is None else _coerce_id(user, "user id", f"{prefix}{lineno}: ")
        body = g_body(obj)
        if type(body) is not str:
            if body is not None:
                raise MalformedRecord(f"{prefix}{lineno}: body must be a string", line=lineno)
            body = ""
        d = g_decl(obj)
        sign = decl_fast.get(d) if type(d) is str or d is None else None
        if sign is None:
            try:
                sign = _declaration_sign(d)
            except InvalidDeclaration as exc:
                raise InvalidDeclaration(f"{prefix}{lineno}: {exc}", line=lineno) from None
        sc = g_score(obj)
        if sc is None:
            sc = nan
        else:
            sc = _coerce_score(sc, f"{prefix}{lineno}: ")
        ids.append(pid)
        tss.append(ts)
        users.append(user)
        bodies.append(body)
        decls.append(sign)
        scores.append(sc)
        linenos.append(lineno)
    if not ids:
        return PostBatch.empty(with_body=keep_body)
    try:
        ts_us = timestamps_to_us(tss)
    except MalformedRecord:
        for ln, t in zip(linenos, tss):
            try:
                parse_timestamp(t)
            except MalformedRecord as exc:
                raise MalformedRecord(f"{prefix}{ln}: {exc}", line=ln) from None
        raise
    batch = PostBatch.from_columns(ids, ts_us, users, bodies, decls, scores)
    if not keep_body:
        batch.body = None
    return batch


def _line_chunks(path: str, parts: int) -> list[tuple[int, int, int]]:
    """Split a file into ``parts`` byte ranges on line boundaries.

    Returns (start, end, first_line_number) triples.
    """
    size = os.path.getsize(path)
    if parts <= 1 or size == 0:
        return [(0, size, 1)]
    bounds = [0]
    with open(path, "rb") as fh:
        for k in range(1, parts):
            target = max(size * k // parts, bounds[-1])
            fh.seek(target)
            fh.readline()
            bounds.append(min(fh.tell(), size))
    bounds.append(size)
    out = []
    line = 1
    with open(path, "rb") as fh:
        for a, b in zip(bounds, bounds[1:]):
            if b <= a:
                continue
            out.append((a, b, line))
            fh.seek(a)
            line += fh.read(b - a).count(b"\n")
    return out


def _parse_chunk(args) -> PostBatch:
    path, start, end, first_line, schema, keep_body = args
    with open(path, "rb") as fh:
        fh.seek(start)
        data = fh.read(end - start)
    return parse_lines(data.splitlines(), schema, keep_body=keep_body,
                       source=os.path.basename(path), first_line=first_line)


def expand_paths(patterns: str | os.PathLike | Sequence[str | os.PathLike]) -> list[str]:
    if isinstance(patterns, (str, os.PathLike)):
        patterns = [patterns]
    out: list[str] = []
    for p in patterns:
        p = os.fspath(p)
        matches = sorted(_glob.glob(p)) if any(c in p for c in "*?[") else [p]
        if not matches:
            raise ConfigError(f"no files match {p!r}")
        for m in matches:
            if not os.path.exists(m):
                raise ConfigError(f"no such file {m!r}")
        out.extend(matches)
    return out


def read_posts(paths, schema: PostSchema = DEFAULT_SCHEMA, *, workers: int = 1,
               keep_body: bool = True) -> PostBatch:
    """Read JSONL post files into one batch sorted by (timestamp, post_id).

    Files are split into contiguous line ranges parsed on ``workers``
    processes; the merge is order-based, so the result does not depend on
    the worker count.
    """
    files = expand_paths(paths)
    tasks = []
    for f in files:
        for a, b, ln in _line_chunks(f, workers):
            tasks.append((f, a, b, ln, schema, keep_body))
    if workers <= 1 or len(tasks) <= 1:
        parts = [_parse_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_parse_chunk, tasks))
    return PostBatch.concat(parts).sorted()


# ---------------------------------------------------------------------------
# exogenous controls
# ---------------------------------------------------------------------------


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""])
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaMismatch(f"{path}: cannot read CSV ({exc})") from exc


def _numeric_frame(df: pd.DataFrame, path, cols) -> pd.DataFrame:
    out = {}
    for c in cols:
        s = df[c]
        v = pd.to_numeric(s, errors="coerce")
        bad = v.isna() & s.notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise SchemaMismatch(f"{path}: column {c!r} has non-numeric value {s.iloc[row]!r}")
        out[c] = v.astype(float)
    return pd.DataFrame(out, index=df.index)


def trading_index(cal: TradingCalendar) -> pd.DatetimeIndex:
    return pd.DatetimeIndex(pd.to_datetime([d.isoformat() for d in cal.dates]), name="date")


def load_exogenous(paths, cal: TradingCalendar, expected: Iterable[str] | None = None) -> pd.DataFrame:
    """Align control CSVs onto the trading calendar.

    A file whose first column is ``date`` is daily: every trading date
    between its first and last row must be present (``GapError`` otherwise);
    rows on non-trading dates are ignored.  A file whose first column is
    ``month`` (``YYYY-MM``) is monthly: each month's value is carried onto
    every trading day of the *following* month.  Columns that are entirely
    empty are dropped and listed in ``frame.attrs["dropped"]``.
    """
    idx = trading_index(cal)
    frame = pd.DataFrame(index=idx)
    dropped: list[str] = []
    for path in expand_paths(paths) if paths else []:
        df = _read_csv(path)
        if df.shape[1] < 2:
            raise SchemaMismatch(f"{path}: need a date/month column plus at least one value column")
        key = df.columns[0].strip().lower()
        cols = [c for c in df.columns[1:]]
        dup = [c for c in cols if c in frame.columns]
        if dup:
            raise SchemaMismatch(f"{path}: column(s) {dup} already loaded from another file")
        values = _numeric_frame(df, path, cols)
        if key == "date":
            try:
                when = pd.to_datetime(df.iloc[:, 0], format="%Y-%m-%d")
            except (ValueError, TypeError) as exc:
                raise SchemaMismatch(f"{path}: bad date value ({exc})") from exc
            if when.duplicated().any():
                raise SchemaMismatch(f"{path}: duplicate date {when[when.duplicated()].iloc[0].date()}")
            values.index = pd.DatetimeIndex(when)
            inside = idx[(idx >= when.min()) & (idx <= when.max())]
            missing = inside.difference(values.index)
            if len(missing):
                raise GapError(f"{path}: missing trading day {missing[0].date().isoformat()}",
                               date=missing[0].date())
            aligned = values.reindex(idx)
        elif key == "month":
            try:
                month = pd.PeriodIndex(df.iloc[:, 0], freq="M")
            except (ValueError, TypeError) as exc:
                raise SchemaMismatch(f"{path}: bad month value ({exc})") from exc
            if month.duplicated().any():
                raise SchemaMismatch(f"{path}: duplicate month")
            values.index = month + 1  # value of month m applies during month m+1
            aligned = values.reindex(idx.to_period("M"))
            aligned.index = idx
        else:
            raise SchemaMismatch(f"{path}: first column must be 'date' or 'month', got {df.columns[0]!r}")
        for c in cols:
            if aligned[c].notna().any() or values[c].notna().any():
                frame[c] = aligned[c]
            else:
                dropped.append(c)
    if expected is not None:
        missing_cols = [c for c in expected if c not in frame.columns and c not in dropped]
        if missing_cols:
            raise SchemaMismatch(f"expected control column(s) not found: {missing_cols}")
    frame.attrs["dropped"] = dropped
    return frame
