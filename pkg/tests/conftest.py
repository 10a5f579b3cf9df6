from __future__ import annotations

from datetime import date, datetime, timedelta, timezone
from zoneinfo import ZoneInfo

import numpy as np
import pytest

from giffluence.corpus import Declaration, PostRecord, TradingCalendar, extract_cashtags, extract_gif_ids

NY = ZoneInfo("America/New_York")


def gif_url(gif_id: str) -> str:
    return f"https://media2.giphy.com/media/{gif_id}/giphy.gif"


def local(y, mo, d, hh, mi=0, ss=0) -> datetime:
    """Exchange-local wall time as an aware UTC instant."""
    return datetime(y, mo, d, hh, mi, ss, tzinfo=NY).astimezone(timezone.utc)


def make_post(pid, ts, *, gifs=(), decl=0, text=None, cashtag="$SPY", user="u1") -> PostRecord:
    body = " ".join([cashtag, "words", *(gif_url(g) for g in gifs)]).strip()
    return PostRecord(
        post_id=str(pid), timestamp=ts, user_id=user, body=body,
        cashtags=extract_cashtags(body), gif_ids=extract_gif_ids(body),
        declaration=Declaration.from_sign(decl), text_score=text,
    )


@pytest.fixture
def march_calendar() -> TradingCalendar:
    return TradingCalendar.weekdays(date(2021, 3, 1), date(2021, 3, 31))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_world():
    from giffluence.synth import WorldConfig, generate_world

    return generate_world(WorldConfig(days=260, posts_per_day=150, gif_catalog_size=120, n_firms=12, seed=5))


def day_posts_factory(cal: TradingCalendar, day_index: int):
    """Midday instant for a trading day, plus a minute offset helper."""
    d = cal.dates[day_index]

    def at(minute: int) -> datetime:
        return local(d.year, d.month, d.day, 10) + timedelta(minutes=minute)

    return at


def random_records(rng: np.random.Generator, cal: TradingCalendar, n: int, n_gifs: int = 6,
                   no_cashtag: float = 0.1) -> list[PostRecord]:
    """Random small corpus spread over the calendar span (weekends included)."""
    lo = datetime.combine(cal.dates[0], datetime.min.time(), tzinfo=NY) - timedelta(hours=7)
    hi = datetime.combine(cal.dates[-1], datetime.min.time(), tzinfo=NY) + timedelta(hours=15)
    span = (hi - lo).total_seconds()
    out = []
    for i in range(n):
        ts = (lo + timedelta(seconds=float(rng.uniform(0, span)))).astimezone(timezone.utc)
        k = int(rng.choice([0, 0, 1, 1, 1, 2, 3]))
        gifs = tuple(f"g{j}" for j in rng.choice(n_gifs, size=k, replace=True))
        decl = int(rng.choice([-1, 0, 1], p=[0.35, 0.25, 0.4]))
        text = None if rng.random() < 0.2 else float(np.round(rng.uniform(-1, 1), 3))
        tag = "" if rng.random() < no_cashtag else "$SPY"
        out.append(make_post(f"r{i:04d}", ts, gifs=gifs, decl=decl, text=text, cashtag=tag))
    return out


# acceptance outcomes, echoed once at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
