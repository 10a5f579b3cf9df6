"""Build the GIF sentiment index from a handful of posts.

Run: python3 demos/01_index_from_posts.py

Three trading days, a dozen posts.  Watch the valence ledger grow day by
day and see why a post at 16:30 counts toward the next session.
"""

from __future__ import annotations

import json
from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo

from giffluence.corpus import PostBatch, TradingCalendar, parse_post
from giffluence.index import IndexOptions, build_index

NY = ZoneInfo("America/New_York")


def post(pid, y, mo, d, hh, mi, gif=None, decl=None):
    ts = datetime(y, mo, d, hh, mi, tzinfo=NY).astimezone(timezone.utc).isoformat()
    body = "$SPY " + (f"https://media2.giphy.com/media/{gif}/giphy.gif" if gif else "no gif")
    return {"id": pid, "created_at": ts, "user_id": "u", "body": body, "declaration": decl}


raw = [
    post("1", 2021, 3, 4, 10, 0, "rocket", "Bullish"),
    post("2", 2021, 3, 4, 11, 0, "rocket", "Bullish"),
    post("3", 2021, 3, 4, 12, 0, "crying", "Bearish"),
    post("4", 2021, 3, 4, 13, 0, None, "Bullish"),
    post("5", 2021, 3, 4, 16, 30, None, "Bearish"),  # after the close
    post("6", 2021, 3, 5, 10, 0, "rocket", "Bearish"),
    post("7", 2021, 3, 5, 11, 0, "rocket", "Bullish"),
    post("8", 2021, 3, 5, 12, 0, "crying", "Bearish"),
    post("9", 2021, 3, 8, 10, 0, "crying", "Bearish"),
    post("10", 2021, 3, 8, 11, 0, "crying", None),
    post("11", 2021, 3, 6, 12, 0, None, "Bullish"),  # a Saturday
]
records = [parse_post(json.dumps(r)) for r in raw]
cal = TradingCalendar.weekdays(date(2021, 3, 4), date(2021, 3, 8))

# A GIF needs this many declared posts before its valence counts.
opts = IndexOptions(min_decl=2)
idx = build_index(PostBatch.from_records(records), cal, opts)

print("Daily index (raw, before standardization):")
print(idx.daily[["GIF", "POS", "NEG", "SELFDEC", "n_posts", "n_gif_posts"]].to_string())
print()
print("Cumulative ledger per GIF and day:")
print(idx.gif_days[["gif_id", "date", "cum_bullish", "cum_bearish", "cum_appearance", "valence"]].to_string())
print()
print("Final ledger snapshot (gif, bullish, bearish, appearances):")
print("\n".join(idx.ledger_snapshot()))
