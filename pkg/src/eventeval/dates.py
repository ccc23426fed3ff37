"""Calendar-date extraction from Chinese news text.

Handles absolute dates (``2023年7月29日``, ``2023-07-29``, ``2023/7/29``),
month-day expressions whose year is inherited from the closest preceding
absolute date or the event date, ``今年/去年/明年`` prefixes, and the
day-after markers ``次日/翌日/第二天``. Chinese-numeral dates are not parsed.
"""

from __future__ import annotations

import re
from datetime import date, timedelta

from .text import fold_width

_DATE_RE = re.compile(
    r"(?P<ymd>(?P<y>\d{4})\s*年\s*(?P<m>\d{1,2})\s*月\s*(?P<d>\d{1,2})\s*[日号])"
    r"|(?P<iso>(?<!\d)(?P<iy>\d{4})[-/.](?P<im>\d{1,2})[-/.](?P<id>\d{1,2})(?!\d))"
    r"|(?P<md>(?P<rel>今年|去年|明年|前年)?(?<!\d)(?P<mm>\d{1,2})\s*月\s*(?P<dd>\d{1,2})\s*[日号])"
    r"|(?P<next>次日|翌日|第二天)"
)
_YEAR_OFFSET = {"今年": 0, "去年": -1, "前年": -2, "明年": 1}


def _make(y: int, m: int, d: int) -> date | None:
    try:
        return date(y, m, d)
    except ValueError:
        return None


def extract_dates(text: str, anchor: date | None = None) -> list[date]:
    """Dates mentioned in ``text`` in order of appearance."""
    found: list[date] = []
    year = None
    for m in _DATE_RE.finditer(fold_width(text)):
        got = None
        if m.group("ymd"):
            got = _make(int(m.group("y")), int(m.group("m")), int(m.group("d")))
        elif m.group("iso"):
            got = _make(int(m.group("iy")), int(m.group("im")), int(m.group("id")))
        elif m.group("md"):
            rel = m.group("rel")
            if rel and anchor is not None:
                y = anchor.year + _YEAR_OFFSET[rel]
            else:
                y = year if year is not None else (anchor.year if anchor else None)
            if y is not None:
                got = _make(y, int(m.group("mm")), int(m.group("dd")))
        elif m.group("next"):
            base = found[-1] if found else anchor
            if base is not None:
                got = base + timedelta(days=1)
        if got is not None:
            found.append(got)
            year = got.year
    return found


def parse_loose_date(value: str | None) -> date | None:
    """First date found in a free-form field such as a card's time entry."""
    if not value:
        return None
    dates = extract_dates(value)
    return dates[0] if dates else None
