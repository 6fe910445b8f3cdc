"""MMWR epidemiological weeks (Sunday to Saturday).

Week 1 of a year is the first week with at least four days in that year,
i.e. the week whose Sunday falls on or before January 4.
"""
from __future__ import annotations

import datetime as dt
from functools import lru_cache


@lru_cache(maxsize=None)
def year_start(year: int) -> dt.date:
    jan4 = dt.date(year, 1, 4)
    return jan4 - dt.timedelta(days=(jan4.weekday() + 1) % 7)


def weeks_in_year(year: int) -> int:
    return (year_start(year + 1) - year_start(year)).days // 7


def week_start(year: int, week: int) -> dt.date:
    if not 1 <= week <= weeks_in_year(year):
        raise ValueError(f"{year} has no epiweek {week}")
    return year_start(year) + dt.timedelta(weeks=week - 1)


def epiweek_of(day: dt.date) -> tuple:
    year = day.year + 1
    while year_start(year) > day:
        year -= 1
    return year, (day - year_start(year)).days // 7 + 1


def parse_epiweek(code) -> tuple:
    """``YYYYWW`` (int or str) -> (year, week)."""
    code = int(code)
    year, week = divmod(code, 100)
    week_start(year, week)  # validates
    return year, week


def format_epiweek(year: int, week: int) -> int:
    return year * 100 + week


def shift(year: int, week: int, n: int) -> tuple:
    return epiweek_of(week_start(year, week) + dt.timedelta(weeks=n))
