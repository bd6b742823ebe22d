#!/usr/bin/env python3
"""Regenerate the static holiday calendars under data/holidays/v1/.

Requires the `holidays` package (pip install holidays).
"""
import pathlib

import holidays

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "holidays" / "v1"
YEARS = range(2010, 2021)
CALENDARS = {
    "portugal.csv": dict(country="PT"),
    "new_south_wales.csv": dict(country="AU", subdiv="NSW"),
}

for name, kwargs in CALENDARS.items():
    days = holidays.country_holidays(years=YEARS, **kwargs)
    with open(OUT / name, "w", encoding="utf-8") as f:
        f.write("date,name\n")
        for day, label in sorted(days.items()):
            f.write(f"{day.isoformat()},{label.replace(',', ' ')}\n")
