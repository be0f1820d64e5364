from __future__ import annotations

import datetime

import pytz


def seconds_to_hms(seconds: int | float) -> str:
    """Converts the given number of seconds to a string of format HH:MM:SS."""
    time_delta = str(datetime.timedelta(seconds=seconds))

    # timedelta has no format options, so trim the fractional seconds by hand.
    rest, seconds_str = time_delta.rsplit(":", maxsplit=1)
    seconds_str = f"{float(seconds_str):#06.3f}".rstrip("0").rstrip(".")
    return f"{rest}:{seconds_str}"


def from_timestamp(timestamp: int) -> datetime.datetime:
    """Interaction timestamps are integer seconds since the epoch, in UTC."""
    return datetime.datetime.fromtimestamp(timestamp, tz=pytz.UTC)


def to_timestamp(moment: datetime.datetime) -> int:
    if moment.tzinfo is None:
        moment = pytz.UTC.localize(moment)
    return int(moment.timestamp())


def start_of_day(timestamp: int) -> int:
    """00:00 UTC of the day containing ``timestamp``."""
    moment = from_timestamp(timestamp)
    return to_timestamp(moment.replace(hour=0, minute=0, second=0, microsecond=0))


def last_day_boundaries(last_timestamp: int) -> tuple[int, int]:
    """Validation and test boundaries for a log whose latest event is ``last_timestamp``.

    Everything before the last day trains, the last day's morning validates and its
    afternoon (from 12:00 UTC) tests.
    """
    validation = start_of_day(last_timestamp)
    test = to_timestamp(from_timestamp(validation) + datetime.timedelta(hours=12))
    return validation, test


def format_timestamp(timestamp: int) -> str:
    return from_timestamp(timestamp).strftime("%Y-%m-%d %H:%M:%S %Z")
