"""
Text encodings shared by the storage backends and the remote-CN payload mode.
The byte-level layout of each is documented in docs/formats.md.

kWh values are always written with exactly three fractional digits, so every
encoding maps one-to-one onto integer watt-hours.
"""

import re
import xml.etree.ElementTree as ET
from typing import List, Sequence, Tuple, Union

import numpy as np

from models.domain import (
    DailyBatch,
    HouseholdId,
    MonthSpec,
    SLOTS_PER_DAY,
    SLOTS_PER_HOUR,
    MINUTES_PER_SLOT,
    WH_DTYPE,
    WH_PER_KWH,
)

READING_TAG = "r"
TIMESTAMP_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2})$")


def format_kwh(wh: int) -> str:
    wh = int(wh)
    sign = "-" if wh < 0 else ""
    wh = abs(wh)
    return f"{sign}{wh // WH_PER_KWH}.{wh % WH_PER_KWH:03d}"


def parse_kwh(text: str) -> int:
    """Exact inverse of format_kwh"""
    whole, dot, frac = text.strip().partition(".")
    negative = whole.startswith("-")
    digits = whole[1:] if negative else whole
    if not dot or len(frac) != 3 or not digits.isdigit() or not frac.isdigit():
        raise ValueError(f"Not a 3-decimal kWh value: {text!r}")
    wh = int(digits) * WH_PER_KWH + int(frac)
    return -wh if negative else wh


def slot_timestamp(month: MonthSpec, slot: int) -> str:
    """Local start time of a slot as YYYY-MM-DDTHH:MM"""
    day, slot_of_day = divmod(int(slot), SLOTS_PER_DAY)
    hour, quarter = divmod(slot_of_day, SLOTS_PER_HOUR)
    return f"{month.year:04d}-{month.month:02d}-{day + 1:02d}T{hour:02d}:{quarter * MINUTES_PER_SLOT:02d}"


def timestamp_slot(month: MonthSpec, text: str) -> int:
    match = TIMESTAMP_RE.match(text)
    if not match:
        raise ValueError(f"Malformed timestamp {text!r}")
    year, mon, day, hour, minute = (int(g) for g in match.groups())
    if (year, mon) != (month.year, month.month) or not 1 <= day <= month.days:
        raise ValueError(f"Timestamp {text!r} is outside {month.key}")
    if hour > 23 or minute % MINUTES_PER_SLOT or minute > 45:
        raise ValueError(f"Timestamp {text!r} is not a slot start")
    return (day - 1) * SLOTS_PER_DAY + hour * SLOTS_PER_HOUR + minute // MINUTES_PER_SLOT


# Key-value blobs

def encode_readings(month: MonthSpec, first_slot: int, wh_row: Sequence[int]) -> str:
    """One <r/> element per reading, in slot order starting at first_slot"""
    return "".join(
        f'<r t="{slot_timestamp(month, first_slot + offset)}" kwh="{format_kwh(wh)}"/>'
        for offset, wh in enumerate(np.asarray(wh_row).tolist())
    )


def _decode_elements(month: MonthSpec, elements) -> Tuple[List[int], List[int]]:
    slots, values = [], []
    for element in elements:
        if element.tag != READING_TAG:
            raise ValueError(f"Unexpected element <{element.tag}>")
        slots.append(timestamp_slot(month, element.get("t", "")))
        values.append(parse_kwh(element.get("kwh", "")))
    return slots, values


def decode_readings(month: MonthSpec, text: str) -> Tuple[List[int], List[int]]:
    """Blob -> (slots, watt-hours) in append order"""
    try:
        root = ET.fromstring(f"<blob>{text}</blob>")
    except ET.ParseError as exc:
        raise ValueError(f"Malformed blob: {exc}") from exc
    return _decode_elements(month, root)


# Remote-CN payloads

def encode_daily_batch(month: MonthSpec, batch: DailyBatch) -> bytes:
    first = batch.first_slot()
    parts = [f'<day cn="{batch.cn}" d="{batch.day}">']
    for household, row in zip(batch.households, batch.wh):
        parts.append(f'<h id="{household}">{encode_readings(month, first, row)}</h>')
    parts.append("</day>")
    return "".join(parts).encode("utf-8")


def decode_daily_batch(month: MonthSpec, payload: Union[bytes, str]) -> DailyBatch:
    root = ET.fromstring(payload)
    cn, day = int(root.get("cn")), int(root.get("d"))
    first = day * SLOTS_PER_DAY
    households, rows = [], []
    for node in root:
        slots, values = _decode_elements(month, node)
        if slots != list(range(first, first + SLOTS_PER_DAY)):
            raise ValueError(f"Household {node.get('id')} payload does not cover day {day}")
        households.append(HouseholdId.parse(node.get("id")))
        rows.append(values)
    wh = np.array(rows, dtype=WH_DTYPE).reshape(len(households), SLOTS_PER_DAY)
    return DailyBatch(cn=cn, day=day, households=households, wh=wh)


# Hybrid file system

def consumption_lines(wh_row: Sequence[int]) -> str:
    return "".join(f"{format_kwh(wh)}\n" for wh in np.asarray(wh_row).tolist())


def timestamp_lines(month: MonthSpec, day: int) -> str:
    first = day * SLOTS_PER_DAY
    return "".join(f"{slot},{slot_timestamp(month, slot)}\n" for slot in range(first, first + SLOTS_PER_DAY))


def parse_consumption(text: str) -> np.ndarray:
    """Consumption file -> watt-hours. Raises ValueError on malformed content."""
    tokens = text.split()
    if not tokens:
        return np.zeros(0, dtype=WH_DTYPE)
    if any(len(token.partition(".")[2]) != 3 for token in tokens):
        raise ValueError("Values must have exactly 3 fractional digits")
    # every value is k/1000 for integer k, so the nearest double rounds back exactly
    values = np.rint(np.array(tokens, dtype=np.float64) * WH_PER_KWH).astype(WH_DTYPE)
    if (values < 0).any():
        raise ValueError("Negative consumption value")
    return values


def parse_timestamps(month: MonthSpec, text: str) -> List[int]:
    slots = []
    for number, line in enumerate(text.splitlines(), start=1):
        slot, _, stamp = line.partition(",")
        if not slot.isdigit() or timestamp_slot(month, stamp) != int(slot):
            raise ValueError(f"Line {number}: {line!r}")
        slots.append(int(slot))
    return slots
