"""Basic-safety-message records: parsing, labeling, serialization.

Two input formats are accepted, detected per line/stream:

* JSON lines, one object per message, with the fields ``type``, ``sendTime``,
  ``sender``, ``senderPseudo``, ``messageID`` and the arrays ``pos``, ``spd``,
  ``acl``, ``hed`` (each length >= 2; extra entries ignored).
* CSV with the header
  ``sendTime,sender,senderPseudo,messageID,pos_x,pos_y,spd_x,spd_y,acl_x,acl_y,hed_x,hed_y``.

Ground-truth class labels ride in a sidecar JSON file mapping sender id to
class (0 = normal, 1..19 = attack classes).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import VidsError

CSV_HEADER = ("sendTime,sender,senderPseudo,messageID,"
              "pos_x,pos_y,spd_x,spd_y,acl_x,acl_y,hed_x,hed_y")

FEATURE_NAMES = ("pos_x", "pos_y", "spd_x", "spd_y",
                 "acl_x", "acl_y", "hed_x", "hed_y")


@dataclass
class BsmRecord:
    send_time: float
    sender_id: int
    pseudo_id: int
    message_id: int
    pos_x: float = 0.0
    pos_y: float = 0.0
    spd_x: float = 0.0
    spd_y: float = 0.0
    acl_x: float = 0.0
    acl_y: float = 0.0
    hed_x: float = 0.0
    hed_y: float = 0.0
    label: int = 0

    def __post_init__(self):
        if not math.isfinite(self.send_time):
            raise ValueError("send_time must be finite")
        if not 0 <= self.label <= 19:
            raise ValueError(f"label {self.label} outside [0, 19]")

    def features(self) -> tuple:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)


@dataclass
class ParseResult:
    records: list
    skipped: int = 0


def parse_records(stream) -> ParseResult:
    """Parse line-delimited records from a path, file object, or line iterable.

    Malformed lines are counted and skipped; record order is preserved.
    """
    if isinstance(stream, (str, Path)):
        try:
            with open(stream, "r", encoding="utf-8") as fh:
                return parse_records(fh.readlines())
        except OSError as exc:
            raise VidsError(f"cannot read record stream: {exc}") from exc
    lines = [ln.rstrip("\n") for ln in stream]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        return ParseResult([], 0)
    if lines[0].lstrip().startswith("{"):
        return _parse_json_lines(lines)
    return _parse_csv_lines(lines)


def _parse_json_lines(lines) -> ParseResult:
    records, skipped = [], 0
    for line in lines:
        try:
            obj = json.loads(line)
            records.append(BsmRecord(
                send_time=float(obj["sendTime"]),
                sender_id=int(obj["sender"]),
                pseudo_id=int(obj["senderPseudo"]),
                message_id=int(obj["messageID"]),
                pos_x=float(obj["pos"][0]), pos_y=float(obj["pos"][1]),
                spd_x=float(obj["spd"][0]), spd_y=float(obj["spd"][1]),
                acl_x=float(obj["acl"][0]), acl_y=float(obj["acl"][1]),
                hed_x=float(obj["hed"][0]), hed_y=float(obj["hed"][1]),
            ))
        except (KeyError, IndexError, TypeError, ValueError):
            skipped += 1
    return ParseResult(records, skipped)


def _parse_csv_lines(lines) -> ParseResult:
    header = [h.strip() for h in lines[0].split(",")]
    expected = CSV_HEADER.split(",")
    if header != expected:
        raise VidsError(f"unexpected CSV header {lines[0]!r}")
    records, skipped = [], 0
    for line in lines[1:]:
        parts = line.split(",")
        try:
            if len(parts) != len(expected):
                raise ValueError("field count")
            records.append(BsmRecord(
                send_time=float(parts[0]), sender_id=int(parts[1]),
                pseudo_id=int(parts[2]), message_id=int(parts[3]),
                pos_x=float(parts[4]), pos_y=float(parts[5]),
                spd_x=float(parts[6]), spd_y=float(parts[7]),
                acl_x=float(parts[8]), acl_y=float(parts[9]),
                hed_x=float(parts[10]), hed_y=float(parts[11]),
            ))
        except ValueError:
            skipped += 1
    return ParseResult(records, skipped)


def serialize_records(records) -> str:
    """Render records as JSON lines in the documented input schema."""
    out = []
    for r in records:
        out.append(json.dumps({
            "type": 3,
            "sendTime": r.send_time,
            "sender": r.sender_id,
            "senderPseudo": r.pseudo_id,
            "messageID": r.message_id,
            "pos": [r.pos_x, r.pos_y],
            "spd": [r.spd_x, r.spd_y],
            "acl": [r.acl_x, r.acl_y],
            "hed": [r.hed_x, r.hed_y],
        }))
    return "\n".join(out) + ("\n" if out else "")


def load_label_map(path) -> dict:
    """Read the sidecar ``sender_id -> class`` mapping."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {int(k): int(v) for k, v in raw.items()}


def apply_labels(records, label_map: dict) -> None:
    """Stamp each record's label from the sender mapping (default 0)."""
    for r in records:
        r.label = int(label_map.get(r.sender_id, 0))
