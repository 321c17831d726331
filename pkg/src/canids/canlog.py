"""CAN log model, CSV parsing, and synthetic traffic generation.

Two concrete CSV schemas ship with the package (see README for the column
tables):

* HCRL-style: no header; each row is
      timestamp, can_id(hex), dlc, data_0..data_{dlc-1} (hex), flag
  with flag R=normal / T=injected and one attack kind per file.
* CIC-IoV-style: header row; each row is
      timestamp, can_id(hex), dlc, data_0..data_7 (hex), flag[, attack_kind]
  with flag 0=normal / 1=injected and an optional per-row attack column.

Synthetic traffic uses the HCRL row format (optionally with the per-row
attack column, so mixed-attack logs round-trip).
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, IoError, ParseError, SchemaError


class Flag(Enum):
    NORMAL = "normal"
    INJECTED = "injected"


class AttackKind(Enum):
    NONE = "none"
    DOS = "dos"
    FUZZING = "fuzzing"
    GEAR_SPOOF = "gear_spoof"
    RPM_SPOOF = "rpm_spoof"
    SPEED_SPOOF = "speed_spoof"
    STEERING_SPOOF = "steering_spoof"
    GAS_SPOOF = "gas_spoof"


SPOOF_KINDS = frozenset(
    {
        AttackKind.GEAR_SPOOF,
        AttackKind.RPM_SPOOF,
        AttackKind.SPEED_SPOOF,
        AttackKind.STEERING_SPOOF,
        AttackKind.GAS_SPOOF,
    }
)

STANDARD_ID_MAX = 0x7FF
EXTENDED_ID_MAX = 0x1FFFFFFF

# Default arbitration IDs targeted by each spoofing kind (configurable per
# attack; these just give the generator sane values out of the box).
DEFAULT_SPOOF_TARGETS = {
    AttackKind.GEAR_SPOOF: 0x43F,
    AttackKind.RPM_SPOOF: 0x316,
    AttackKind.SPEED_SPOOF: 0x18F,
    AttackKind.STEERING_SPOOF: 0x2B0,
    AttackKind.GAS_SPOOF: 0x220,
}


@dataclass(frozen=True)
class CanFrame:
    """One parsed CAN message."""

    timestamp: float
    can_id: int
    dlc: int
    payload: tuple
    flag: Flag = Flag.NORMAL
    attack_kind: AttackKind = AttackKind.NONE

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc {self.dlc} outside 0..8")
        if len(self.payload) != 8:
            raise ValueError("payload must hold exactly 8 bytes")
        if any(not 0 <= b <= 255 for b in self.payload):
            raise ValueError("payload byte outside 0..255")
        if any(self.payload[i] != 0 for i in range(self.dlc, 8)):
            raise ValueError("payload bytes beyond dlc must be zero")
        if self.can_id < 0:
            raise ValueError("can_id must be non-negative")
        if (self.flag is Flag.INJECTED) != (self.attack_kind is not AttackKind.NONE):
            raise ValueError("flag=Injected iff attack_kind != None")


@dataclass(frozen=True)
class LogSchema:
    """Column conventions of one CSV dialect.

    variable_dlc_columns: rows carry exactly dlc data fields (HCRL style)
    rather than a fixed 8. file_attack assigns the attack kind of injected
    rows when the file does not encode it per row.
    """

    format: str
    has_header: bool = False
    normal_symbol: str = "R"
    injected_symbol: str = "T"
    variable_dlc_columns: bool = True
    attack_column: bool = False
    file_attack: AttackKind = AttackKind.NONE
    extended_ids: bool = False

    def header_fields(self):
        fields = ["timestamp", "can_id", "dlc"] + [f"data_{i}" for i in range(8)] + ["flag"]
        if self.attack_column:
            fields.append("attack_kind")
        return fields


def hcrl_schema(attack=AttackKind.NONE):
    """HCRL car-hacking dialect; one attack kind per file."""
    return LogSchema(format="hcrl", file_attack=attack)


def ciciov_schema(attack=AttackKind.NONE, attack_column=True):
    """CIC-IoV dialect: header, fixed 8 data columns, flag 0/1."""
    return LogSchema(
        format="ciciov",
        has_header=True,
        normal_symbol="0",
        injected_symbol="1",
        variable_dlc_columns=False,
        attack_column=attack_column,
        file_attack=attack,
    )


def synthetic_schema(attack=AttackKind.NONE, attack_column=False):
    """HCRL-compatible rows; set attack_column for mixed-attack logs."""
    return LogSchema(format="synthetic", attack_column=attack_column, file_attack=attack)


_HEX_RE = re.compile(r"[0-9A-Fa-f]+\Z")


def hex_to_dec(text):
    """Positional base-16 value of a plain hex string (no sign/prefix)."""
    if not text or not _HEX_RE.match(text):
        raise ParseError(f"non-hex value {text!r}")
    return int(text, 16)


@dataclass
class ParseReport:
    accepted: int = 0
    malformed: int = 0
    injected: int = 0
    normal: int = 0
    row_errors: list = field(default_factory=list)  # (row number, message), capped
    warnings: list = field(default_factory=list)

    MAX_RECORDED = 20

    def record_error(self, row, message):
        self.malformed += 1
        if len(self.row_errors) < self.MAX_RECORDED:
            self.row_errors.append((row, message))

    def as_dict(self):
        return {
            "accepted": self.accepted,
            "malformed": self.malformed,
            "injected": self.injected,
            "normal": self.normal,
            "row_errors": [list(e) for e in self.row_errors],
            "warnings": list(self.warnings),
        }


_KIND_BY_NAME = {k.value: k for k in AttackKind}


def _parse_row(row, schema, rownum):
    if len(row) < 4:
        raise ParseError(f"row {rownum}: expected at least 4 fields, got {len(row)}")
    try:
        timestamp = float(row[0])
    except ValueError:
        raise ParseError(f"row {rownum} col 1: bad timestamp {row[0]!r}") from None
    try:
        can_id = hex_to_dec(row[1].strip())
    except ParseError as exc:
        raise ParseError(f"row {rownum} col 2: {exc}") from None
    id_max = EXTENDED_ID_MAX if schema.extended_ids else STANDARD_ID_MAX
    if can_id > id_max:
        raise ParseError(f"row {rownum} col 2: can_id {can_id:#x} exceeds {id_max:#x}")
    try:
        dlc = int(row[2])
    except ValueError:
        raise ParseError(f"row {rownum} col 3: bad dlc {row[2]!r}") from None
    if not 0 <= dlc <= 8:
        raise ParseError(f"row {rownum} col 3: dlc {dlc} outside 0..8")

    n_data = dlc if schema.variable_dlc_columns else 8
    expected = 4 + n_data + (1 if schema.attack_column else 0)
    if len(row) != expected:
        raise ParseError(f"row {rownum}: expected {expected} fields, got {len(row)}")

    payload = [0] * 8
    for i in range(n_data):
        cell = row[3 + i].strip()
        try:
            value = hex_to_dec(cell)
        except ParseError as exc:
            raise ParseError(f"row {rownum} col {4 + i}: {exc}") from None
        if value > 255:
            raise ParseError(f"row {rownum} col {4 + i}: byte {value:#x} exceeds 0xff")
        # Bytes at positions >= dlc are padding by contract; force zero.
        payload[i] = value if i < dlc else 0

    flag_cell = row[3 + n_data].strip()
    if flag_cell == schema.normal_symbol:
        flag = Flag.NORMAL
    elif flag_cell == schema.injected_symbol:
        flag = Flag.INJECTED
    else:
        raise ParseError(f"row {rownum} col {4 + n_data}: unknown flag {flag_cell!r}")

    kind = AttackKind.NONE
    if schema.attack_column:
        kind_cell = row[4 + n_data].strip().lower()
        if kind_cell not in ("", "none"):
            kind = _KIND_BY_NAME.get(kind_cell)
            if kind is None:
                raise ParseError(f"row {rownum}: unknown attack kind {kind_cell!r}")
    if flag is Flag.INJECTED and kind is AttackKind.NONE:
        kind = schema.file_attack
        if kind is AttackKind.NONE:
            raise ParseError(
                f"row {rownum}: injected row but schema assigns no attack kind"
            )
    if flag is Flag.NORMAL and kind is not AttackKind.NONE:
        raise ParseError(f"row {rownum}: normal row carries attack kind {kind.value!r}")

    return CanFrame(timestamp, can_id, dlc, tuple(payload), flag, kind)


def parse_log(source, schema, malformed_threshold=0.01):
    """Parse a CSV log into frames plus a ParseReport.

    source may be a path or a text file object. Malformed rows are counted
    (never silently dropped); the parse aborts with ParseError only when
    their fraction exceeds malformed_threshold.
    """
    if hasattr(source, "read"):
        return _parse_stream(source, schema, malformed_threshold)
    try:
        fh = open(source, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot read {source}: {exc}") from None
    with fh:
        return _parse_stream(fh, schema, malformed_threshold)


def _parse_stream(fh, schema, malformed_threshold):
    reader = csv.reader(fh)
    report = ParseReport()
    frames = []
    rows_seen = 0
    last_ts = None
    ts_regressions = 0

    if schema.has_header:
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file, expected header row") from None
        expected = schema.header_fields()
        if [h.strip() for h in header] != expected:
            raise SchemaError(f"header mismatch: got {header!r}, expected {expected!r}")

    for rownum, row in enumerate(reader, start=1 + (1 if schema.has_header else 0)):
        if not row or all(not cell.strip() for cell in row):
            continue
        rows_seen += 1
        try:
            frame = _parse_row(row, schema, rownum)
        except ParseError as exc:
            report.record_error(rownum, str(exc))
            continue
        if last_ts is not None and frame.timestamp < last_ts:
            ts_regressions += 1
        last_ts = frame.timestamp
        report.accepted += 1
        if frame.flag is Flag.INJECTED:
            report.injected += 1
        else:
            report.normal += 1
        frames.append(frame)

    if ts_regressions:
        report.warnings.append(f"{ts_regressions} timestamp regressions")
    if rows_seen and report.malformed / rows_seen > malformed_threshold:
        raise ParseError(
            f"{report.malformed}/{rows_seen} rows malformed "
            f"(threshold {malformed_threshold:.0%}); first: {report.row_errors[:3]}",
            report=report,
        )
    return frames, report


def _format_row(frame, schema):
    ts = repr(frame.timestamp)
    row = [ts, f"{frame.can_id:04x}", str(frame.dlc)]
    n_data = frame.dlc if schema.variable_dlc_columns else 8
    row += [f"{frame.payload[i]:02x}" for i in range(n_data)]
    row.append(
        schema.injected_symbol if frame.flag is Flag.INJECTED else schema.normal_symbol
    )
    if schema.attack_column:
        row.append("" if frame.attack_kind is AttackKind.NONE else frame.attack_kind.value)
    return row


def serialize_frames(frames, schema):
    """CSV text for frames under schema; parse_log inverts it exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if schema.has_header:
        writer.writerow(schema.header_fields())
    for frame in frames:
        writer.writerow(_format_row(frame, schema))
    return buf.getvalue()


def write_csv(frames, schema, path):
    try:
        Path(path).write_text(serialize_frames(frames, schema), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


# ---------------------------------------------------------------------------
# Synthetic traffic


@dataclass(frozen=True)
class BenignId:
    """Periodic benign sender: one frame every `period` seconds."""

    can_id: int
    period: float
    dlc: int = 8
    phase: float = 0.0


@dataclass(frozen=True)
class AttackSpec:
    """One injection campaign active on [start, end) at `rate` frames/s."""

    kind: AttackKind
    rate: float
    start: float
    end: float
    target_id: int = 0  # spoofing only; 0 picks the kind's default
    payload: tuple = ()  # spoofing only; empty picks the kind's default


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    duration: float
    benign: tuple
    attacks: tuple = ()


def _benign_payload(can_id, k, dlc):
    # Deterministic per-ID signal: tag byte, a slow 4-state counter, then
    # ID-derived constants. Zero beyond dlc.
    full = (
        can_id & 0xFF,
        (k >> 4) & 0x03,
        (can_id * 7 + 13) % 256,
        (can_id * 3) % 251,
        (can_id * 7 + 13) % 256,
        (can_id * 11 + 29) % 256,
        (can_id >> 3) & 0xFF,
        (can_id * 5 + 101) % 256,
    )
    return tuple(full[i] if i < dlc else 0 for i in range(8))


def _spoof_payload(kind):
    tag = {
        AttackKind.GEAR_SPOOF: 0x01,
        AttackKind.RPM_SPOOF: 0x02,
        AttackKind.SPEED_SPOOF: 0x03,
        AttackKind.STEERING_SPOOF: 0x04,
        AttackKind.GAS_SPOOF: 0x05,
    }[kind]
    return (0xFF, 0xF0, tag, 0x00, 0xFF, 0xF0, tag, 0x00)


def generate_synthetic(config):
    """Benign periodic traffic with injected attack campaigns.

    DoS floods can_id 0x0; fuzzing injects pseudo-random IDs/payloads;
    spoofing repeats a fixed target ID with a falsified payload. Output is
    timestamp-sorted and identical for identical seeds.
    """
    if not config.benign:
        raise ConfigError("synthetic config needs at least one benign ID")
    for b in config.benign:
        if b.period <= 0:
            raise ConfigError(f"benign id {b.can_id:#x}: period must be > 0")
        if b.can_id == 0:
            raise ConfigError("benign traffic must not use can_id 0 (reserved for DoS)")
        if not 0 < b.can_id <= STANDARD_ID_MAX:
            raise ConfigError(f"benign id {b.can_id:#x} outside standard range")
    for a in config.attacks:
        if a.kind is AttackKind.NONE:
            raise ConfigError("attack kind must not be none")
        if not (0.0 <= a.start <= a.end <= config.duration):
            raise ConfigError(
                f"attack span [{a.start}, {a.end}) outside 0..{config.duration}"
            )
        if a.rate < 0:
            raise ConfigError("attack rate must be >= 0")

    entries = []  # (timestamp, stream index, seq) for a stable total order

    for stream, b in enumerate(config.benign):
        k = 0
        while True:
            t = b.phase + k * b.period
            if t >= config.duration:
                break
            entries.append(
                (
                    t,
                    stream,
                    k,
                    CanFrame(t, b.can_id, b.dlc, _benign_payload(b.can_id, k, b.dlc)),
                )
            )
            k += 1

    seeds = np.random.SeedSequence(config.seed).spawn(len(config.attacks))
    for idx, a in enumerate(config.attacks):
        rng = np.random.default_rng(seeds[idx])
        stream = len(config.benign) + idx
        if a.rate == 0:
            continue
        count = int(np.floor((a.end - a.start) * a.rate))
        for k in range(count):
            t = a.start + k / a.rate
            if t >= a.end:
                break
            if a.kind is AttackKind.DOS:
                frame = CanFrame(t, 0, 8, (0,) * 8, Flag.INJECTED, a.kind)
            elif a.kind is AttackKind.FUZZING:
                can_id = int(rng.integers(1, STANDARD_ID_MAX + 1))
                dlc = int(rng.integers(0, 9))
                data = rng.integers(0, 256, size=8)
                payload = tuple(int(data[i]) if i < dlc else 0 for i in range(8))
                frame = CanFrame(t, can_id, dlc, payload, Flag.INJECTED, a.kind)
            elif a.kind in SPOOF_KINDS:
                target = a.target_id or DEFAULT_SPOOF_TARGETS[a.kind]
                payload = tuple(a.payload) if a.payload else _spoof_payload(a.kind)
                frame = CanFrame(t, target, 8, payload, Flag.INJECTED, a.kind)
            else:  # pragma: no cover - enum is closed
                raise ConfigError(f"unsupported attack kind {a.kind}")
            entries.append((t, stream, k, frame))

    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    return [e[3] for e in entries]


def default_synth_config(seed=7, duration=30.0):
    """The bundled desk-scale corpus: ~42k frames, three attack kinds."""
    third = duration / 5.0
    return SynthConfig(
        seed=seed,
        duration=duration,
        benign=(
            BenignId(0x101, 0.002),
            BenignId(0x1A0, 0.003, phase=0.0011),
            BenignId(0x2C0, 0.005, dlc=4, phase=0.0023),
            BenignId(0x3E0, 0.010, phase=0.0037),
        ),
        attacks=(
            AttackSpec(AttackKind.DOS, rate=600.0, start=0.6 * third, end=1.6 * third),
            AttackSpec(AttackKind.FUZZING, rate=400.0, start=2.0 * third, end=3.0 * third),
            AttackSpec(AttackKind.RPM_SPOOF, rate=400.0, start=3.4 * third, end=4.4 * third),
        ),
    )
