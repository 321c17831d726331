"""Socket replay and online scoring.

Wire format: one ASCII line per frame,
    timestamp,can_id_hex,dlc,d0,...,d7\n
(11 comma-separated fields, payload bytes as two hex digits). Ground-truth
flags are never transmitted, so the scorer cannot peek at labels.

The scorer buffers n frames per window (same non-overlapping stride as
training), runs scale -> encode(mu) -> student, and checks each verdict
against the 10 ms CAN cycle deadline. A malformed line drops the window
being accumulated and resynchronizes at the next line.
"""

from __future__ import annotations

import logging
import socket
import time
from dataclasses import dataclass, field

import numpy as np

from . import distill, vae
from .canlog import CanFrame, EXTENDED_ID_MAX
from .errors import ConfigError, NetError, ParseError
from .features import apply_scaler, frame_features
from .metrics import latency_percentiles

log = logging.getLogger(__name__)

DEADLINE_US = 10_000.0
WIRE_FIELDS = 11


def encode_frame(frame):
    """One wire line (no trailing newline) for a frame."""
    return ",".join(
        [repr(frame.timestamp), f"{frame.can_id:04x}", str(frame.dlc)]
        + [f"{b:02x}" for b in frame.payload]
    )


def decode_line(line):
    """Parse a wire line back into a CanFrame (always flagged normal)."""
    parts = line.split(",")
    if len(parts) != WIRE_FIELDS:
        raise ParseError(f"expected {WIRE_FIELDS} fields, got {len(parts)}")
    try:
        timestamp = float(parts[0])
        can_id = int(parts[1], 16)
        dlc = int(parts[2])
        payload = tuple(int(p, 16) for p in parts[3:11])
    except ValueError as exc:
        raise ParseError(f"bad wire line {line!r}: {exc}") from None
    if can_id < 0 or can_id > EXTENDED_ID_MAX:
        raise ParseError(f"can_id out of range: {can_id}")
    try:
        return CanFrame(timestamp, can_id, dlc, payload)
    except ValueError as exc:
        raise ParseError(f"bad wire line {line!r}: {exc}") from None


class ReplayServer:
    """Serves one client per connection, emitting wire lines in frame order.

    rate_mode: "max" (no pacing), "timestamped" (reproduce original
    inter-frame gaps), or "gap" (fixed inter-frame sleep).
    """

    def __init__(self, frames, host="127.0.0.1", port=0, rate_mode="max", gap=0.0):
        if rate_mode not in ("max", "timestamped", "gap"):
            raise ConfigError(f"unknown rate mode {rate_mode!r}")
        self.frames = frames
        self.rate_mode = rate_mode
        self.gap = gap
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
            self._sock.listen(1)
        except OSError as exc:
            self._sock.close()
            raise NetError(f"cannot bind {host}:{port}: {exc}") from None
        self.host, self.port = self._sock.getsockname()[:2]

    def _send_all(self, conn):
        if self.rate_mode == "max":
            # Chunked writes: pacing-free mode favors throughput.
            chunk = []
            for frame in self.frames:
                chunk.append(encode_frame(frame))
                if len(chunk) >= 512:
                    conn.sendall(("\n".join(chunk) + "\n").encode("ascii"))
                    chunk = []
            if chunk:
                conn.sendall(("\n".join(chunk) + "\n").encode("ascii"))
            return
        prev_ts = None
        for frame in self.frames:
            if self.rate_mode == "gap" and prev_ts is not None:
                time.sleep(self.gap)
            elif self.rate_mode == "timestamped" and prev_ts is not None:
                delta = frame.timestamp - prev_ts
                if delta > 0:
                    time.sleep(delta)
            prev_ts = frame.timestamp
            conn.sendall((encode_frame(frame) + "\n").encode("ascii"))

    def serve(self, max_clients=1):
        """Accept and serve clients; client disconnects are logged, not fatal."""
        served = 0
        while max_clients is None or served < max_clients:
            try:
                conn, peer = self._sock.accept()
            except OSError:
                break  # socket closed from another thread
            with conn:
                try:
                    self._send_all(conn)
                except (BrokenPipeError, ConnectionResetError, OSError) as exc:
                    log.warning("client %s disconnected mid-replay: %s", peer, exc)
            served += 1
        return served

    def close(self):
        self._sock.close()


def replay_serve(frames, host="127.0.0.1", port=0, rate_mode="max", gap=0.0,
                 max_clients=1):
    server = ReplayServer(frames, host, port, rate_mode, gap)
    try:
        return server.serve(max_clients)
    finally:
        server.close()


@dataclass
class Verdict:
    window_index: int
    label: int
    class_name: str
    probability: float
    reconstruction_error: float
    latency_us: float
    deadline_met: bool


@dataclass
class StreamSummary:
    windows: int = 0
    deadline_violations: int = 0
    malformed_lines: int = 0
    trailing_frames: int = 0
    p50_us: float = 0.0
    p99_us: float = 0.0
    max_us: float = 0.0
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "windows": self.windows,
            "deadline_violations": self.deadline_violations,
            "malformed_lines": self.malformed_lines,
            "trailing_frames": self.trailing_frames,
            "p50_us": self.p50_us,
            "p99_us": self.p99_us,
            "max_us": self.max_us,
            "notes": list(self.notes),
        }


class WindowScorer:
    """scale -> encode(mu) -> student pipeline over n-frame windows."""

    def __init__(self, scaler, vae_model, student, layout, n, class_names):
        self.scaler = scaler
        self.vae = vae_model
        self.student = student
        self.layout = layout
        self.n = n
        self.class_names = tuple(class_names)

    def score_window(self, frames):
        """(label, class probability, reconstruction error) for n frames."""
        raw = []
        for frame in frames:
            raw.extend(frame_features(frame, self.layout))
        x = apply_scaler(self.scaler, np.asarray(raw, dtype=np.float64))
        mu = vae.latent_features(self.vae, x)
        xhat = vae.decode(self.vae, mu)
        recon = float(((xhat - x) ** 2).mean())
        labels, probs = distill.predict(self.student, mu)
        label = int(labels[0])
        return label, float(probs[0, label]), recon


def _connect(endpoint):
    if isinstance(endpoint, socket.socket):
        return endpoint, False
    host, port = endpoint
    try:
        return socket.create_connection((host, port)), True
    except OSError as exc:
        raise NetError(f"cannot connect to {host}:{port}: {exc}") from None


def score_stream(endpoint, scorer, deadline_us=DEADLINE_US, on_verdict=None,
                 collect=True):
    """Score a wire-frame stream; returns (verdicts, StreamSummary).

    endpoint is a connected socket or a (host, port) pair. Latency of a
    verdict is measured from the parse of its window's last frame to
    verdict emission on a monotonic clock.
    """
    conn, owned = _connect(endpoint)
    verdicts = []
    latencies = []
    summary = StreamSummary()
    window = []  # frames of the window being accumulated
    window_index = 0
    buffer = b""
    try:
        while True:
            data = conn.recv(1 << 16)
            if not data:
                break
            buffer += data
            lines = buffer.split(b"\n")
            buffer = lines.pop()
            for raw in lines:
                if not raw:
                    continue
                arrived = time.perf_counter_ns()
                try:
                    frame = decode_line(raw.decode("ascii"))
                except (ParseError, UnicodeDecodeError):
                    summary.malformed_lines += 1
                    window = []  # resynchronize from the next line
                    continue
                window.append((frame, arrived))
                if len(window) < scorer.n:
                    continue
                frames = [f for f, _ in window]
                last_arrival = window[-1][1]
                window = []
                label, prob, recon = scorer.score_window(frames)
                latency_us = (time.perf_counter_ns() - last_arrival) / 1e3
                verdict = Verdict(
                    window_index=window_index,
                    label=label,
                    class_name=scorer.class_names[label],
                    probability=prob,
                    reconstruction_error=recon,
                    latency_us=latency_us,
                    deadline_met=latency_us < deadline_us,
                )
                window_index += 1
                latencies.append(latency_us)
                if not verdict.deadline_met:
                    summary.deadline_violations += 1
                if on_verdict is not None:
                    on_verdict(verdict)
                if collect:
                    verdicts.append(verdict)
    except (ConnectionResetError, OSError) as exc:
        summary.notes.append(f"connection dropped: {exc}")
    finally:
        if owned:
            conn.close()

    summary.windows = window_index
    summary.trailing_frames = len(window)
    if window:
        summary.notes.append(f"{len(window)} trailing frames discarded (partial window)")
    if buffer:
        summary.malformed_lines += 1
        summary.notes.append("stream ended mid-line")
    summary.p50_us, summary.p99_us, summary.max_us = latency_percentiles(latencies)
    return verdicts, summary
