"""Deterministic simulated short-range transport.

Stands in for BLE/NFC/WiFi: a verifier "detects" the devices listed for it
in the proximity map, and entities exchange framed byte messages through
per-entity inboxes.  Every frame is recorded verbatim in the trace.
"""

import hashlib
import random
import struct
from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import SerializationError

MSG_TICKET = 0x01
MSG_PARTIAL = 0x02
MSG_ACCREDIT = 0x03
MSG_VERDICT = 0x04
MSG_PAYMENT = 0x05
MSG_RECEIPT = 0x06
MESSAGE_TYPES = {
    MSG_TICKET: "ticket",
    MSG_PARTIAL: "partial-sig",
    MSG_ACCREDIT: "accreditation",
    MSG_VERDICT: "verdict",
    MSG_PAYMENT: "payment",
    MSG_RECEIPT: "receipt",
}


def frame(msg_type, payload):
    if msg_type not in MESSAGE_TYPES:
        raise ValueError(f"unknown message type {msg_type:#04x}")
    return bytes([msg_type]) + bytes(payload)


def unframe(data):
    data = bytes(data)
    if not data or data[0] not in MESSAGE_TYPES:
        raise SerializationError("unknown or missing frame type")
    return data[0], data[1:]


@dataclass(frozen=True)
class TraceRecord:
    time: int
    src: str
    dst: str
    frame: bytes
    delivered: bool

    def encode(self):
        src, dst = self.src.encode(), self.dst.encode()
        return (struct.pack(">QH", self.time, len(src)) + src + struct.pack(">H", len(dst)) + dst
                + struct.pack(">?I", self.delivered, len(self.frame)) + self.frame)


class SimTransport:
    """Single event loop; delivery order is send order.

    ``drop_probability`` is zero by default and only meant for robustness
    tests; drops are drawn from a generator seeded independently of
    ``rng`` so enabling them does not perturb protocol randomness.
    """

    def __init__(self, seed=0, drop_probability=0.0):
        self.seed = seed
        self.clock = 0
        self.rng = random.Random(seed)
        self._drop_rng = random.Random(f"drop/{seed}")
        self.drop_probability = drop_probability
        self.inboxes = defaultdict(deque)
        self.proximity = defaultdict(set)
        self.trace = []

    def advance(self, seconds):
        if seconds < 0:
            raise ValueError("the logical clock never runs backwards")
        self.clock += seconds

    def place(self, verifier_id, device_id, in_range=True):
        if in_range:
            self.proximity[verifier_id].add(device_id)
        else:
            self.proximity[verifier_id].discard(device_id)

    def detect(self, verifier_id):
        return sorted(self.proximity[verifier_id])

    def send(self, src, dst, data):
        delivered = not (self.drop_probability and self._drop_rng.random() < self.drop_probability)
        self.trace.append(TraceRecord(self.clock, src, dst, bytes(data), delivered))
        if delivered:
            self.inboxes[dst].append((src, bytes(data)))
        return delivered

    def receive(self, dst):
        """Next ``(src, frame)`` for ``dst`` or ``None``."""
        box = self.inboxes[dst]
        return box.popleft() if box else None

    def drain(self, dst):
        out = []
        while (item := self.receive(dst)) is not None:
            out.append(item)
        return out

    def trace_bytes(self):
        return b"".join(r.frame for r in self.trace)

    def trace_digest(self):
        h = hashlib.sha256()
        for r in self.trace:
            h.update(r.encode())
        return h.hexdigest()
