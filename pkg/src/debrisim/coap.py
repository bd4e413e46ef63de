"""Encoder/decoder for the CoAP message subset used by the mission protocol.

Framing follows RFC 7252 section 3: a 4-byte header (version, type, token
length, code, message ID), the token, delta-encoded options and an optional
payload introduced by the 0xFF marker.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Tuple

VERSION = 1
PAYLOAD_MARKER = 0xFF
ACK_TIMEOUT_MS = 2000.0
MAX_RETRANSMIT = 4


class MessageType(enum.IntEnum):
    CON = 0
    NON = 1
    ACK = 2
    RST = 3


class Code(enum.IntEnum):
    EMPTY = 0x00
    GET = 0x01
    PUT = 0x03
    CREATED = 0x41
    CHANGED = 0x44
    CONTENT = 0x45
    BAD_REQUEST = 0x80
    NOT_FOUND = 0x84

    @property
    def dotted(self) -> str:
        return f"{self.value >> 5}.{self.value & 0x1F:02d}"

    @property
    def is_request(self) -> bool:
        return 0 < self.value < 0x20


class OptionNumber(enum.IntEnum):
    URI_PATH = 11
    CONTENT_FORMAT = 12


TEXT_PLAIN = 0


class CoapError(ValueError):
    pass


class EncodeError(CoapError):
    pass


class DecodeError(CoapError):
    pass


class VersionError(DecodeError):
    pass


class TokenLengthError(DecodeError):
    pass


class TruncatedError(DecodeError):
    pass


class ReservedNibbleError(DecodeError):
    """Option delta or length nibble 15 outside a payload marker."""


class EmptyPayloadError(DecodeError):
    """Payload marker followed by zero bytes."""


class MessageFormatError(DecodeError):
    """Empty message carrying a token, options or payload."""


class UnknownCodeError(DecodeError):
    pass


@dataclass(frozen=True)
class CoapMessage:
    mtype: MessageType
    code: Code
    message_id: int
    token: bytes = b""
    options: Tuple[Tuple[int, bytes], ...] = ()
    payload: bytes = b""
    version: int = VERSION

    @property
    def uri_path(self) -> str:
        return "/".join(v.decode("utf-8", "replace") for n, v in self.options if n == OptionNumber.URI_PATH)

    @property
    def content_format(self) -> Optional[int]:
        for n, v in self.options:
            if n == OptionNumber.CONTENT_FORMAT:
                return int.from_bytes(v, "big")
        return None

    def describe(self) -> str:
        parts = [self.mtype.name, self.code.name, f"mid={self.message_id}"]
        if self.uri_path:
            parts.append("/" + self.uri_path)
        return " ".join(parts)


def uint_option(value: int) -> bytes:
    """Minimal-length big-endian encoding; zero encodes as no bytes."""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def request(
    code: Code,
    path: str,
    message_id: int,
    payload: bytes = b"",
    mtype: MessageType = MessageType.CON,
    token: bytes = b"",
    content_format: Optional[int] = None,
) -> CoapMessage:
    options = [(int(OptionNumber.URI_PATH), seg.encode()) for seg in path.strip("/").split("/") if seg]
    if content_format is not None:
        options.append((int(OptionNumber.CONTENT_FORMAT), uint_option(content_format)))
    return CoapMessage(mtype, code, message_id, token, tuple(options), payload)


def piggybacked(req: CoapMessage, code: Code, payload: bytes = b"") -> CoapMessage:
    return CoapMessage(MessageType.ACK, code, req.message_id, req.token, (), payload)


def empty_ack(message_id: int) -> CoapMessage:
    return CoapMessage(MessageType.ACK, Code.EMPTY, message_id)


def reset(message_id: int) -> CoapMessage:
    return CoapMessage(MessageType.RST, Code.EMPTY, message_id)


# -- wire format ---------------------------------------------------------------

def _check(m: CoapMessage) -> None:
    if m.version != VERSION:
        raise EncodeError(f"version must be {VERSION}, got {m.version}")
    if len(m.token) > 8:
        raise EncodeError(f"token length {len(m.token)} exceeds 8 bytes")
    if not 0 <= m.message_id <= 0xFFFF:
        raise EncodeError(f"message_id {m.message_id} outside 0..65535")
    if m.code == Code.EMPTY and (m.token or m.options or m.payload):
        raise EncodeError("Empty message must not carry token, options or payload")
    numbers = [n for n, _ in m.options]
    if numbers != sorted(numbers):
        raise EncodeError("options must be sorted by option number")
    previous = 0
    for n, v in m.options:
        if n < 0:
            raise EncodeError(f"negative option number {n}")
        if n - previous > 65804:
            raise EncodeError(f"option delta {n - previous} exceeds 65804")
        previous = n
        if len(v) > 255:
            raise EncodeError(f"option {n} value length {len(v)} exceeds 255")


def _nibble(value: int) -> Tuple[int, bytes]:
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    return 14, (value - 269).to_bytes(2, "big")


def encode_message(m: CoapMessage) -> bytes:
    _check(m)
    out = bytearray()
    out.append((m.version << 6) | (int(m.mtype) << 4) | len(m.token))
    out.append(int(m.code))
    out += m.message_id.to_bytes(2, "big")
    out += m.token
    previous = 0
    for number, value in m.options:
        delta, delta_ext = _nibble(number - previous)
        length, length_ext = _nibble(len(value))
        out.append((delta << 4) | length)
        out += delta_ext + length_ext + value
        previous = number
    if m.payload:
        out.append(PAYLOAD_MARKER)
        out += m.payload
    return bytes(out)


def _read_ext(nibble: int, data: bytes, pos: int, what: str) -> Tuple[int, int]:
    if nibble < 13:
        return nibble, pos
    if nibble == 13:
        if pos + 1 > len(data):
            raise TruncatedError(f"truncated option {what} extension")
        return data[pos] + 13, pos + 1
    if pos + 2 > len(data):
        raise TruncatedError(f"truncated option {what} extension")
    return int.from_bytes(data[pos : pos + 2], "big") + 269, pos + 2


def decode_message(data: bytes) -> CoapMessage:
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedError(f"truncated header: {len(data)} of 4 bytes")
    version = data[0] >> 6
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    mtype = MessageType((data[0] >> 4) & 0x3)
    tkl = data[0] & 0x0F
    if tkl > 8:
        raise TokenLengthError(f"token length {tkl} exceeds 8")
    try:
        code = Code(data[1])
    except ValueError:
        raise UnknownCodeError(f"unsupported code {data[1] >> 5}.{data[1] & 0x1F:02d}") from None
    message_id = int.from_bytes(data[2:4], "big")
    pos = 4
    if pos + tkl > len(data):
        raise TruncatedError("truncated token")
    token = data[pos : pos + tkl]
    pos += tkl

    options = []
    number = 0
    payload = b""
    while pos < len(data):
        byte = data[pos]
        pos += 1
        if byte == PAYLOAD_MARKER:
            payload = data[pos:]
            if not payload:
                raise EmptyPayloadError("payload marker with empty payload")
            break
        delta_n, length_n = byte >> 4, byte & 0x0F
        if delta_n == 15 or length_n == 15:
            raise ReservedNibbleError(f"reserved option nibble in byte 0x{byte:02X}")
        delta, pos = _read_ext(delta_n, data, pos, "delta")
        length, pos = _read_ext(length_n, data, pos, "length")
        if pos + length > len(data):
            raise TruncatedError("truncated option value")
        number += delta
        options.append((number, data[pos : pos + length]))
        pos += length

    if code == Code.EMPTY and (token or options or payload):
        raise MessageFormatError("Empty message carries token, options or payload")
    return CoapMessage(mtype, code, message_id, token, tuple(options), payload, version)


def parse_hex(text: str) -> bytes:
    return bytes.fromhex("".join(text.split()))


def to_hex(data: bytes) -> str:
    return data.hex(" ").upper()


# -- response matching ---------------------------------------------------------

@dataclass(frozen=True)
class RequestKey:
    peer: Hashable
    message_id: int
    token: bytes = b""


@dataclass(frozen=True)
class Match:
    key: RequestKey
    rejected: bool = False


def match_response(outstanding: Iterable[RequestKey], m: CoapMessage, peer: Hashable) -> Optional[Match]:
    """Find the outstanding request answered by ``m``.

    A piggybacked ACK must match peer, message ID and token; a reset only
    carries the message ID, so it matches on peer and message ID and is
    flagged as a rejection.
    """
    for key in outstanding:
        if key.peer != peer or key.message_id != m.message_id:
            continue
        if m.mtype == MessageType.RST:
            return Match(key, rejected=True)
        if m.mtype == MessageType.ACK and key.token == m.token:
            return Match(key)
    return None


@dataclass
class MessageIds:
    """Per-endpoint message ID allocator (wraps at 16 bits)."""

    next_id: int = 1
    issued: int = field(default=0, repr=False)

    def allocate(self) -> int:
        mid = self.next_id
        self.next_id = (self.next_id + 1) & 0xFFFF
        self.issued += 1
        return mid
