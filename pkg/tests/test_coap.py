import random

import pytest

from debrisim import coap
from debrisim.coap import CoapMessage, Code, MessageType, RequestKey

GET_HEX = "40 01 12 34 B7 6D 69 73 73 69 6F 6E"
GET_MISSION = CoapMessage(MessageType.CON, Code.GET, 0x1234, b"", ((11, b"mission"),))
EMPTY_ACK = CoapMessage(MessageType.ACK, Code.EMPTY, 0x1234)
CONTENT_0 = CoapMessage(MessageType.ACK, Code.CONTENT, 0x1234, payload=b"0")


@pytest.mark.parametrize(
    "msg, text",
    [
        (GET_MISSION, GET_HEX),
        (EMPTY_ACK, "60 00 12 34"),
        (CONTENT_0, "60 45 12 34 FF 30"),
    ],
)
def test_vectors(msg, text):
    assert coap.to_hex(coap.encode_message(msg)) == text
    assert coap.decode_message(coap.parse_hex(text)) == msg


def test_builder_matches_vector():
    assert coap.encode_message(coap.request(Code.GET, "mission", 0x1234)) == coap.parse_hex(GET_HEX)
    assert len(coap.encode_message(GET_MISSION)) == 12


def test_parse_hex_accepts_any_whitespace():
    assert coap.parse_hex("4001\n1234\tB76D69 73 73 69 6F 6E") == coap.parse_hex(GET_HEX)


@pytest.mark.parametrize(
    "text, error",
    [
        ("80 01 00 01", coap.VersionError),
        ("40 01 12", coap.TruncatedError),
        ("", coap.TruncatedError),
        ("49 01 00 01", coap.TokenLengthError),
        ("42 01 00 01 AA", coap.TruncatedError),
        ("40 01 00 01 B7 6D 69", coap.TruncatedError),
        ("40 01 00 01 D0", coap.TruncatedError),
        ("40 01 00 01 E0 00", coap.TruncatedError),
        ("40 01 00 01 F0", coap.ReservedNibbleError),
        ("40 01 00 01 1F", coap.ReservedNibbleError),
        ("40 01 00 01 FF", coap.EmptyPayloadError),
        ("60 00 00 01 FF 30", coap.MessageFormatError),
        ("41 00 00 01 AA", coap.MessageFormatError),
        ("40 07 00 01", coap.UnknownCodeError),
    ],
)
def test_malformed(text, error):
    with pytest.raises(error):
        coap.decode_message(coap.parse_hex(text))


def test_decode_errors_share_a_base():
    assert issubclass(coap.VersionError, coap.DecodeError)
    assert issubclass(coap.DecodeError, coap.CoapError)


def test_random_garbage_never_escapes_decode_error():
    rng = random.Random(7)
    for _ in range(3000):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 24)))
        try:
            coap.decode_message(data)
        except coap.DecodeError:
            pass


@pytest.mark.parametrize(
    "msg, rule",
    [
        (CoapMessage(MessageType.CON, Code.GET, 1, token=b"123456789"), "token"),
        (CoapMessage(MessageType.CON, Code.GET, 70000), "message_id"),
        (CoapMessage(MessageType.ACK, Code.EMPTY, 1, payload=b"x"), "Empty"),
        (CoapMessage(MessageType.CON, Code.GET, 1, options=((12, b""), (11, b"a"))), "sorted"),
        (CoapMessage(MessageType.CON, Code.GET, 1, options=((11, b"x" * 256),)), "255"),
        (CoapMessage(MessageType.CON, Code.GET, 1, version=2), "version"),
    ],
)
def test_encode_rejects_invalid(msg, rule):
    with pytest.raises(coap.EncodeError, match=rule):
        coap.encode_message(msg)


def test_extended_option_fields():
    for number, value in [(11, b"x" * 13), (11, b"x" * 255), (300, b"a"), (1000, b"")]:
        msg = CoapMessage(MessageType.NON, Code.PUT, 9, b"\x01", ((number, value),), b"body")
        assert coap.decode_message(coap.encode_message(msg)) == msg


def _random_message(rng: random.Random) -> CoapMessage:
    code = rng.choice(list(Code))
    if code == Code.EMPTY:
        return CoapMessage(rng.choice(list(MessageType)), code, rng.randrange(0x10000))
    numbers = sorted(rng.choice([1, 4, 11, 11, 12, 15, 35, 60, 300, 2000]) for _ in range(rng.randrange(0, 5)))
    sizes = [0, 1, 5, 12, 13, 14, 200, 255, 268]
    options = tuple((n, bytes(rng.randrange(256) for _ in range(min(rng.choice(sizes), 255)))) for n in numbers)
    payload = bytes(rng.randrange(256) for _ in range(rng.choice([0, 0, 1, 9, 40])))
    token = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 9)))
    return CoapMessage(rng.choice(list(MessageType)), code, rng.randrange(0x10000), token, options, payload)


def test_round_trip_randomized():
    rng = random.Random(2024)
    for _ in range(1500):
        msg = _random_message(rng)
        assert coap.decode_message(coap.encode_message(msg)) == msg


def test_code_formatting():
    assert Code.CONTENT.dotted == "2.05"
    assert Code.NOT_FOUND.dotted == "4.04"
    assert Code.GET.is_request and not Code.CHANGED.is_request


def test_content_format_option():
    msg = coap.request(Code.PUT, "mission", 5, b"speed:1", content_format=0)
    assert msg.content_format == 0
    assert coap.decode_message(coap.encode_message(msg)).content_format == 0


# -- matching ------------------------------------------------------------------


def test_match_ack():
    key = RequestKey("mothership", 7, b"\x42")
    ack = CoapMessage(MessageType.ACK, Code.CONTENT, 7, b"\x42", payload=b"0")
    assert coap.match_response({key}, ack, "mothership").key == key


def test_wrong_token_unmatched():
    key = RequestKey("mothership", 7, b"\x42")
    ack = CoapMessage(MessageType.ACK, Code.CONTENT, 7, b"\x43")
    assert coap.match_response({key}, ack, "mothership") is None


def test_wrong_peer_unmatched():
    key = RequestKey("mothership", 7)
    assert coap.match_response({key}, coap.empty_ack(7), "base") is None


def test_reset_flagged_rejected():
    key = RequestKey("mothership", 7, b"\x42")
    match = coap.match_response({key}, coap.reset(7), "mothership")
    assert match.key == key and match.rejected


def test_message_ids_wrap():
    ids = coap.MessageIds(next_id=0xFFFF)
    assert [ids.allocate() for _ in range(3)] == [0xFFFF, 0, 1]
