import pytest

from proud import messages as msg
from proud.errors import FrameError


def test_kind_classes():
    # every kind is classified, and nothing is ever marked plaintext
    for kind in (msg.HELLO, msg.MODEL_ACK, msg.INPUT_SET, msg.NLNF_REQ, msg.RESULT, msg.ERROR):
        assert msg.CLASS_BY_KIND[kind] in ("public", "ciphertext")
    assert msg.CLASS_BY_KIND[msg.INPUT_SET] == "ciphertext"
    assert msg.CLASS_BY_KIND[msg.NLNF_REQ] == "ciphertext"
    assert msg.CLASS_BY_KIND[msg.RESULT] == "ciphertext"
    assert msg.CLASS_BY_KIND[msg.HELLO] == "public"


def test_hello_roundtrip():
    params, pk = b"PARAMS" * 10, b"PK" * 5000
    out = msg.decode_hello(msg.encode_hello(params, pk))
    assert out == (params, pk)


def test_model_ack_roundtrip():
    summary = [("linear", 16, 64), ("activation", "relu"), ("linear", 10, 16)]
    assert msg.decode_model_ack(msg.encode_model_ack(summary)) == summary


def test_model_ack_all_activation_kinds():
    for kind in ("relu", "sigmoid", "tanh", "square"):
        summary = [("linear", 2, 2), ("activation", kind)]
        assert msg.decode_model_ack(msg.encode_model_ack(summary)) == summary


def test_input_set_roundtrip():
    blobs = [b"a" * 10, b"bb" * 20, b""]
    idx, out = msg.decode_input_set(msg.encode_input_set(3, blobs))
    assert idx == 3
    assert out == blobs


def test_nlnf_req_roundtrip():
    idx, blob = msg.decode_nlnf_req(msg.encode_nlnf_req(7, b"CT" * 99))
    assert idx == 7
    assert blob == b"CT" * 99


def test_result_roundtrip():
    assert msg.decode_result(msg.encode_result(b"xyz")) == b"xyz"


def test_error_roundtrip():
    code, detail = msg.decode_error(msg.encode_error(msg.E_LEVEL, "level 0 exhausted"))
    assert code == msg.E_LEVEL
    assert detail == "level 0 exhausted"
    # unicode survives
    _, d = msg.decode_error(msg.encode_error(1, "bad dim → 16"))
    assert d == "bad dim → 16"


def test_error_detail_capped():
    # the error path never throws twice: long details are truncated instead
    payload = msg.encode_error(1, "x" * 5000)
    _, detail = msg.decode_error(payload)
    assert len(detail) == 4096


def test_truncation_detected():
    payloads = [
        msg.encode_hello(b"p" * 8, b"k" * 8),
        msg.encode_model_ack([("linear", 2, 2)]),
        msg.encode_input_set(0, [b"abc"]),
        msg.encode_nlnf_req(1, b"abc"),
        msg.encode_result(b"abc"),
        msg.encode_error(2, "oops"),
    ]
    decoders = [
        msg.decode_hello,
        msg.decode_model_ack,
        msg.decode_input_set,
        msg.decode_nlnf_req,
        msg.decode_result,
        msg.decode_error,
    ]
    for payload, dec in zip(payloads, decoders):
        with pytest.raises(FrameError):
            dec(payload[:-1])
    # every decoder except the lenient error path rejects trailing junk
    for payload, dec in zip(payloads[:-1], decoders[:-1]):
        with pytest.raises(FrameError):
            dec(payload + b"\x00")


def test_model_ack_rejects_unknown_tag():
    with pytest.raises(FrameError):
        msg.decode_model_ack(b"\x01\x00\x09\x00\x00")
