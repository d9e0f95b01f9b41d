import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adsgate import determinism as det
from adsgate import stego
from adsgate.metrics import ber
from adsgate.stego import (
    SIGN,
    STREAM,
    CapacityError,
    EccConfig,
    decode_sign,
    decode_stream,
    ecc_decode,
    ecc_encode,
    encode_sign,
    encode_stream,
    make_codec,
    random_payload,
)

REP3 = EccConfig("repetition", 3)
NONE = EccConfig("none", 1)


def sign_anchor(sid=0, key=b"anchor"):
    return make_codec(SIGN, det.StreamKey(key, sid), (64, 64), REP3)


def stream_anchor(sid=0, key=b"anchor"):
    return make_codec(STREAM, det.StreamKey(key, sid), (64, 64), REP3, T=32)


def test_ecc_examples():
    assert ecc_encode([1, 0], REP3).tolist() == [1, 1, 1, 0, 0, 0]
    assert ecc_decode([1, 1, 0], REP3).tolist() == [1]
    assert ecc_decode([0, 1, 0], REP3).tolist() == [0]
    assert ecc_encode([1, 0, 1], NONE).tolist() == [1, 0, 1]
    with pytest.raises(ValueError):
        ecc_decode([1, 1, 0, 1], REP3)
    with pytest.raises(ValueError):
        EccConfig("repetition", 4)
    with pytest.raises(ValueError):
        EccConfig("hamming", 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=64), st.sampled_from([1, 3, 5, 7, 9]))
def test_ecc_round_trip(bits, k):
    cfg = EccConfig("repetition", k)
    assert ecc_decode(ecc_encode(bits, cfg), cfg).tolist() == bits


def test_ecc_corrects_minority_flips():
    cfg = EccConfig("repetition", 5)
    code = ecc_encode([1, 0, 1], cfg)
    code[[0, 1, 6, 7, 12, 14]] ^= 1
    assert ecc_decode(code, cfg).tolist() == [1, 0, 1]


def test_sign_anchor_round_trip():
    cfg = sign_anchor()
    payload = random_payload(cfg.key, 64)
    carrier = encode_sign(payload, cfg)
    assert carrier.shape == (64, 64, 3)
    assert carrier.min() >= -1 and carrier.max() <= 1
    got, info = decode_sign(carrier, cfg, 64)
    assert ber(payload, got) == 0.0
    assert np.array_equal(info.raw_bits, ecc_encode(payload, REP3))
    assert info.converged and info.inversion_residual <= 1e-6


def test_sign_encoding_forces_signs_and_keeps_magnitudes(monkeypatch):
    cfg = sign_anchor(3)
    payload = random_payload(cfg.key, 64)
    code = ecc_encode(payload, REP3)
    base, pos = stego._sign_layout(cfg, code.size)
    assert np.array_equal(pos, stego._sign_positions(cfg, code.size))
    assert len(np.unique(pos)) == code.size
    seen = {}
    monkeypatch.setattr(stego, "ddim_sample", lambda x, den, sched: seen.setdefault("x", x.copy()))
    encode_sign(payload, cfg)
    flat, ref = seen["x"].reshape(-1), base.reshape(-1)
    assert np.array_equal(flat[pos] > 0, code == 1)
    assert np.array_equal(np.abs(flat), np.abs(ref))
    rest = np.setdiff1d(np.arange(flat.size), pos)
    assert np.array_equal(flat[rest], ref[rest])


def test_sign_decode_after_clamp_only():
    cfg = sign_anchor(1)
    payload = random_payload(cfg.key, 64)
    carrier = encode_sign(payload, cfg)
    a, _ = decode_sign(carrier, cfg, 64)
    b, _ = decode_sign(np.clip(carrier, -1, 1), cfg, 64)
    assert np.array_equal(a, b)


def test_sign_wrong_key_is_chance_level():
    # 64-bit payloads make a single-key BER too coarse (sd 0.0625); average over keys
    cfg = sign_anchor(2)
    payload = random_payload(cfg.key, 64)
    carrier = encode_sign(payload, cfg)
    bers = [ber(payload, decode_sign(carrier, cfg.with_key(det.StreamKey(b"other-%d" % k, 2)), 64)[0])
            for k in range(16)]
    assert 0.45 <= np.mean(bers) <= 0.55


def test_sign_wrong_key_95_percent_of_50_keys_at_1024_bits():
    # per-key check of the 0.5 +- 0.1 band needs enough bits to resolve it
    cfg = sign_anchor(4)
    payload = random_payload(cfg.key, 1024)
    carrier = encode_sign(payload, cfg)
    inside = 0
    for k in range(50):
        wrong = cfg.with_key(det.StreamKey(b"wrong-%d" % k, 4))
        b = ber(payload, decode_sign(carrier, wrong, 1024)[0])
        inside += 0.4 <= b <= 0.6
    assert inside >= 48


def test_sign_decode_of_noise_is_chance_level():
    cfg = sign_anchor(5)
    noise = np.random.default_rng(5).uniform(-1, 1, (64, 64, 3))
    payload = random_payload(cfg.key, 1024)
    got, _ = decode_sign(noise, cfg, 1024)
    assert 0.45 <= ber(payload, got) <= 0.55


def test_sign_carrier_is_deterministic():
    cfg = sign_anchor(6)
    payload = random_payload(cfg.key, 64)
    assert np.array_equal(encode_sign(payload, cfg), encode_sign(payload, cfg))


def test_keys_give_different_carriers():
    a = sign_anchor(7, b"k1")
    b = sign_anchor(7, b"k2")
    p = np.ones(64, dtype=np.uint8)
    assert not np.array_equal(encode_sign(p, a), encode_sign(p, b))


def test_capacity_guard_runs_before_any_work(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("sampler must not run")

    monkeypatch.setattr(stego, "ddim_sample", boom)
    cfg = make_codec(SIGN, b"cap", (8, 8), REP3)
    assert cfg.capacity == 192
    with pytest.raises(CapacityError):
        encode_sign(np.ones(65, dtype=np.uint8), cfg)
    with pytest.raises(CapacityError):
        decode_sign(np.zeros((8, 8, 3)), cfg, 65)
    s = stream_anchor()
    assert s.capacity == 31
    with pytest.raises(CapacityError):
        encode_stream(np.ones(11, dtype=np.uint8), s)
    with pytest.raises(ValueError):
        encode_sign(np.zeros(0, dtype=np.uint8), cfg)


def test_decode_rejects_wrong_carrier_size():
    with pytest.raises(ValueError):
        decode_sign(np.zeros((32, 32, 3)), sign_anchor(), 64)


def test_stream_anchor_round_trip_and_margins():
    cfg = stream_anchor()
    payload = random_payload(cfg.key, 8)
    carrier = encode_stream(payload, cfg)
    assert carrier.min() >= -1 and carrier.max() <= 1
    got, info = decode_stream(carrier, cfg, 8)
    assert ber(payload, got) == 0.0
    assert np.all(info.margins > 0)
    _, swapped = decode_stream(carrier, cfg, 8, swap=True)
    assert np.array_equal(swapped.raw_bits, 1 - info.raw_bits)


def test_stream_single_bit():
    for bit in (0, 1):
        cfg = make_codec(STREAM, det.StreamKey(b"one", bit), (32, 32), NONE, T=10)
        carrier = encode_stream([bit], cfg)
        assert decode_stream(carrier, cfg, 1)[0].tolist() == [bit]


def test_stream_wrong_key_is_chance_level():
    cfg = stream_anchor(1)
    payload = random_payload(cfg.key, 8)
    carrier = encode_stream(payload, cfg)
    bers = [ber(payload, decode_stream(carrier, cfg.with_key(det.StreamKey(b"x%d" % k, 1)), 8)[0])
            for k in range(12)]
    assert 0.4 <= np.mean(bers) <= 0.6


def test_stream_carrier_is_deterministic():
    cfg = stream_anchor(2)
    p = random_payload(cfg.key, 8)
    assert np.array_equal(encode_stream(p, cfg), encode_stream(p, cfg))


def test_substreams_are_distinct():
    k = det.StreamKey(b"sub", 5)
    ids = {stego.substream(k, s).stream_id for s in range(4)}
    assert len(ids) == 4
    assert stego.substream(k, stego.SUB_PAYLOAD).stream_id == (5 << 2) | 3


def test_codec_config_validation():
    with pytest.raises(ValueError):
        make_codec("lsb", b"k")
    with pytest.raises(ValueError):
        make_codec(SIGN, b"k", (4, 4))
