import struct

import numpy as np
import pytest

from rpnforge.nn.checkpoint import MAGIC, load_checkpoint, save_checkpoint


def test_round_trip_bit_exact():
    rng = np.random.default_rng(0)
    params = {
        "extractor.stem.weights": rng.standard_normal((3, 3, 3, 8)),
        "rpn.cls.bias": rng.standard_normal(30),
        "scalarish": np.array(3.75),
    }
    out = load_checkpoint(save_checkpoint(params))
    assert list(out) == list(params)
    for name in params:
        assert out[name].shape == params[name].shape
        assert np.array_equal(out[name], params[name])


def test_empty_container():
    assert load_checkpoint(save_checkpoint({})) == {}


def test_magic_bytes_prefix():
    data = save_checkpoint({"a": np.zeros(2)})
    assert data[:4] == MAGIC == b"RPNF"


def test_bad_magic_rejected():
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(b"XXXX" + b"\x00" * 16)


def test_unknown_version_rejected():
    data = bytearray(save_checkpoint({"a": np.zeros(2)}))
    data[4:8] = struct.pack("<I", 99)
    with pytest.raises(ValueError, match="version 99"):
        load_checkpoint(bytes(data))


def test_truncated_values_reports_offset():
    data = save_checkpoint({"a": np.zeros(4)})
    with pytest.raises(ValueError, match="truncated.*byte"):
        load_checkpoint(data[:-8])


def test_truncated_header():
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(b"RPNF\x01")


def test_utf8_names():
    params = {"weights/étage": np.arange(3.0)}
    out = load_checkpoint(save_checkpoint(params))
    assert "weights/étage" in out


def test_detector_params_restore_bit_exact():
    from rpnforge.detector import Detector, DetectorConfig

    cfg = DetectorConfig(widths=(4, 6), stride=4, rpn_channels=4, fc_dim=8, roi_pool_h=3, roi_pool_w=3)
    a = Detector(cfg, np.random.default_rng(1))
    b = Detector(cfg, np.random.default_rng(2))
    blob = save_checkpoint(a.param_dict())
    b.load_param_dict(load_checkpoint(blob))
    for pa, pb in zip(a.params(), b.params()):
        assert pa.name == pb.name
        assert np.array_equal(pa.value, pb.value)


def test_detector_rejects_mismatched_checkpoint():
    from rpnforge.detector import Detector, DetectorConfig

    cfg = DetectorConfig(widths=(4, 6), stride=4, rpn_channels=4, fc_dim=8, roi_pool_h=3, roi_pool_w=3)
    model = Detector(cfg, np.random.default_rng(1))
    with pytest.raises(ValueError, match="missing"):
        model.load_param_dict({"nope": np.zeros(3)})
