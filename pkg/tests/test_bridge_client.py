import sys
from pathlib import Path

import numpy as np
import pytest

from beamloc import (
    BridgeDimensionError,
    BridgeProtocolError,
    BridgeRemoteError,
    BridgeTimeoutError,
    FeatureMap,
    PixelRect,
    write_fmap1,
)
from beamloc.bridge import BridgeClient, BridgeHead, BridgeProvider

STUB = Path(__file__).parent / "stub_bridge.py"


def stub_cmd(*extra):
    return [sys.executable, str(STUB), *extra]


@pytest.fixture
def fixtures(tmp_path):
    g = np.random.default_rng(0)
    tensor = FeatureMap(g.normal(size=(7, 7, 512)).astype(np.float32).astype(np.float64))
    tensor_path = tmp_path / "tensor.fmap"
    tensor_path.write_bytes(write_fmap1(tensor))
    scores = g.uniform(size=4).astype("<f4")
    scores_path = tmp_path / "scores.f32"
    scores_path.write_bytes(scores.tobytes())
    return tensor, tensor_path, scores, scores_path


class TestBridgeClient:
    def test_handshake_fields(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        with BridgeClient(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        ) as client:
            assert client.handshake.grid_size == 7
            assert client.handshake.channels == 512
            assert client.handshake.classes == 4
            assert client.handshake.model == "stub"

    def test_extract_round_trips_bit_exactly(self, fixtures):
        tensor, tensor_path, _, scores_path = fixtures
        with BridgeClient(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        ) as client:
            fmap = client.extract("img.png", PixelRect(0, 0, 224, 224))
            assert write_fmap1(fmap) == tensor_path.read_bytes()
            np.testing.assert_array_equal(fmap.values, tensor.values)

    def test_score_round_trips(self, fixtures):
        tensor, tensor_path, scores, scores_path = fixtures
        with BridgeClient(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        ) as client:
            out = client.score(tensor)
            np.testing.assert_array_equal(out, scores.astype(np.float64))
            again = client.score(tensor)
            np.testing.assert_array_equal(out, again)

    def test_bad_rect_reported_with_code(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        with BridgeClient(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        ) as client:
            with pytest.raises(BridgeRemoteError) as err:
                client.extract("img.png", PixelRect(200, 200, 100, 100))
            assert err.value.code == "bad-rect"
            # session continues after an error frame
            fmap = client.extract("img.png", PixelRect(0, 0, 10, 10))
            assert fmap.grid_size == 7

    def test_dimension_mismatch_detected(self, tmp_path, fixtures):
        _, _, _, scores_path = fixtures
        wrong = FeatureMap(np.zeros((6, 6, 256)))
        wrong_path = tmp_path / "wrong.fmap"
        wrong_path.write_bytes(write_fmap1(wrong))
        # handshake promises 7x7x512 but the worker serves 6x6x256
        with BridgeClient(
            stub_cmd("--tensor", str(wrong_path), "--scores", str(scores_path))
        ) as client:
            with pytest.raises(BridgeDimensionError):
                client.extract("img.png", PixelRect(0, 0, 10, 10))

    def test_closed_pipe_is_protocol_error(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        client = BridgeClient(
            stub_cmd(
                "--tensor", str(tensor_path), "--scores", str(scores_path),
                "--misbehave", "close-early",
            )
        )
        with pytest.raises(BridgeProtocolError):
            client.extract("img.png", PixelRect(0, 0, 10, 10))

    def test_wrong_reply_opcode_is_protocol_error(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        with BridgeClient(
            stub_cmd(
                "--tensor", str(tensor_path), "--scores", str(scores_path),
                "--misbehave", "wrong-opcode",
            )
        ) as client:
            with pytest.raises(BridgeProtocolError):
                client.extract("img.png", PixelRect(0, 0, 10, 10))

    def test_garbage_length_is_protocol_error(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        client = BridgeClient(
            stub_cmd(
                "--tensor", str(tensor_path), "--scores", str(scores_path),
                "--misbehave", "garbage",
            )
        )
        with pytest.raises(BridgeProtocolError):
            client.extract("img.png", PixelRect(0, 0, 10, 10))

    def test_timeout(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        client = BridgeClient(
            stub_cmd(
                "--tensor", str(tensor_path), "--scores", str(scores_path),
                "--misbehave", "slow",
            ),
            timeout=0.5,
        )
        with pytest.raises(BridgeTimeoutError):
            client.extract("img.png", PixelRect(0, 0, 10, 10))
        client._proc.kill()

    def test_clean_shutdown_exit_zero(self, fixtures):
        _, tensor_path, _, scores_path = fixtures
        client = BridgeClient(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        )
        client.close()
        assert client._proc.returncode == 0


class TestBridgeProviderHead:
    def test_provider_and_head_surface(self, fixtures):
        tensor, tensor_path, scores, scores_path = fixtures
        with BridgeProvider(
            stub_cmd("--tensor", str(tensor_path), "--scores", str(scores_path))
        ) as provider:
            assert provider.grid_size == 7
            assert provider.channels == 512
            fmap = provider.extract("img.png", PixelRect(0, 0, 32, 32))
            head = BridgeHead(provider)
            assert head.class_count == 4
            np.testing.assert_array_equal(head.score(fmap), scores.astype(np.float64))
