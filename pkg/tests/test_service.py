import base64
import io
import wave

import numpy as np
import pytest
from fastapi.testclient import TestClient

from prosobench.audio import read_wav
from prosobench.service import create_app


@pytest.fixture(scope="module")
def client(tiny_checkpoint, mini_stats):
    _, model = tiny_checkpoint
    _, _, stats = mini_stats
    return TestClient(create_app(model, stats, gl_iterations=8))


def zero_bias():
    return {"pitch": 0.0, "pitch_range": 0.0, "duration": 0.0, "energy": 0.0, "tilt": 0.0}


class TestBasicEndpoints:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_model_info(self, client):
        r = client.get("/model/info")
        assert r.status_code == 200
        body = r.json()
        assert body["config"]["n_mels"] == 32
        assert body["vocab"][-1] == "sil"
        assert "step" in body

    def test_feature_stats_reparse(self, client, mini_stats):
        from prosobench.features import NormStats, ProsodyVector, normalize, denormalize_vector
        _, _, stats = mini_stats
        r = client.get("/features/stats")
        assert r.status_code == 200
        loaded = NormStats.from_dict(r.json())
        probe = ProsodyVector.from_array([0.5, -0.5, 0.25, -0.25, 1.0], "normalized")
        raw = denormalize_vector(probe, loaded)
        back = normalize(raw, loaded)
        np.testing.assert_allclose(back.as_array(), probe.as_array(), atol=1e-12)


class TestSynthesize:
    def test_zero_bias_absolute(self, client):
        r = client.post("/synthesize", json={
            "phone_labels": "AA BB CC", "bias": zero_bias(),
            "mode": "absolute", "max_frames": 40})
        assert r.status_code == 200
        body = r.json()
        assert all(v == 0.0 for v in body["applied"].values())
        assert len(body["mel"]) == body["num_frames"]
        assert len(body["mel"][0]) == 32
        assert "measured" not in body
        assert body["timing_ms"] >= 0

    def test_bias_out_of_range_is_422(self, client):
        bias = zero_bias()
        bias["pitch"] = 2.0
        r = client.post("/synthesize", json={"phone_labels": "AA", "bias": bias})
        assert r.status_code == 422

    def test_missing_bias_key_is_422(self, client):
        bias = zero_bias()
        del bias["tilt"]
        r = client.post("/synthesize", json={"phone_labels": "AA", "bias": bias})
        assert r.status_code == 422

    def test_extra_bias_key_is_422(self, client):
        bias = zero_bias()
        bias["loudness"] = 0.1
        r = client.post("/synthesize", json={"phone_labels": "AA", "bias": bias})
        assert r.status_code == 422

    def test_unknown_label_is_422_and_named(self, client):
        r = client.post("/synthesize", json={"phone_labels": "AA ZZ9", "bias": zero_bias()})
        assert r.status_code == 422
        assert "ZZ9" in str(r.json()["detail"])

    def test_malformed_json_is_400(self, client):
        r = client.post("/synthesize", content=b"{not json",
                        headers={"content-type": "application/json"})
        assert r.status_code == 400

    def test_determinism(self, client):
        req = {"phone_labels": "AA BB", "bias": zero_bias(), "max_frames": 24}
        a = client.post("/synthesize", json=req).json()
        b = client.post("/synthesize", json=req).json()
        assert a["mel"] == b["mel"]

    def test_want_audio_includes_wav_and_measured(self, client, tmp_path):
        r = client.post("/synthesize", json={
            "phone_labels": "AA BB CC DD", "bias": zero_bias(),
            "want_audio": True, "max_frames": 60})
        assert r.status_code == 200
        body = r.json()
        assert set(body["measured"]) == {"pitch", "pitch_range", "duration", "energy", "tilt"}
        wav_bytes = base64.b64decode(body["wav_base64"])
        with wave.open(io.BytesIO(wav_bytes)) as wf:
            assert wf.getnchannels() == 1
            assert wf.getsampwidth() == 2
            assert wf.getframerate() == 24000
            assert wf.getnframes() > 0

    def test_additive_mode_applied_clipped(self, client):
        bias = zero_bias()
        bias["energy"] = 1.0
        r = client.post("/synthesize", json={
            "phone_labels": "AA", "bias": bias, "mode": "additive", "max_frames": 16})
        assert r.status_code == 200
        assert -1.0 <= r.json()["applied"]["energy"] <= 1.0


class TestAnalyze:
    def test_multipart_round_trip(self, client, mini_corpus):
        corpus_dir, manifest = mini_corpus
        entry = manifest.entries[0]
        wav_bytes = (corpus_dir / entry.wav_path).read_bytes()
        align_bytes = (corpus_dir / entry.alignment_path).read_bytes()
        r = client.post("/analyze", files={
            "wav": ("u.wav", wav_bytes, "audio/wav"),
            "alignment": ("u.tsv", align_bytes, "text/tab-separated-values")})
        assert r.status_code == 200
        body = r.json()
        assert body["raw"]["duration"] == pytest.approx(entry.ground_truth["duration"], abs=1e-6)
        assert all(abs(v) <= 1 for v in body["normalized"].values())

    def test_bad_wav_is_422(self, client):
        r = client.post("/analyze", files={
            "wav": ("u.wav", b"not a wav", "audio/wav"),
            "alignment": ("u.tsv", b"AA\t0.0\t0.1\n", "text/plain")})
        assert r.status_code == 422
