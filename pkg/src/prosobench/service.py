"""HTTP JSON service exposing synthesis, analysis, and model metadata.

The loaded checkpoint and normalization stats are immutable for the service
lifetime; every request builds its own decoder state, so concurrent requests
are safe. WAV payloads travel as base64 inside JSON.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import time
import uuid
import wave
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .audio import AnalysisConfig, AudioBuffer
from .errors import ProsobenchError
from .evaluate import eval_pitch_config, measure_record
from .features import (
    FEATURE_NAMES,
    NormStats,
    ProsodyVector,
    extract_prosody,
    normalize,
    parse_alignment,
)
from .model import TTSModel
from .vocoder import mel_to_linear, reconstruct
from .audio import MelSpectrogram, read_wav

logger = logging.getLogger("prosobench.service")


class BiasModel(BaseModel):
    pitch: float = Field(ge=-1.0, le=1.0)
    pitch_range: float = Field(ge=-1.0, le=1.0)
    duration: float = Field(ge=-1.0, le=1.0)
    energy: float = Field(ge=-1.0, le=1.0)
    tilt: float = Field(ge=-1.0, le=1.0)

    model_config = {"extra": "forbid"}

    def as_list(self) -> list[float]:
        return [self.pitch, self.pitch_range, self.duration, self.energy, self.tilt]


class SynthesisRequest(BaseModel):
    phone_labels: Optional[str] = None
    phone_ids: Optional[list[int]] = None
    bias: BiasModel
    mode: Literal["absolute", "additive"] = "absolute"
    want_audio: bool = False
    max_frames: int = Field(default=600, ge=2, le=4000)

    model_config = {"extra": "forbid"}


def _wav_base64(audio: AudioBuffer) -> str:
    buf = io.BytesIO()
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(model: TTSModel, stats: NormStats,
               analysis: Optional[AnalysisConfig] = None,
               ui_dir: Optional[str] = None,
               gl_iterations: int = 40) -> FastAPI:
    analysis = analysis or AnalysisConfig(sample_rate=24000, n_mels=model.config.n_mels)
    app = FastAPI(title="prosobench", version="0.1.0")
    vocab = model.config.vocab
    label_to_id = {label: i for i, label in enumerate(vocab)}
    pitch_cfg = eval_pitch_config()

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        # Unparseable JSON is a malformed request (400); a parsed body that
        # fails validation keeps FastAPI's 422.
        for error in exc.errors():
            if error.get("type") == "json_invalid":
                return JSONResponse(status_code=400,
                                    content={"detail": "malformed JSON body"})
        return JSONResponse(status_code=422, content={"detail": exc.errors()})

    @app.exception_handler(ProsobenchError)
    async def domain_handler(request: Request, exc: ProsobenchError):
        error_id = uuid.uuid4().hex[:12]
        logger.error("request %s failed: %s", error_id, exc)
        return JSONResponse(status_code=500,
                            content={"detail": "internal synthesis failure",
                                     "error_id": error_id})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/model/info")
    def model_info():
        return {"config": model.config.to_dict(), "step": model.trained_steps,
                "vocab": vocab}

    @app.get("/features/stats")
    def feature_stats():
        return stats.to_dict()

    @app.post("/synthesize")
    def synthesize(req: SynthesisRequest):
        start = time.perf_counter()
        if req.phone_ids is not None:
            ids = list(req.phone_ids)
            bad = [i for i in ids if not 0 <= i < len(vocab)]
            if bad:
                return JSONResponse(status_code=422,
                                    content={"detail": f"phone ids out of range: {bad}"})
        elif req.phone_labels:
            tokens = req.phone_labels.split()
            unknown = [t for t in tokens if t not in label_to_id]
            if unknown:
                return JSONResponse(status_code=422,
                                    content={"detail": f"unknown phone labels: {unknown}"})
            ids = [label_to_id[t] for t in tokens]
        else:
            return JSONResponse(status_code=422,
                                content={"detail": "phone_labels or phone_ids required"})
        if not ids:
            return JSONResponse(status_code=422, content={"detail": "empty phone sequence"})
        result = model.synthesize(ids, req.bias.as_list(), req.mode, req.max_frames)
        payload = {
            "mel": result.mel.tolist(),
            "num_frames": result.num_frames,
            "predicted": dict(zip(FEATURE_NAMES, result.predicted.tolist())),
            "applied": dict(zip(FEATURE_NAMES, result.applied.tolist())),
            "truncated": result.truncated,
        }
        if req.want_audio:
            spec = mel_to_linear(MelSpectrogram(result.mel, analysis))
            audio, _ = reconstruct(spec, gl_iterations, magnitude_power=1.0)
            measured_raw = measure_record(result.mel, result, analysis, pitch_cfg,
                                          analysis.hop_ms / 1000.0,
                                          model.config.frames_per_step,
                                          gl_iterations, audio=audio)
            measured = {}
            for name in FEATURE_NAMES:
                if name in measured_raw:
                    fs = stats.features[name]
                    measured[name] = float(np.clip(
                        (measured_raw[name] - fs.median) / (3.0 * fs.sigma), -1.0, 1.0))
                else:
                    measured[name] = None
            payload["measured"] = measured
            peak = float(np.max(np.abs(audio.samples))) if len(audio) else 0.0
            playback = AudioBuffer(audio.samples * (0.95 / peak), audio.sample_rate) \
                if peak > 0 else audio
            payload["wav_base64"] = _wav_base64(playback)
        payload["timing_ms"] = round((time.perf_counter() - start) * 1000.0, 2)
        return payload

    @app.post("/analyze")
    def analyze(wav: UploadFile = File(...), alignment: UploadFile = File(...)):
        import tempfile
        with tempfile.TemporaryDirectory() as tmp:
            wav_path = Path(tmp) / "in.wav"
            align_path = Path(tmp) / "in.tsv"
            wav_path.write_bytes(wav.file.read())
            align_path.write_bytes(alignment.file.read())
            try:
                audio = read_wav(wav_path)
                segs = parse_alignment(align_path)
                raw = extract_prosody(audio, segs, analysis)
            except ProsobenchError as exc:
                return JSONResponse(status_code=422, content={"detail": str(exc)})
        return {"raw": raw.as_dict(), "normalized": normalize(raw, stats).as_dict()}

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
