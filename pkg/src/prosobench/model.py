"""Desk-scale sequence-to-sequence mel synthesizer with prosody conditioning.

Architecture: embedding + single bidirectional LSTM phone encoder; a stacked
3-layer LSTM prosody encoder (hidden 128) reading the phone embeddings behind
a stop-gradient barrier, projecting its last state through tanh to the five
normalized prosodic features; an autoregressive decoder with
location-sensitive monotonic attention emitting `frames_per_step` mel frames
plus a stop logit per step. Training teacher-forces both the mel frames and
the ground-truth prosody vector; inference applies a bias to the predicted
prosody (absolute or additive) for control.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ContractViolation, TrainingDivergedError

CHECKPOINT_MAGIC = b"PBCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    vocab: list[str] = field(default_factory=list)   # model tokens incl. trailing "sil"
    embedding_dim: int = 64
    encoder_hidden: int = 128
    prosody_lstm_layers: int = 3
    prosody_hidden: int = 128
    prosody_out_dim: int = 5
    decoder_hidden: int = 256
    n_mels: int = 32
    frames_per_step: int = 2
    prenet_dims: tuple[int, int] = (128, 64)
    attention_dim: int = 128
    location_filters: int = 8
    location_width: int = 15
    attention_bias_init: float = 1.5
    attention_noise_std: float = 1.0
    prenet_dropout: float = 0.5
    stop_gradient: bool = True
    stop_positive_weight: float = 5.0

    def __post_init__(self):
        if self.prosody_out_dim != 5:
            raise ContractViolation("prosody vector dimension is fixed at 5")
        if self.n_mels < 1 or self.frames_per_step < 1:
            raise ContractViolation("n_mels and frames_per_step must be >= 1")
        if self.location_width % 2 == 0:
            raise ContractViolation("location_width must be odd")
        self.prenet_dims = tuple(self.prenet_dims)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def encoder_out_dim(self) -> int:
        return 2 * self.encoder_hidden

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "prenet_dims" in d:
            d["prenet_dims"] = tuple(d["prenet_dims"])
        return cls(**d)


@dataclass
class Batch:
    """Padded training batch; masks select the valid region per utterance."""

    phone_ids: np.ndarray      # (B, T_in) int, padded with 0
    in_lengths: np.ndarray     # (B,)
    mel: np.ndarray            # (B, T_frames, n_mels), padded with floor value
    mel_lengths: np.ndarray    # (B,) valid frame counts
    prosody: np.ndarray        # (B, 5) normalized ground truth


@dataclass
class SynthesisResult:
    mel: np.ndarray                  # (T_frames, n_mels)
    predicted: np.ndarray            # (5,) prosody encoder output
    applied: np.ndarray              # (5,) vector the decoder consumed
    attention_path: np.ndarray       # (T_dec,) attended encoder index per step
    stopped: bool                    # True when the stop token fired
    truncated: bool                  # True when max_frames was hit instead

    @property
    def num_frames(self) -> int:
        return int(self.mel.shape[0])


class _LSTM:
    """Single-layer LSTM cell with input/recurrent weights fused per gate."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.Wx = ad.parameter((input_dim, 4 * hidden), rng)
        self.Wh = ad.parameter((hidden, 4 * hidden), rng)
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.b = ad.parameter(bias)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.Wx": self.Wx, f"{prefix}.Wh": self.Wh, f"{prefix}.b": self.b}

    def initial_state(self, batch: int) -> tuple[Tensor, Tensor]:
        zeros = np.zeros((batch, self.hidden))
        return Tensor(zeros), Tensor(zeros)

    def step(self, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        h_prev, c_prev = state
        z = ad.add(ad.add(ad.matmul(x, self.Wx), ad.matmul(h_prev, self.Wh)), self.b)
        hsz = self.hidden
        i = ad.sigmoid(ad.narrow(z, 1, 0, hsz))
        f = ad.sigmoid(ad.narrow(z, 1, hsz, hsz))
        g = ad.tanh(ad.narrow(z, 1, 2 * hsz, hsz))
        o = ad.sigmoid(ad.narrow(z, 1, 3 * hsz, hsz))
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        return h, (h, c)

    def run(self, xs: Tensor, batch: int, steps: int) -> Tensor:
        """Consume (B, T, D); return stacked hidden states (B, T, H)."""
        state = self.initial_state(batch)
        outs = []
        for t in range(steps):
            x_t = ad.reshape(ad.narrow(xs, 1, t, 1), (batch, -1))
            h, state = self.step(x_t, state)
            outs.append(ad.reshape(h, (batch, 1, self.hidden)))
        return ad.concat(outs, axis=1)


class _Linear:
    def __init__(self, input_dim: int, output_dim: int, rng: np.random.Generator):
        self.W = ad.parameter((input_dim, output_dim), rng)
        self.b = ad.parameter(np.zeros(output_dim))

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.W), self.b)


def _reverse_within_lengths(x: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse the first `lengths[b]` timesteps of each row; padding stays put."""
    batch, tmax, dim = x.shape
    perm = np.tile(np.arange(tmax), (batch, 1))
    for b, n in enumerate(lengths):
        perm[b, :n] = np.arange(n - 1, -1, -1)
    flat_idx = (np.arange(batch)[:, None] * tmax + perm).reshape(-1)
    flat = ad.reshape(x, (batch * tmax, dim))
    return ad.reshape(ad.take_rows(flat, flat_idx), (batch, tmax, dim))


def _gather_time(x: Tensor, time_idx: np.ndarray) -> Tensor:
    """Pick one timestep per row from (B, T, D)."""
    batch, tmax, dim = x.shape
    flat = ad.reshape(x, (batch * tmax, dim))
    return ad.take_rows(flat, np.arange(batch) * tmax + time_idx)


class TTSModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        if config.vocab_size == 0:
            raise ContractViolation("model config needs a non-empty vocabulary")
        self.config = config
        self.rng = np.random.default_rng(seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
        c = config

        self.embedding = ad.parameter((c.vocab_size, c.embedding_dim), rng)
        self.enc_fwd = _LSTM(c.embedding_dim, c.encoder_hidden, rng)
        self.enc_bwd = _LSTM(c.embedding_dim, c.encoder_hidden, rng)
        self.prosody_lstms = [
            _LSTM(c.embedding_dim if i == 0 else c.prosody_hidden, c.prosody_hidden, rng)
            for i in range(c.prosody_lstm_layers)]
        self.prosody_proj = _Linear(c.prosody_hidden, c.prosody_out_dim, rng)

        self.prenet1 = _Linear(c.n_mels, c.prenet_dims[0], rng)
        self.prenet2 = _Linear(c.prenet_dims[0], c.prenet_dims[1], rng)
        dec_in = c.prenet_dims[1] + c.encoder_out_dim + c.prosody_out_dim
        self.dec_lstm = _LSTM(dec_in, c.decoder_hidden, rng)
        self.attn_query = _Linear(c.decoder_hidden, c.attention_dim, rng)
        self.attn_key = _Linear(c.encoder_out_dim, c.attention_dim, rng)
        self.attn_loc_conv = ad.parameter((2 * c.location_width, c.location_filters), rng)
        self.attn_loc_proj = ad.parameter((c.location_filters, c.attention_dim), rng)
        self.attn_v = ad.parameter((c.attention_dim,), rng)
        self.attn_offset = ad.parameter(np.array(c.attention_bias_init))
        proj_in = c.decoder_hidden + c.encoder_out_dim
        self.mel_proj = _Linear(proj_in, c.n_mels * c.frames_per_step, rng)
        self.stop_proj = _Linear(proj_in, 1, rng)

        self.trained_steps = 0
        self.last_prosody_source: Optional[str] = None

    # -- parameters -----------------------------------------------------
    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"embedding.table": self.embedding}
        out.update(self.enc_fwd.params("encoder.fwd"))
        out.update(self.enc_bwd.params("encoder.bwd"))
        for i, lstm in enumerate(self.prosody_lstms):
            out.update(lstm.params(f"prosody.lstm{i}"))
        out.update(self.prosody_proj.params("prosody.proj"))
        out.update(self.prenet1.params("decoder.prenet1"))
        out.update(self.prenet2.params("decoder.prenet2"))
        out.update(self.dec_lstm.params("decoder.lstm"))
        out.update(self.attn_query.params("attention.query"))
        out.update(self.attn_key.params("attention.key"))
        out["attention.loc_conv"] = self.attn_loc_conv
        out["attention.loc_proj"] = self.attn_loc_proj
        out["attention.v"] = self.attn_v
        out["attention.offset"] = self.attn_offset
        out.update(self.mel_proj.params("decoder.mel_proj"))
        out.update(self.stop_proj.params("decoder.stop_proj"))
        return out

    def phone_encoder_params(self) -> dict[str, Tensor]:
        out = {"embedding.table": self.embedding}
        out.update(self.enc_fwd.params("encoder.fwd"))
        out.update(self.enc_bwd.params("encoder.bwd"))
        return out

    # -- encoder side ----------------------------------------------------
    def embed(self, phone_ids: np.ndarray) -> Tensor:
        ids = np.asarray(phone_ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.max(initial=0) >= self.config.vocab_size or ids.min(initial=0) < 0:
            raise ContractViolation(
                f"phone id outside vocabulary of size {self.config.vocab_size}")
        batch, tmax = ids.shape
        flat = ad.take_rows(self.embedding, ids.reshape(-1))
        return ad.reshape(flat, (batch, tmax, self.config.embedding_dim))

    def phone_encoder_forward(self, phone_ids: np.ndarray,
                              lengths: Optional[np.ndarray] = None) -> Tensor:
        """(B, T_in) ids -> (B, T_in, 2*encoder_hidden) outputs."""
        embedded = self.embed(phone_ids)
        return self._encode(embedded, self._lengths_of(phone_ids, lengths))

    def _lengths_of(self, phone_ids: np.ndarray, lengths: Optional[np.ndarray]) -> np.ndarray:
        ids = np.asarray(phone_ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        if lengths is None:
            return np.full(ids.shape[0], ids.shape[1], dtype=np.int64)
        return np.asarray(lengths, dtype=np.int64)

    def _encode(self, embedded: Tensor, lengths: np.ndarray) -> Tensor:
        batch, tmax, _ = embedded.shape
        if tmax == 0:
            raise ContractViolation("cannot encode an empty phone sequence")
        fwd = self.enc_fwd.run(embedded, batch, tmax)
        reversed_in = _reverse_within_lengths(embedded, lengths)
        bwd = self.enc_bwd.run(reversed_in, batch, tmax)
        bwd = _reverse_within_lengths(bwd, lengths)
        return ad.concat([fwd, bwd], axis=2)

    def prosody_encoder_forward(self, embedded: Tensor, lengths: np.ndarray) -> Tensor:
        """Stacked LSTM over (possibly stop-gradient) embeddings -> (B, 5) in (-1, 1)."""
        batch, tmax, _ = embedded.shape
        if tmax == 0:
            raise ContractViolation("cannot encode an empty phone sequence")
        x = ad.stop_gradient(embedded) if self.config.stop_gradient else embedded
        for lstm in self.prosody_lstms:
            x = lstm.run(x, batch, tmax)
        last = _gather_time(x, np.asarray(lengths) - 1)
        return ad.tanh(self.prosody_proj(last))

    # -- attention ---------------------------------------------------------
    def _location_features(self, alpha_prev: Tensor, alpha_cum: Tensor) -> Tensor:
        """Convolve [previous; cumulative] alignments -> (B, T, filters)."""
        batch, tmax = alpha_prev.shape
        width = self.config.location_width
        half = width // 2
        stacked = ad.concat([ad.reshape(alpha_prev, (batch, tmax, 1)),
                             ad.reshape(alpha_cum, (batch, tmax, 1))], axis=2)
        padded = ad.pad_axis(stacked, 1, half, half)
        windows = ad.concat([ad.narrow(padded, 1, k, tmax) for k in range(width)], axis=2)
        flat = ad.reshape(windows, (batch * tmax, 2 * width))
        feats = ad.matmul(flat, self.attn_loc_conv)
        return ad.reshape(feats, (batch, tmax, self.config.location_filters))

    def _attention_energies(self, query_h: Tensor, keys: Tensor,
                            alpha_prev: Tensor, alpha_cum: Tensor) -> Tensor:
        batch, tmax, _ = keys.shape
        query = ad.reshape(self.attn_query(query_h), (batch, 1, self.config.attention_dim))
        loc = self._location_features(alpha_prev, alpha_cum)
        loc_flat = ad.reshape(loc, (batch * tmax, self.config.location_filters))
        loc_proj = ad.reshape(ad.matmul(loc_flat, self.attn_loc_proj),
                              (batch, tmax, self.config.attention_dim))
        combined = ad.tanh(ad.add(ad.add(keys, query), loc_proj))
        energies = ad.tsum(ad.mul(combined, self.attn_v), axis=2)
        return ad.add(energies, self.attn_offset)

    def attention_step(self, query_h: Tensor, keys: Tensor, encoder_out: Tensor,
                       alpha_prev: Tensor, alpha_cum: Tensor, lengths: np.ndarray,
                       noise: Optional[np.ndarray] = None) -> tuple[Tensor, Tensor]:
        """Soft monotonic attention -> (context (B, E), alpha (B, T))."""
        energies = self._attention_energies(query_h, keys, alpha_prev, alpha_cum)
        if noise is not None:
            energies = ad.add(energies, Tensor(noise))
        p = ad.sigmoid(energies)
        alpha = ad.monotonic_attend(p, alpha_prev, lengths)
        batch, tmax, enc_dim = encoder_out.shape
        weighted = ad.mul(ad.reshape(alpha, (batch, tmax, 1)), encoder_out)
        context = ad.tsum(weighted, axis=1)
        return context, alpha

    def _inference_attention(self, query_h: Tensor, keys: Tensor, encoder_out: Tensor,
                             alpha_prev: Tensor, alpha_cum: Tensor,
                             pointer: int, lengths: np.ndarray) -> tuple[Tensor, Tensor, int]:
        """Soft monotonic step with a left window at the previous argmax.

        Zeroing (and renormalizing away) any mass left of the last argmax
        keeps the attended distribution identical to training where it
        matters while making the argmax provably non-decreasing: all mass
        lies at positions >= pointer and the recursion only moves it right.
        """
        context, alpha = self.attention_step(query_h, keys, encoder_out,
                                             alpha_prev, alpha_cum, lengths)
        weights = alpha.data.copy()
        weights[0, :pointer] = 0.0
        total = weights.sum()
        if total <= 0:
            weights[0, pointer] = 1.0
        else:
            weights /= total
        new_pointer = int(np.argmax(weights[0]))
        windowed = Tensor(weights)
        batch, tmax, enc_dim = encoder_out.shape
        weighted = ad.mul(ad.reshape(windowed, (batch, tmax, 1)), encoder_out)
        context = ad.tsum(weighted, axis=1)
        return context, windowed, new_pointer

    # -- decoder -----------------------------------------------------------
    def _prenet(self, frame: Tensor, dropout: bool = False) -> Tensor:
        h1 = ad.relu(self.prenet1(frame))
        if dropout:
            h1 = ad.mul(h1, Tensor(self._dropout_mask(h1.shape)))
        h2 = ad.relu(self.prenet2(h1))
        if dropout:
            h2 = ad.mul(h2, Tensor(self._dropout_mask(h2.shape)))
        return h2

    def _dropout_mask(self, shape) -> np.ndarray:
        # Inverted dropout; without it the teacher-forced previous frame lets
        # the decoder bypass attention and alignments never sharpen.
        keep = 1.0 - self.config.prenet_dropout
        return (self.rng.uniform(size=shape) < keep) / keep

    def _decode_step(self, prev_frame: Tensor, context: Tensor, prosody: Tensor,
                     state, dropout: bool = False) -> tuple[Tensor, Tensor, Tensor, tuple]:
        x = ad.concat([self._prenet(prev_frame, dropout), context, prosody], axis=1)
        h, state = self.dec_lstm.step(x, state)
        return h, x, None, state

    def _project_out(self, h: Tensor, context: Tensor) -> tuple[Tensor, Tensor]:
        proj_in = ad.concat([h, context], axis=1)
        mel = self.mel_proj(proj_in)
        stop = self.stop_proj(proj_in)
        return mel, stop

    # -- training ------------------------------------------------------------
    def forward_teacher_forced(self, batch: Batch, stochastic: bool = True) -> dict:
        """Run the full training graph; returns loss tensors and diagnostics.

        `stochastic` enables the training-time randomness (attention sigmoid
        noise and prenet dropout); gradient checks turn it off so the loss is
        a fixed function of the parameters.
        """
        c = self.config
        ids = batch.phone_ids
        bsz, tin = ids.shape
        if batch.mel.shape[2] != c.n_mels:
            raise ContractViolation(
                f"mel target has {batch.mel.shape[2]} bands, model expects {c.n_mels}")
        if batch.prosody.shape != (bsz, 5):
            raise ContractViolation("prosody targets must be (B, 5)")
        if np.any(np.abs(batch.prosody) > 1.0 + 1e-9):
            raise ContractViolation("prosody targets must be normalized to [-1, 1]")
        lengths = batch.in_lengths
        embedded = self.embed(ids)
        encoder_out = self._encode(embedded, lengths)
        keys_flat = self.attn_key(ad.reshape(encoder_out, (bsz * tin, c.encoder_out_dim)))
        keys = ad.reshape(keys_flat, (bsz, tin, c.attention_dim))
        prosody_pred = self.prosody_encoder_forward(embedded, lengths)

        # Teacher forcing: the decoder consumes the ground-truth prosody vector.
        prosody_in = Tensor(batch.prosody)
        self.last_prosody_source = "ground_truth"

        fps = c.frames_per_step
        n_frames = batch.mel.shape[1]
        if n_frames % fps:
            raise ContractViolation("mel target frames must be padded to frames_per_step")
        n_steps = n_frames // fps
        dec_state = self.dec_lstm.initial_state(bsz)
        alpha_prev = Tensor(np.eye(1, tin)[np.zeros(bsz, dtype=int)])
        alpha_cum = alpha_prev
        context = Tensor(np.zeros((bsz, c.encoder_out_dim)))
        mel_outs, stop_outs, alphas = [], [], []
        for t in range(n_steps):
            if t == 0:
                prev = Tensor(np.zeros((bsz, c.n_mels)))
            else:
                prev = Tensor(batch.mel[:, t * fps - 1, :])
            noise = None
            if stochastic and c.attention_noise_std > 0:
                noise = self.rng.normal(0.0, c.attention_noise_std, size=(bsz, tin))
            h, _, _, dec_state = self._decode_step(
                prev, context, prosody_in, dec_state,
                dropout=stochastic and c.prenet_dropout > 0)
            context, alpha = self.attention_step(h, keys, encoder_out,
                                                 alpha_prev, alpha_cum, lengths, noise)
            alpha_prev = alpha
            alpha_cum = ad.add(alpha_cum, alpha)
            mel, stop = self._project_out(h, context)
            mel_outs.append(ad.reshape(mel, (bsz, 1, fps, c.n_mels)))
            stop_outs.append(ad.reshape(stop, (bsz, 1)))
            alphas.append(alpha.data)

        mel_pred = ad.reshape(ad.concat(mel_outs, axis=1), (bsz, n_frames, c.n_mels))
        stop_logits = ad.concat(stop_outs, axis=1)

        frame_mask = (np.arange(n_frames)[None, :] < batch.mel_lengths[:, None]).astype(float)
        step_lengths = np.ceil(batch.mel_lengths / fps).astype(int)
        step_mask = (np.arange(n_steps)[None, :] < step_lengths[:, None]).astype(float)
        stop_targets = (np.arange(n_steps)[None, :] == (step_lengths - 1)[:, None]).astype(float)

        diff = ad.absolute(ad.sub(mel_pred, Tensor(batch.mel)))
        masked = ad.mul(diff, Tensor(frame_mask[:, :, None]))
        mel_l1 = ad.mul(ad.tsum(masked), 1.0 / (frame_mask.sum() * c.n_mels))

        w = c.stop_positive_weight
        pos = ad.mul(ad.mul(Tensor(stop_targets * w), ad.softplus(ad.mul(stop_logits, -1.0))),
                     Tensor(step_mask))
        neg = ad.mul(ad.mul(Tensor(1.0 - stop_targets), ad.softplus(stop_logits)),
                     Tensor(step_mask))
        stop_bce = ad.mul(ad.tsum(ad.add(pos, neg)), 1.0 / step_mask.sum())

        prosody_mse = ad.tmean(ad.square(ad.sub(prosody_pred, Tensor(batch.prosody))))

        total = ad.add(ad.add(mel_l1, stop_bce), prosody_mse)
        return {
            "total": total, "mel_l1": mel_l1, "stop_bce": stop_bce,
            "prosody_mse": prosody_mse, "prosody_pred": prosody_pred,
            "alphas": np.stack(alphas, axis=1),  # (B, T_dec, T_in)
        }

    def train_step(self, batch: Batch, optimizer: "ad.Adam") -> dict:
        optimizer.zero_grad()
        out = self.forward_teacher_forced(batch)
        losses = {k: out[k].item() for k in ("total", "mel_l1", "stop_bce", "prosody_mse")}
        if not all(np.isfinite(v) for v in losses.values()):
            raise TrainingDivergedError(
                f"non-finite loss at step {self.trained_steps}: {losses}")
        out["total"].backward()
        grad_norm = optimizer.step()
        self.trained_steps += 1
        losses["grad_norm"] = grad_norm
        losses["step"] = self.trained_steps
        return losses

    # -- inference -------------------------------------------------------------
    def synthesize(self, phone_ids: Sequence[int], bias: Sequence[float],
                   mode: str = "absolute", max_frames: int = 600) -> SynthesisResult:
        c = self.config
        bias_arr = np.asarray(bias, dtype=np.float64)
        if bias_arr.shape != (5,):
            raise ContractViolation(f"bias must have 5 components, got shape {bias_arr.shape}")
        if np.any(np.abs(bias_arr) > 1.0 + 1e-9):
            raise ContractViolation(f"bias components must lie in [-1, 1]: {bias_arr}")
        if mode not in ("absolute", "additive"):
            raise ContractViolation(f"mode must be absolute|additive, got {mode!r}")
        ids = np.asarray(phone_ids, dtype=np.int64)[None, :]
        if ids.shape[1] == 0:
            raise ContractViolation("cannot synthesize an empty phone sequence")
        lengths = np.array([ids.shape[1]])
        tin = ids.shape[1]

        embedded = self.embed(ids)
        encoder_out = self._encode(embedded, lengths)
        keys = ad.reshape(self.attn_key(ad.reshape(encoder_out, (tin, c.encoder_out_dim))),
                          (1, tin, c.attention_dim))
        predicted = self.prosody_encoder_forward(embedded, lengths).data[0]

        if mode == "absolute":
            applied = bias_arr.copy()
        else:
            applied = np.clip(predicted + bias_arr, -1.0, 1.0)
        self.last_prosody_source = "applied"
        prosody_in = Tensor(applied[None, :])

        fps = c.frames_per_step
        max_steps = max(1, int(np.ceil(max_frames / fps)))
        dec_state = self.dec_lstm.initial_state(1)
        alpha_prev = Tensor(np.eye(1, tin))
        alpha_cum = alpha_prev
        context = Tensor(np.zeros((1, c.encoder_out_dim)))
        prev = Tensor(np.zeros((1, c.n_mels)))
        pointer = 0
        frames, path = [], []
        stopped = False
        for _ in range(max_steps):
            h, _, _, dec_state = self._decode_step(prev, context, prosody_in, dec_state)
            context, alpha_prev, pointer = self._inference_attention(
                h, keys, encoder_out, alpha_prev, alpha_cum, pointer, lengths)
            path.append(pointer)
            alpha_cum = ad.add(alpha_cum, alpha_prev)
            mel, stop = self._project_out(h, context)
            group = mel.data.reshape(fps, c.n_mels)
            if not np.all(np.isfinite(group)):
                raise TrainingDivergedError("non-finite mel output during synthesis")
            frames.append(group)
            prev = Tensor(group[-1][None, :])
            if 1.0 / (1.0 + np.exp(-stop.data[0, 0])) > 0.5:
                stopped = True
                break
        mel_frames = np.concatenate(frames, axis=0)[:max_frames]
        return SynthesisResult(
            mel=mel_frames,
            predicted=predicted,
            applied=applied,
            attention_path=np.asarray(path, dtype=np.int64),
            stopped=stopped,
            truncated=not stopped,
        )


# -- checkpoint container -----------------------------------------------------

def save_checkpoint(model: TTSModel, path, norm_stats_hash: str = "",
                    extra: Optional[dict] = None) -> None:
    """Versioned binary container: header JSON + named float64 blobs + sha256."""
    buf = io.BytesIO()
    header = {
        "config": model.config.to_dict(),
        "step": model.trained_steps,
        "rng_state": json.loads(json.dumps(model.rng.bit_generator.state)),
        "norm_stats_hash": norm_stats_hash,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    buf.write(struct.pack("<Q", len(header_bytes)))
    buf.write(header_bytes)
    for name in sorted(model.params()):
        tensor = model.params()[name]
        name_bytes = name.encode()
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        arr = tensor.data.astype("<f8", order="C", copy=False)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(payload)
        f.write(digest)


def load_checkpoint(path, expected_n_mels: Optional[int] = None) -> tuple[TTSModel, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version {version} unsupported "
                              f"(expected {CHECKPOINT_VERSION})")
    payload, digest = raw[8:-32], raw[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupt or truncated")
    view = io.BytesIO(payload)
    header_len = struct.unpack("<Q", view.read(8))[0]
    header = json.loads(view.read(header_len).decode())
    config = ModelConfig.from_dict(header["config"])
    if expected_n_mels is not None and config.n_mels != expected_n_mels:
        raise CheckpointError(f"{path}: checkpoint has n_mels={config.n_mels}, "
                              f"caller requires {expected_n_mels}")
    model = TTSModel(config, seed=0)
    params = model.params()
    loaded = set()
    while view.tell() < len(payload):
        name_len = struct.unpack("<H", view.read(2))[0]
        name = view.read(name_len).decode()
        ndim = struct.unpack("<B", view.read(1))[0]
        shape = tuple(struct.unpack("<Q", view.read(8))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(view.read(count * 8), dtype="<f8").reshape(shape)
        if name not in params:
            raise CheckpointError(f"{path}: unknown parameter {name!r}")
        if params[name].data.shape != data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name!r}")
        params[name].data = data.astype(np.float64).copy()
        loaded.add(name)
    missing = set(params) - loaded
    if missing:
        raise CheckpointError(f"{path}: missing parameters {sorted(missing)}")
    model.trained_steps = header["step"]
    model.rng.bit_generator.state = header["rng_state"]
    return model, header
