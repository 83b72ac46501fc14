"""Separation-and-localization spatializer.

Pipeline for one batch of inputs::

    input STFT --> band log-magnitudes --> audio MLP --+--> separation head --> k masks over the W STFT
                                    hint grid frame ---+                         |
                                                       |                   inverse STFT: k tracks f_i(t)
                                                       +--> localization head --> weights w_i(t) per frame
                                                                                 (linear in time)
    generated channel p:  phi_p(t) = sum_i w_i,p(t) * f_i(t)

Everything after the fixed spectral front end is an autodiff graph, so the
same code path serves inference and training.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import sparse

from .. import autodiff as ad
from ..audio import AmbisonicSignal, Waveform
from ..hints import GRID_COLS, GRID_ROWS, HintFeatures
from ..metrics import Z_CHANNEL, generated_channels
from ..sphmath import num_channels
from ..stft import StftConfig, stft_array

VARIANTS = ("full", "nosep", "nohints")
MASK_BIAS_INIT = 2.0
WEIGHT_SCALE = 2.0
_POWER_REF = 1e-4
_FEATURE_SCALE = 10.0


@dataclass(frozen=True)
class SpatializerConfig:
    k: int = 8
    order_in: int = 0
    order_out: int = 1
    bands: int = 32
    hidden: int = 64
    variant: str = "full"
    sample_rate: int = 16000
    grid: tuple[int, int] = (GRID_ROWS, GRID_COLS)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.order_in not in (0, 1) or self.order_out not in (1, 2) or self.order_out <= self.order_in:
            raise ValueError(f"unsupported conversion order {self.order_in} -> {self.order_out}")
        if self.k < 1 or self.bands < 2 or self.hidden < 1:
            raise ValueError("k, bands and hidden must be positive (bands >= 2)")
        object.__setattr__(self, "grid", tuple(self.grid))

    @property
    def in_channels(self) -> int:
        return num_channels(self.order_in)

    @property
    def out_channels(self) -> int:
        """Number of generated channels: (order_out + 1)^2 - (order_in + 1)^2."""
        return num_channels(self.order_out) - num_channels(self.order_in)

    @property
    def generated(self) -> list[int]:
        return generated_channels(self.order_out, self.order_in)

    @property
    def uses_hints(self) -> bool:
        return self.variant != "nohints"

    @property
    def separates(self) -> bool:
        return self.variant != "nosep"

    @property
    def grid_size(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def feature_width(self) -> int:
        return self.hidden + (self.grid_size if self.uses_hints else 0)

    @property
    def stft(self) -> StftConfig:
        return StftConfig.for_rate(self.sample_rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpatializerConfig":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: (tuple(v) if k == "grid" else v) for k, v in d.items() if k in keys})


def ablate(config: SpatializerConfig, variant: str = "full") -> SpatializerConfig:
    """Model variant: ``full``, ``nosep`` (weights applied to the input directly) or ``nohints``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    return replace(config, variant=variant)


def _layer_shapes(cfg: SpatializerConfig) -> dict[str, tuple[int, int]]:
    shapes = {
        "audio.0": (cfg.in_channels * cfg.bands, cfg.hidden),
        "audio.1": (cfg.hidden, cfg.hidden),
        "loc.0": (cfg.feature_width, cfg.hidden),
        "loc.1": (cfg.hidden, cfg.k * cfg.out_channels),
    }
    if cfg.separates:
        shapes["sep.0"] = (cfg.feature_width, cfg.hidden)
        shapes["sep.1"] = (cfg.hidden, cfg.k * cfg.bands)
    return shapes


def init_params(cfg: SpatializerConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Uniform +-1/sqrt(fan_in) weights; the mask layer starts near pass-through."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, (fan_in, fan_out) in _layer_shapes(cfg).items():
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{name}.W"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{name}.b"] = rng.uniform(-bound, bound, size=(fan_out,))
    if cfg.separates:
        params["sep.1.b"] = np.full(cfg.k * cfg.bands, MASK_BIAS_INIT)
    return params


# -- fixed spectral front end ----------------------------------------------------

def mel_band_centers(bands: int, sample_rate: int) -> np.ndarray:
    """Band centers in Hz, equally spaced on the mel scale over (0, Nyquist)."""
    mel_max = 2595.0 * np.log10(1.0 + (sample_rate / 2) / 700.0)
    mels = np.linspace(0.0, mel_max, bands + 2)
    return 700.0 * (10.0 ** (mels / 2595.0) - 1.0)


def band_filterbank(bands: int, stft: StftConfig, sample_rate: int) -> np.ndarray:
    """Triangular mel-style pooling weights, shape ``(bins, bands)``."""
    edges = mel_band_centers(bands, sample_rate)
    freqs = stft.bin_frequencies(sample_rate)
    fb = np.zeros((stft.bins, bands))
    for b in range(bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[:, b] = np.clip(np.minimum(up, down), 0.0, None)
    # bands narrower than a bin still see their nearest bin
    for b in np.flatnonzero(fb.sum(axis=0) == 0):
        fb[np.argmin(np.abs(freqs - edges[b + 1])), b] = 1.0
    return fb


def band_to_bin_interpolation(bands: int, stft: StftConfig, sample_rate: int) -> np.ndarray:
    """Linear interpolation of per-band gains to every bin, shape ``(bands, bins)``.

    Each column is a convex combination, so gains in [0, 1] give masks in [0, 1].
    """
    centers = mel_band_centers(bands, sample_rate)[1:-1]
    freqs = stft.bin_frequencies(sample_rate)
    M = np.zeros((bands, stft.bins))
    for j, f in enumerate(freqs):
        if f <= centers[0]:
            M[0, j] = 1.0
        elif f >= centers[-1]:
            M[-1, j] = 1.0
        else:
            hi = int(np.searchsorted(centers, f))
            frac = (f - centers[hi - 1]) / (centers[hi] - centers[hi - 1])
            M[hi - 1, j] = 1.0 - frac
            M[hi, j] = frac
    return M


@dataclass
class FrontEnd:
    """Padded input STFT, pooled band features and per-frame hints for a batch."""

    cfg: SpatializerConfig
    length: int
    pad_left: int
    padded_length: int
    inputs: np.ndarray  # (B, C_in, T)
    spectrum: np.ndarray  # (B, C_in, F, bins) complex
    band_features: np.ndarray  # (B, F, C_in * bands)
    hint_features: np.ndarray | None  # (B, F, grid_size)

    @property
    def frames(self) -> int:
        return self.spectrum.shape[2]

    @cached_property
    def frame_to_sample(self) -> sparse.csr_matrix:
        """Linear interpolation from frame centers to output samples, ``(F, length)``."""
        stft = self.cfg.stft
        pos = (np.arange(self.length) + self.pad_left - stft.window_len / 2) / stft.hop
        pos = np.clip(pos, 0.0, self.frames - 1)
        lo = np.minimum(np.floor(pos).astype(int), max(self.frames - 2, 0))
        frac = pos - lo if self.frames > 1 else np.zeros_like(pos)
        hi = np.minimum(lo + 1, self.frames - 1)
        cols = np.arange(self.length)
        M = sparse.coo_matrix((1.0 - frac, (lo, cols)), shape=(self.frames, self.length))
        M = M + sparse.coo_matrix((frac, (hi, cols)), shape=(self.frames, self.length))
        return M.tocsr()


def _padding(length: int, stft: StftConfig) -> tuple[int, int]:
    left = stft.window_len
    total = length + 2 * stft.window_len
    extra = (stft.hop - (total - stft.window_len) % stft.hop) % stft.hop
    return left, stft.window_len + extra


def frame_hints(hints: HintFeatures, frame_times: np.ndarray) -> np.ndarray:
    """Hint grids at STFT frame times (nearest neighbor), each scaled to unit maximum."""
    grids = hints.at_times(frame_times).reshape(len(frame_times), -1)
    peak = grids.max(axis=1, keepdims=True)
    return np.where(peak > 0, grids / np.where(peak > 0, peak, 1.0), 0.0)


def front_end(cfg: SpatializerConfig, inputs: np.ndarray, hints: list[HintFeatures] | None = None,
              time_offsets=None) -> FrontEnd:
    """Prepare ``inputs`` of shape ``(B, C_in, T)``.

    ``time_offsets[b]`` is the start time (s) of input ``b`` on its hint timeline.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 3 or inputs.shape[1] != cfg.in_channels:
        raise ValueError(f"expected inputs of shape (batch, {cfg.in_channels}, samples), got {inputs.shape}")
    stft = cfg.stft
    B, _, T = inputs.shape
    left, right = _padding(T, stft)
    padded = np.pad(inputs, ((0, 0), (0, 0), (left, right)))
    spectrum = stft_array(padded, stft)
    F = spectrum.shape[2]
    fb = _filterbank(cfg)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    bands = np.log1p((power @ fb) / _POWER_REF) / _FEATURE_SCALE  # (B, C, F, bands)
    band_features = bands.transpose(0, 2, 1, 3).reshape(B, F, cfg.in_channels * cfg.bands)
    hint_features = None
    if cfg.uses_hints:
        if hints is None or len(hints) != B:
            raise ValueError("hint features are required for this variant")
        offsets = np.zeros(B) if time_offsets is None else np.asarray(time_offsets, dtype=float)
        centers = (np.arange(F) * stft.hop + stft.window_len / 2 - left) / cfg.sample_rate
        hint_features = np.stack([frame_hints(h, centers + off) for h, off in zip(hints, offsets)])
        if hint_features.shape[2] != cfg.grid_size:
            raise ValueError(f"hint grid has {hint_features.shape[2]} cells, model expects {cfg.grid_size}")
    return FrontEnd(cfg, T, left, T + left + right, inputs, spectrum, band_features, hint_features)


_FB_CACHE: dict = {}


def _filterbank(cfg: SpatializerConfig) -> np.ndarray:
    key = ("fb", cfg.bands, cfg.sample_rate)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = band_filterbank(cfg.bands, cfg.stft, cfg.sample_rate)
    return _FB_CACHE[key]


def _interp(cfg: SpatializerConfig) -> np.ndarray:
    key = ("interp", cfg.bands, cfg.sample_rate)
    if key not in _FB_CACHE:
        _FB_CACHE[key] = band_to_bin_interpolation(cfg.bands, cfg.stft, cfg.sample_rate)
    return _FB_CACHE[key]


# -- network ---------------------------------------------------------------------

def _dense(x: ad.Tensor, params: dict[str, ad.Tensor], name: str) -> ad.Tensor:
    return ad.add(ad.matmul(x, params[f"{name}.W"]), params[f"{name}.b"])


def extract_features(params: dict[str, ad.Tensor], fe: FrontEnd) -> ad.Tensor:
    """Per-frame joint features ``(B, F, feature_width)``: audio MLP output, then the hint grid."""
    h = ad.relu(_dense(ad.constant(fe.band_features), params, "audio.0"))
    h = ad.relu(_dense(h, params, "audio.1"))
    if fe.cfg.uses_hints:
        h = ad.concat([h, ad.constant(fe.hint_features)], axis=-1)
    return h


def separation_masks(params, features: ad.Tensor, cfg: SpatializerConfig) -> ad.Tensor:
    """``(B, k, F, bins)`` sigmoid masks interpolated from per-band gains."""
    B, F, _ = features.shape
    h = ad.relu(_dense(features, params, "sep.0"))
    gains = ad.sigmoid(_dense(h, params, "sep.1"))
    gains = ad.reshape(gains, (B, F, cfg.k, cfg.bands))
    masks = ad.apply_matrix(gains, _interp(cfg))
    return ad.transpose(masks, (0, 2, 1, 3))


def localization_weights(params, features: ad.Tensor, cfg: SpatializerConfig) -> ad.Tensor:
    """``(B, k, out_channels, F)`` weights in ``[-2, 2]``."""
    B, F, _ = features.shape
    h = ad.relu(_dense(features, params, "loc.0"))
    w = ad.mul(ad.tanh(_dense(h, params, "loc.1")), WEIGHT_SCALE)
    w = ad.reshape(w, (B, F, cfg.k, cfg.out_channels))
    return ad.transpose(w, (0, 2, 3, 1))


def generate(fe: FrontEnd, masks: ad.Tensor | np.ndarray | None, weights: ad.Tensor | np.ndarray) -> ad.Tensor:
    """Ambisonic generation from masks ``(B, k, F, bins)`` and frame weights ``(B, k, C, F)``.

    With ``masks=None`` every path is the unseparated W input.
    Returns the generated channels, ``(B, C, T)``.
    """
    stft = fe.cfg.stft
    crop = slice(fe.pad_left, fe.pad_left + fe.length)
    weights = ad.constant(weights)
    per_sample = ad.apply_matrix(weights, fe.frame_to_sample)  # (B, k, C, T)
    if masks is None:
        return ad.mul(ad.tsum(per_sample, axis=1), fe.inputs[:, :1, :])
    masks = ad.constant(masks)
    phi_w = fe.spectrum[:, 0]  # (B, F, bins)
    spec = np.stack([phi_w.real, phi_w.imag], axis=-1)[:, None]  # (B, 1, F, bins, 2)
    masked = ad.mul(ad.reshape(masks, masks.shape + (1,)), spec)
    tracks = ad.istft(masked, stft, fe.padded_length)[..., crop]  # (B, k, T)
    B, k, T = tracks.shape
    tracks = ad.reshape(tracks, (B, k, 1, T))
    return ad.tsum(ad.mul(per_sample, tracks), axis=1)


@dataclass
class ForwardResult:
    generated: ad.Tensor  # (B, C_out, T)
    masks: ad.Tensor | None  # (B, k, F, bins)
    weights: ad.Tensor  # (B, k, C_out, F)
    front: FrontEnd = field(repr=False)


def forward_batch(params: dict[str, ad.Tensor], fe: FrontEnd, masks=None, weights=None) -> ForwardResult:
    """Run the network on a prepared batch; ``masks``/``weights`` override the heads when given."""
    cfg = fe.cfg
    features = extract_features(params, fe) if (masks is None or weights is None) else None
    if masks is None and cfg.separates:
        masks = separation_masks(params, features, cfg)
    if weights is None:
        weights = localization_weights(params, features, cfg)
    gen = generate(fe, masks if cfg.separates else None, weights)
    return ForwardResult(gen, ad.constant(masks) if masks is not None else None, ad.constant(weights), fe)


def as_tensors(params: dict[str, np.ndarray], requires_grad: bool = False) -> dict[str, ad.Tensor]:
    return {k: ad.leaf(v, requires_grad) for k, v in params.items()}


def input_array(cfg: SpatializerConfig, signal: Waveform | AmbisonicSignal) -> np.ndarray:
    if cfg.order_in == 0:
        if isinstance(signal, AmbisonicSignal):
            signal = Waveform(signal.channels[0], signal.sample_rate)
        return signal.samples[None, :]
    if not isinstance(signal, AmbisonicSignal) or signal.order < cfg.order_in:
        raise ValueError(f"model expects order-{cfg.order_in} ambisonic input")
    return signal.channels[: cfg.in_channels]


def forward(params: dict[str, np.ndarray], cfg: SpatializerConfig, signal: Waveform | AmbisonicSignal,
            hints: HintFeatures | None = None, masks=None, weights=None,
            ) -> tuple[np.ndarray | None, np.ndarray, AmbisonicSignal]:
    """Spatialize one signal.

    Returns ``(masks (k, F, bins), weights (k, C_out, F), output)`` where the
    output carries the input channels followed by the generated ones.
    """
    if signal.sample_rate != cfg.sample_rate:
        raise ValueError(f"model runs at {cfg.sample_rate} Hz, input is {signal.sample_rate} Hz")
    if isinstance(signal, AmbisonicSignal) and cfg.order_in == 0 and signal.order != 0:
        raise ValueError("mono model expects a mono (order 0) input")
    if isinstance(signal, Waveform) and cfg.order_in != 0:
        raise ValueError(f"model expects order-{cfg.order_in} ambisonic input, got mono")
    x = input_array(cfg, signal)
    if hints is not None and cfg.uses_hints and not hints.matches_duration(x.shape[1] / cfg.sample_rate):
        raise ValueError("hint duration does not match the audio")
    fe = front_end(cfg, x[None], [hints] if cfg.uses_hints else None)
    res = forward_batch(as_tensors(params), fe,
                        None if masks is None else np.asarray(masks)[None],
                        None if weights is None else np.asarray(weights)[None])
    out = np.concatenate([x, res.generated.value[0]], axis=0)
    z_present = True
    if isinstance(signal, AmbisonicSignal):
        z_present = signal.z_present
    result = AmbisonicSignal(out, cfg.sample_rate, cfg.order_out, "SN3D",
                             z_present=z_present if cfg.order_out == 1 else True)
    return (None if res.masks is None else res.masks.value[0]), res.weights.value[0], result


def channel_weights(cfg: SpatializerConfig, z_present) -> np.ndarray:
    """Per-sample loss mask over generated channels, shape ``(B, C_out)``."""
    z_present = np.atleast_1d(z_present)
    mask = np.ones((len(z_present), cfg.out_channels))
    if Z_CHANNEL in cfg.generated:
        mask[~z_present.astype(bool), cfg.generated.index(Z_CHANNEL)] = 0.0
    return mask


def stft_loss(generated: ad.Tensor, target: np.ndarray, cfg: SpatializerConfig, region: slice,
              channel_mask: np.ndarray | None = None) -> ad.Tensor:
    """Differentiable total squared STFT error on ``region`` of the generated channels.

    ``generated`` is ``(B, C, T)`` and ``target`` the matching ground-truth channels.
    """
    pred = ad.stft(generated[..., region], cfg.stft)
    ref = stft_array(np.asarray(target)[..., region], cfg.stft)
    diff = ad.sub(pred, np.stack([ref.real, ref.imag], axis=-1))
    err = ad.square(diff)
    if channel_mask is not None:
        err = ad.mul(err, channel_mask[:, :, None, None, None])
    return ad.tsum(err)


def loss(pred: AmbisonicSignal, target: AmbisonicSignal, cfg: SpatializerConfig) -> float:
    """STFT loss over the generated channels (Z skipped when the target lacks it)."""
    from ..metrics import stft_mse

    return stft_mse(pred, target, cfg.stft, channels=cfg.generated)
