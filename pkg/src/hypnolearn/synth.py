"""Seeded synthetic polysomnogram generator for desk-scale verification.

Hypnograms come from a strongly diagonal 5-state Markov chain started at
WAKE. Each epoch's EEG is a sum of one sinusoid per spectral band (amplitude
set by the stage profile, frequency drawn inside the band) plus Gaussian
noise; EMG is scaled noise; EOG is Poisson-timed smooth bursts, generated
once and shared across both eyes during REM (conjugate movements) and
independently otherwise. Per-epoch lognormal amplitude jitter blurs the
single-epoch class boundaries so the temporal decoders have work to do.

Delta power additionally wanders on a slow AR(1) drift across each night
(sleep depth is not constant). The drift correlates neighboring epochs'
spectra without touching the stage sequence, so decoders that read the
recent signal pattern can compensate for it while per-epoch classifiers
and decoders that treat epochs as independent given the stage cannot.

On top of both, every recording draws its own static gain per EEG band and
for EMG/EOG amplitude (electrode placement, skull and muscle anatomy differ
between subjects). Leave-one-recording-out evaluation therefore always
tests on a subject whose gains were never seen in training, the regime the
cross-validated models must survive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import N_STAGES, Recording, SleepStage, write_recording
from .features import EEG_BANDS

#: Lognormal sigmas for per-epoch amplitude jitter (global, per-band, EMG, EOG).
#: Tuned so stages stay well separated on average (inter/intra distance ratio
#: above 2) while neighboring stages overlap enough at the single-epoch level
#: that temporal decoding has headroom over per-epoch classification.
JITTER_GLOBAL = 0.11
JITTER_BAND = 0.22
JITTER_EMG = 0.20
JITTER_EOG = 0.25

#: Slow delta-power drift: stationary lognormal sigma and per-epoch AR(1)
#: coefficient. The ~0.9 coefficient gives a correlation length of roughly
#: ten epochs (five minutes), long enough to shade runs of epochs together.
DRIFT_SD = 0.25
DRIFT_PHI = 0.92

#: Between-recording variability: each recording scales every stage profile
#: by one static lognormal gain per EEG band plus one each for EMG and EOG
#: amplitude. Held-out recordings then sit slightly off the training
#: distribution, as held-out subjects do.
SUBJECT_SD_BAND = 0.15
SUBJECT_SD_EMG = 0.20
SUBJECT_SD_EOG = 0.20


@dataclass(frozen=True)
class StageProfile:
    """Signal signature of one stage.

    band_amps orders amplitudes as (delta, theta, alpha, beta, gamma);
    eog_burst_rate is bursts per minute.
    """

    band_amps: tuple[float, float, float, float, float]
    emg_scale: float
    eog_burst_rate: float
    eog_burst_amp: float
    noise_floor: float

    def __post_init__(self):
        if len(self.band_amps) != len(EEG_BANDS):
            raise ValueError(f"band_amps needs {len(EEG_BANDS)} entries")
        if min(self.band_amps) < 0 or min(
            self.emg_scale, self.eog_burst_rate, self.eog_burst_amp, self.noise_floor
        ) < 0:
            raise ValueError("profile amplitudes must be nonnegative")


@dataclass(frozen=True)
class HypnogramChain:
    """Stage transition matrix with a strong diagonal; nights start at WAKE."""

    trans: np.ndarray

    def __post_init__(self):
        trans = np.asarray(self.trans, dtype=np.float64)
        object.__setattr__(self, "trans", trans)
        if trans.shape != (N_STAGES, N_STAGES) or trans.min() < 0:
            raise ValueError(f"transition matrix must be nonnegative {N_STAGES}x{N_STAGES}")
        if np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition rows must sum to 1")


def default_profiles() -> dict[int, StageProfile]:
    """Stage signatures: alpha/beta wake, theta-dominant S1/REM, delta SWS;
    EMG tone decreasing into deep sleep and near-absent in REM; dense
    conjugate EOG bursts only in REM. S1 and S2 are deliberately close (the
    hard pair) while every other pair is far apart."""
    return {
        int(SleepStage.WAKE): StageProfile((0.22, 0.32, 2.20, 1.20, 0.60), 2.40, 6.0, 1.0, 0.50),
        int(SleepStage.S1): StageProfile((0.70, 1.15, 0.50, 0.45, 0.18), 0.55, 1.5, 0.6, 0.42),
        int(SleepStage.S2): StageProfile((0.85, 1.05, 0.45, 0.70, 0.16), 0.46, 0.6, 0.55, 0.40),
        int(SleepStage.SWS): StageProfile((4.20, 0.42, 0.20, 0.12, 0.06), 0.24, 0.15, 0.4, 0.33),
        int(SleepStage.REM): StageProfile((0.55, 0.95, 0.50, 0.45, 0.22), 0.08, 20.0, 2.2, 0.44),
    }


def default_chain() -> HypnogramChain:
    return HypnogramChain(
        np.array(
            [
                [0.860, 0.090, 0.020, 0.010, 0.020],
                [0.040, 0.860, 0.060, 0.010, 0.030],
                [0.010, 0.030, 0.860, 0.060, 0.040],
                [0.005, 0.005, 0.080, 0.900, 0.010],
                [0.030, 0.040, 0.040, 0.010, 0.880],
            ]
        )
    )


def gen_hypnogram(chain: HypnogramChain, n_epochs: int, seed) -> np.ndarray:
    """Seeded Markov stage sequence of length n_epochs, starting at WAKE."""
    if n_epochs < 1:
        raise ValueError(f"n_epochs must be >= 1, got {n_epochs}")
    rng = np.random.default_rng(seed)
    states = np.empty(n_epochs, dtype=np.int64)
    states[0] = int(SleepStage.WAKE)
    for i in range(1, n_epochs):
        states[i] = rng.choice(N_STAGES, p=chain.trans[states[i - 1]])
    return states


def _burst_train(rng: np.random.Generator, n: int, fs: float, rate_per_min: float,
                 amp: float) -> np.ndarray:
    """Poisson-timed Hann-shaped bursts over an epoch of n samples."""
    out = np.zeros(n)
    n_bursts = rng.poisson(rate_per_min * (n / fs) / 60.0)
    for _ in range(n_bursts):
        width = int(rng.uniform(0.3, 0.8) * fs)
        center = int(rng.uniform(0, n))
        lo = max(0, center - width // 2)
        hi = min(n, lo + width)
        window = np.hanning(width)[: hi - lo]
        out[lo:hi] += amp * rng.uniform(0.7, 1.3) * rng.choice((-1.0, 1.0)) * window
    return out


def gen_epoch_signal(stage: int, profile: StageProfile, fs: float, seed,
                     epoch_len_s: float = 30.0, delta_gain: float = 1.0) -> dict[str, np.ndarray]:
    """One epoch's four channels for a stage; deterministic given the seed.

    delta_gain scales the delta-band amplitude only; gen_recording feeds the
    night's slow drift through it.
    """
    if fs < 80:
        raise ValueError(f"sample rate must be >= 80 Hz, got {fs}")
    rng = np.random.default_rng(seed)
    n = int(round(epoch_len_s * fs))
    t = np.arange(n) / fs

    g = rng.lognormal(0.0, JITTER_GLOBAL)
    eeg = np.zeros(n)
    for amp, (name, lo, hi) in zip(profile.band_amps, EEG_BANDS):
        freq = rng.uniform(lo, min(hi, fs / 2 - 1.0))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        if name == "delta":
            amp = amp * delta_gain
        eeg += amp * g * rng.lognormal(0.0, JITTER_BAND) * np.sin(2 * np.pi * freq * t + phase)
    eeg += profile.noise_floor * rng.standard_normal(n)

    emg = profile.emg_scale * rng.lognormal(0.0, JITTER_EMG) * rng.standard_normal(n)

    eog_amp = profile.eog_burst_amp * rng.lognormal(0.0, JITTER_EOG)
    if stage == int(SleepStage.REM):
        bursts = _burst_train(rng, n, fs, profile.eog_burst_rate, eog_amp)
        eog_l = bursts + profile.noise_floor * 0.5 * rng.standard_normal(n)
        eog_r = bursts + profile.noise_floor * 0.5 * rng.standard_normal(n)
    else:
        eog_l = _burst_train(rng, n, fs, profile.eog_burst_rate, eog_amp)
        eog_l += profile.noise_floor * 0.5 * rng.standard_normal(n)
        eog_r = _burst_train(rng, n, fs, profile.eog_burst_rate, eog_amp)
        eog_r += profile.noise_floor * 0.5 * rng.standard_normal(n)
    return {"eeg": eeg, "eog_l": eog_l, "eog_r": eog_r, "emg": emg}


def gen_recording(index: int, n_epochs: int, seed: int, fs: float = 100.0,
                  epoch_len_s: float = 30.0, chain: HypnogramChain | None = None,
                  profiles: dict[int, StageProfile] | None = None) -> Recording:
    """Recording ``rec<index>``; a pure function of (seed, index).

    The given (or default) profiles are nominal: the recording applies its
    own static per-band/EMG/EOG gains on top before any epoch is rendered.
    """
    chain = chain or default_chain()
    profiles = profiles or default_profiles()
    label_seed, signal_seed = np.random.SeedSequence([seed, index]).spawn(2)
    labels = gen_hypnogram(chain, n_epochs, np.random.default_rng(label_seed))
    sig_rng = np.random.default_rng(signal_seed)
    band_gain = np.exp(SUBJECT_SD_BAND * sig_rng.standard_normal(len(EEG_BANDS)))
    emg_gain = float(np.exp(SUBJECT_SD_EMG * sig_rng.standard_normal()))
    eog_gain = float(np.exp(SUBJECT_SD_EOG * sig_rng.standard_normal()))
    profiles = {
        stage: replace(
            p,
            band_amps=tuple(float(a * g) for a, g in zip(p.band_amps, band_gain)),
            emg_scale=p.emg_scale * emg_gain,
            eog_burst_amp=p.eog_burst_amp * eog_gain,
        )
        for stage, p in profiles.items()
    }
    channels = {name: np.empty(n_epochs * int(round(epoch_len_s * fs)))
                for name in ("eeg", "eog_l", "eog_r", "emg")}
    spe = int(round(epoch_len_s * fs))
    drift = DRIFT_SD * sig_rng.standard_normal()  # start at stationarity
    innovation = DRIFT_SD * np.sqrt(1.0 - DRIFT_PHI**2)
    for i, stage in enumerate(labels):
        epoch = gen_epoch_signal(int(stage), profiles[int(stage)], fs, sig_rng,
                                 epoch_len_s, delta_gain=float(np.exp(drift)))
        drift = DRIFT_PHI * drift + innovation * sig_rng.standard_normal()
        for name, samples in epoch.items():
            channels[name][i * spe: (i + 1) * spe] = samples
    return Recording(
        id=f"rec{index:02d}",
        sample_rate_hz=fs,
        epoch_len_s=epoch_len_s,
        channels=channels,
        labels=labels,
    )


def gen_dataset(n_recordings: int, epochs_per_recording: int, seed: int,
                fs: float = 100.0, epoch_len_s: float = 30.0,
                chain: HypnogramChain | None = None,
                profiles: dict[int, StageProfile] | None = None,
                out_dir=None) -> list[Recording]:
    """Generate ``n_recordings`` nights; writes CSV pairs when out_dir is given."""
    if n_recordings < 1:
        raise ValueError(f"n_recordings must be >= 1, got {n_recordings}")
    recordings = [
        gen_recording(i, epochs_per_recording, seed, fs, epoch_len_s, chain, profiles)
        for i in range(n_recordings)
    ]
    if out_dir is not None:
        for rec in recordings:
            write_recording(rec, out_dir)
    return recordings
