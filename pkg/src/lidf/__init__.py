"""lidf: spoken language identification from raw waveforms and log-Mel
spectrogram images, built on a self-contained autodiff core."""

__version__ = "0.1.0"
