from .wav import MultichannelWaveform, WavError, read_wav, write_wav  # noqa: F401
from .stft import ComplexSpectrogram, STFTConfig, istft, istft_array, stft, stft_array  # noqa: F401
from .mel import MelFilterbank, log_mel  # noqa: F401
