from __future__ import annotations

from dataclasses import asdict, dataclass, field

FFT_MODES = ("none", "1d", "2d")
CHANNEL_MODES = ("ci", "cd")


class ConfigurationError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Hyperparameters and ablation switches shared by all forecasters."""

    L_in: int = 96
    L_out: int = 96
    C: int = 4
    revin: bool = False
    fft_mode: str = "1d"
    channel_mode: str = "ci"
    jpp: bool = False
    ma_window: int = 25
    hidden_channels: int = 16
    skip_channels: int = 16
    kernel_size: int = 3
    dilations: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    dropout: float = 0.1
    revin_eps: float = 1e-5

    def __post_init__(self):
        self.fft_mode = str(self.fft_mode).lower()
        self.channel_mode = str(self.channel_mode).lower()
        self.dilations = [int(d) for d in self.dilations]
        problems = []
        if self.fft_mode not in FFT_MODES:
            problems.append(f"fft_mode must be one of {FFT_MODES}, got {self.fft_mode!r}")
        if self.channel_mode not in CHANNEL_MODES:
            problems.append(f"channel_mode must be one of {CHANNEL_MODES}, got {self.channel_mode!r}")
        if self.ma_window < 1 or self.ma_window % 2 == 0:
            problems.append(f"ma_window must be a positive odd integer, got {self.ma_window}")
        if not self.dilations or min(self.dilations) < 1:
            problems.append(f"dilations must be a non-empty list of positive ints, got {self.dilations}")
        if min(self.L_in, self.L_out, self.C, self.hidden_channels, self.skip_channels, self.kernel_size) < 1:
            problems.append("lengths, channel counts and kernel size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout must lie in [0, 1), got {self.dropout}")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)

    @property
    def groups(self) -> int:
        """Number of independent DC stacks: one per variate (CI) or one joint stack (CD)."""
        return self.C if self.channel_mode == "ci" else 1

    @property
    def group_channels(self) -> int:
        """Real-valued input/output channels seen by each stack."""
        return 1 if self.channel_mode == "ci" else self.C

    def to_dict(self) -> dict:
        return asdict(self)
