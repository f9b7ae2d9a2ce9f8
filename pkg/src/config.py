"""
Configuration management with Pydantic validation.

This module provides type-safe configuration loading and validation
for the mel decoder training and sampling pipeline.
"""

import pathlib
from typing import List, Literal, Optional, Union
from pydantic import BaseModel, Field, field_validator, ConfigDict


class _Section(BaseModel):
    """Base for config sections: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# ============================================================================
# Nested Configuration Models
# ============================================================================

class ProjectConfig(_Section):
    """Project metadata configuration."""
    name: str = Field(default="svc-decoder", description="Project name")
    version: str = Field(default="0.1.0", description="Project version")


class RuntimeConfig(_Section):
    """Seed, numeric precision and progress display."""
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master RNG seed")
    precision: Literal["f32", "f64"] = Field(
        default="f64",
        description="Floating point precision (f64 for correctness runs, f32 for speed)"
    )
    progress: bool = Field(default=False, description="Show tqdm progress bars")


class AudioConfig(_Section):
    """Signal parameters for mel targets and pitch/loudness features."""
    sample_rate: int = Field(default=24000, ge=1, description="Sample rate in Hz (only 24000 is accepted)")
    n_fft: int = Field(default=512, ge=16, description="FFT size")
    win_length: int = Field(default=512, ge=16, description="Analysis window length")
    hop_length: int = Field(default=128, ge=1, description="Hop size in samples")
    n_mels: int = Field(default=80, ge=1, description="Number of mel bins")
    fmin: float = Field(default=0.0, ge=0.0, description="Lowest mel filter frequency (Hz)")
    fmax: Optional[float] = Field(default=None, description="Highest mel filter frequency (None = Nyquist)")
    log_floor: float = Field(default=1e-5, gt=0.0, description="Floor applied before the natural log")
    f0_min: float = Field(default=50.0, gt=0.0, description="Lowest F0 searched (Hz)")
    f0_max: float = Field(default=1100.0, gt=0.0, description="Highest F0 searched (Hz)")
    f0_frame_length: Optional[int] = Field(default=None, ge=64, description="F0 analysis window length (None = derived from f0_min)")
    voicing_threshold: float = Field(default=0.5, ge=0.0, le=1.0, description="Minimum peak correlation for voiced frames")

    @field_validator("win_length")
    @classmethod
    def validate_win_length(cls, v, info):
        """Ensure win_length <= n_fft."""
        if "n_fft" in info.data and v > info.data["n_fft"]:
            raise ValueError(f"win_length ({v}) must be <= n_fft ({info.data['n_fft']})")
        return v

    @field_validator("f0_max")
    @classmethod
    def validate_f0_range(cls, v, info):
        """Ensure f0_min < f0_max < sample_rate / 2."""
        if "f0_min" in info.data and v <= info.data["f0_min"]:
            raise ValueError(f"f0_max ({v}) must be > f0_min ({info.data['f0_min']})")
        if "sample_rate" in info.data and v >= info.data["sample_rate"] / 2:
            raise ValueError(f"f0_max ({v}) must be below Nyquist")
        return v


class ScheduleConfig(_Section):
    """Noise-level grid, preconditioning and teacher noise distribution."""
    epsilon: float = Field(default=0.002, gt=0.0, description="Smallest noise level t_0")
    t_max: float = Field(default=80.0, gt=0.0, description="Largest noise level t_N")
    rho: float = Field(default=7.0, ge=1.0, description="Grid warp exponent")
    n_steps: int = Field(default=50, ge=1, description="Number of grid intervals N")
    sigma_data: Union[float, Literal["auto"]] = Field(
        default="auto",
        description="Data std for preconditioning; 'auto' = std of normalized training mels"
    )
    p_mean: float = Field(default=-1.2, description="Mean of ln t for teacher training")
    p_std: float = Field(default=1.2, gt=0.0, description="Std of ln t for teacher training")

    @field_validator("t_max")
    @classmethod
    def validate_t_max(cls, v, info):
        """Ensure t_max > epsilon."""
        if "epsilon" in info.data and v <= info.data["epsilon"]:
            raise ValueError(f"t_max ({v}) must be > epsilon ({info.data['epsilon']})")
        return v

    @field_validator("sigma_data")
    @classmethod
    def validate_sigma_data(cls, v):
        """Ensure a numeric sigma_data is positive."""
        if v != "auto" and not v > 0:
            raise ValueError(f"sigma_data must be positive or 'auto', got {v}")
        return v


class NetworkConfig(_Section):
    """Denoiser network preset with optional overrides."""
    preset: Literal["tiny", "full"] = Field(default="tiny", description="Network size preset")
    n_layers: Optional[int] = Field(default=None, ge=1, description="Override number of residual layers")
    residual_channels: Optional[int] = Field(default=None, ge=1, description="Override residual channels")
    dilation_cycle: Optional[int] = Field(default=None, ge=1, description="Override dilation cycle length")
    kernel_size: Optional[int] = Field(default=None, ge=1, description="Override dilated kernel size")
    time_embed_dim: Optional[int] = Field(default=None, ge=2, description="Override time embedding size")

    @field_validator("kernel_size")
    @classmethod
    def validate_kernel_size(cls, v):
        """Ensure the kernel size is odd (centered receptive field)."""
        if v is not None and v % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {v}")
        return v


class ConditioningConfig(_Section):
    """Conditioning encoder dimensions."""
    enabled: bool = Field(default=True, description="Condition the denoiser on features and singer")
    content_dim: int = Field(default=768, ge=1, description="Content feature dimension")
    proj_dim: int = Field(default=256, ge=1, description="Projection size of each feature stream")
    singer_dim: int = Field(default=256, ge=1, description="Singer embedding size")
    n_singers: int = Field(default=4, ge=1, description="Number of singers in the embedding table")


class DataConfig(_Section):
    """Synthetic dataset generation."""
    n_items: int = Field(default=64, ge=1, description="Number of items to generate")
    frames_min: int = Field(default=32, ge=1, description="Shortest item in frames")
    frames_max: int = Field(default=96, ge=1, description="Longest item in frames")
    n_phonemes: int = Field(default=24, ge=1, description="Size of the content codebook")
    normalize: bool = Field(default=True, description="Normalize mels to zero mean / unit variance")

    @field_validator("frames_max")
    @classmethod
    def validate_frames_max(cls, v, info):
        """Ensure frames_max >= frames_min."""
        if "frames_min" in info.data and v < info.data["frames_min"]:
            raise ValueError(f"frames_max ({v}) must be >= frames_min ({info.data['frames_min']})")
        return v


class TrainingConfig(_Section):
    """Teacher training and distillation hyperparameters."""
    lr_teacher: float = Field(default=1e-4, ge=0.0, description="Teacher learning rate")
    lr_distill: float = Field(default=5e-5, ge=0.0, description="Student learning rate")
    betas: List[float] = Field(default_factory=lambda: [0.9, 0.999], description="AdamW betas")
    eps: float = Field(default=1e-8, ge=0.0, description="AdamW epsilon")
    weight_decay: float = Field(default=1e-2, ge=0.0, description="AdamW decoupled weight decay")
    mu: float = Field(default=0.95, ge=0.0, lt=1.0, description="EMA momentum of the distillation target")
    batch_size: int = Field(default=8, ge=1, description="Batch size (48 for full-scale runs)")
    segment_frames: int = Field(default=64, ge=1, description="Frames per training crop")
    teacher_steps: int = Field(default=500, ge=0, description="Teacher optimization steps")
    distill_steps: int = Field(default=500, ge=0, description="Distillation steps")
    log_every: int = Field(default=50, ge=1, description="Steps between progress records")
    checkpoint_every: int = Field(default=0, ge=0, description="Steps between periodic checkpoints (0 = end only)")

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v):
        """Ensure two betas in [0, 1)."""
        if len(v) != 2 or not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"betas must be two values in [0, 1), got {v}")
        return v


class SamplingConfig(_Section):
    """Sampling defaults."""
    steps: int = Field(default=1, ge=1, description="Student sampling steps")
    solver: Literal["euler", "heun"] = Field(default="euler", description="Teacher ODE solver")
    use_ema: bool = Field(default=True, description="Sample the student with the EMA parameters")


class BenchmarkConfig(_Section):
    """Timing benchmark settings."""
    repeats: int = Field(default=5, ge=1, description="Timed repetitions per method")
    teacher_steps: int = Field(default=50, ge=1, description="Teacher ODE steps N in the benchmark")
    study_steps: List[int] = Field(default_factory=lambda: [1, 2, 4], description="Step counts for the step-count study")
    frames: int = Field(default=128, ge=1, description="Frames of the benchmark conditioning")
    threads: int = Field(default=1, ge=1, description="BLAS/OpenMP threads while timing")


class PathsConfig(_Section):
    """Default locations of artifacts."""
    data_dir: str = Field(default="data/synthetic", description="Dataset directory")
    teacher_checkpoint: str = Field(default="runs/teacher.comc", description="Teacher checkpoint path")
    student_checkpoint: str = Field(default="runs/student.comc", description="Student checkpoint path")
    samples_dir: str = Field(default="runs/samples", description="Sampled mel output directory")
    reports_dir: str = Field(default="runs/reports", description="Evaluation and benchmark reports")


class LoggingConfig(_Section):
    """Logging configuration."""
    level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="Logging level"
    )
    format: str = Field(
        default="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        description="Log format string"
    )


# ============================================================================
# Main Configuration Model
# ============================================================================

class Config(_Section):
    """
    Main configuration model for the pipeline.

    This model validates the entire configuration structure and provides
    type-safe access to all configuration values. Unknown keys are errors.
    """

    project: ProjectConfig = Field(default_factory=ProjectConfig)
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)
    audio: AudioConfig = Field(default_factory=AudioConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    conditioning: ConditioningConfig = Field(default_factory=ConditioningConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    benchmark: BenchmarkConfig = Field(default_factory=BenchmarkConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    def network_overrides(self) -> dict:
        """Non-null network overrides as keyword arguments."""
        return self.network.model_dump(exclude={"preset"}, exclude_none=True)

    def cond_dim(self) -> int:
        """Width of the conditioning matrix (0 when disabled)."""
        if not self.conditioning.enabled:
            return 0
        return 3 * self.conditioning.proj_dim + self.conditioning.singer_dim


# ============================================================================
# Configuration Loading
# ============================================================================

def load_config(config_path: Optional[pathlib.Path] = None) -> Config:
    """
    Load and validate configuration from YAML file.

    Args:
        config_path: Path to YAML config file. If None, uses default location.

    Returns:
        Validated Config object.

    Raises:
        FileNotFoundError: If config file doesn't exist.
        ValueError: If config doesn't match schema (including unknown keys).
    """
    import yaml

    if config_path is None:
        # Default to configs/default.yaml relative to project root
        project_root = pathlib.Path(__file__).resolve().parents[1]
        config_path = project_root / "configs" / "default.yaml"
    config_path = pathlib.Path(config_path)

    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    # Load YAML
    with config_path.open() as f:
        config_dict = yaml.safe_load(f)

    if config_dict is None:
        config_dict = {}

    # Validate with Pydantic
    try:
        config = Config.model_validate(config_dict)
        return config
    except Exception as e:
        raise ValueError(f"Configuration validation failed: {e}") from e


def get_config(config_path: Optional[pathlib.Path] = None) -> Config:
    """
    Get configuration instance (singleton pattern).

    This function caches the config to avoid reloading on every call.

    Args:
        config_path: Path to YAML config file. If None, uses default location.

    Returns:
        Validated Config object.
    """
    if not hasattr(get_config, "_cached_config"):
        get_config._cached_config = load_config(config_path)
    return get_config._cached_config


def reload_config(config_path: Optional[pathlib.Path] = None) -> Config:
    """
    Force reload configuration (clears cache).

    Args:
        config_path: Path to YAML config file. If None, uses default location.

    Returns:
        Validated Config object.
    """
    get_config._cached_config = load_config(config_path)
    return get_config._cached_config
