import json
import os
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path
from typing import Dict, Any, Optional, List, Iterable

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError

CONFIG_ENV_VAR = "PRICEDRESS_CONFIG"
MODEL_NAMES = ("bidask", "gaussian", "empirical")


@dataclass
class ModelConfig:
    """Bid/ask model hyperparameters"""
    m: float = 50.0  # EUR/MWh price offset for the delta features
    delta0: float = 6150.0  # MWh regime threshold
    tail_window_days: int = 120
    knn: int = 100
    diagnostic_knn: int = 500
    min_tail_count: int = 2
    sigma_floor: float = 1e-6  # MWh
    knn_kink_only: bool = False
    empirical_flip_sign: bool = False

    def __post_init__(self):
        for name in ("m", "delta0", "tail_window_days", "knn", "diagnostic_knn", "sigma_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"model.{name} must be strictly positive, got {getattr(self, name)}")
        if self.knn < 2 or self.diagnostic_knn < 2:
            raise ConfigError("model.knn and model.diagnostic_knn need at least 2 neighbors")
        if self.min_tail_count < 2:
            raise ConfigError("model.min_tail_count must be at least 2")


@dataclass
class BacktestConfig:
    """Rolling-origin backtest settings"""
    seed: int = 20160101
    models: List[str] = field(default_factory=lambda: list(MODEL_NAMES))
    exceed_threshold: float = 50.0  # EUR/MWh
    pit_bins: int = 10
    reliability_bins: int = 10
    reliability_min_prob: float = 0.1
    max_curve_gap_days: int = 7
    benchmark_window_days: Optional[int] = None  # None pools every prior day
    workers: int = 1
    n_resamples: int = 10000
    quantile_levels: List[float] = field(
        default_factory=lambda: [0.05, 0.10, 0.20, 0.50, 0.80, 0.90, 0.95]
    )

    def __post_init__(self):
        unknown = [name for name in self.models if name not in MODEL_NAMES]
        if unknown:
            raise ConfigError(f"backtest.models has unknown entries {unknown}; choose from {MODEL_NAMES}")
        if not self.models:
            raise ConfigError("backtest.models must not be empty")
        if self.pit_bins < 2 or self.reliability_bins < 1:
            raise ConfigError("backtest.pit_bins must be >= 2 and reliability_bins >= 1")
        if not 0.0 <= self.reliability_min_prob < 1.0:
            raise ConfigError("backtest.reliability_min_prob must lie in [0, 1)")
        if self.max_curve_gap_days < 1 or self.workers < 1 or self.n_resamples < 1:
            raise ConfigError("backtest.max_curve_gap_days, workers and n_resamples must be >= 1")
        if self.benchmark_window_days is not None and self.benchmark_window_days < 1:
            raise ConfigError("backtest.benchmark_window_days must be >= 1 or null")
        if any(not 0.0 < q < 1.0 for q in self.quantile_levels):
            raise ConfigError("backtest.quantile_levels must lie strictly inside (0, 1)")


@dataclass
class SynthConfig:
    """Synthetic market generator settings"""
    n_days: int = 600
    seed: int = 7
    start_date: str = "2016-01-01"
    # Supply (ask) curve shape
    n_steps: int = 200
    volume_start: float = 10000.0  # MWh
    volume_end: float = 60000.0  # MWh
    price_start: float = 10.0  # EUR/MWh at volume_start
    flat_price: float = 40.0  # EUR/MWh at the kink
    kink_volume: float = 45000.0  # MWh
    tail_exponent: float = 2.5
    price_cap: float = 3000.0
    curve_shift_sd: float = 150.0  # MWh day-to-day curve perturbation
    # Demand process
    demand_level: float = 35000.0
    daily_amplitude: float = 3000.0
    weekly_amplitude: float = 1500.0
    annual_amplitude: float = 3000.0
    ar_coefficient: float = 0.8
    ar_innovation_sd: float = 1200.0
    spike_probability: float = 0.05
    spike_magnitude: float = 11000.0
    # Volume forecast error process
    tail_sigma: float = 1500.0
    kink_sigma: float = 700.0  # sigma as delta+ -> 0
    kink_mean: float = -400.0  # mean as delta+ -> 0, non-positive
    m: float = 50.0
    delta0: float = 6150.0

    def __post_init__(self):
        positive = ("n_days", "n_steps", "volume_start", "volume_end", "kink_volume",
                    "tail_exponent", "price_cap", "demand_level", "tail_sigma",
                    "kink_sigma", "m", "delta0", "flat_price")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"synth.{name} must be strictly positive, got {getattr(self, name)}")
        nonnegative = ("daily_amplitude", "weekly_amplitude", "annual_amplitude",
                       "ar_innovation_sd", "spike_magnitude", "curve_shift_sd")
        for name in nonnegative:
            if getattr(self, name) < 0:
                raise ConfigError(f"synth.{name} must be non-negative, got {getattr(self, name)}")
        if not -1.0 < self.ar_coefficient < 1.0:
            raise ConfigError("synth.ar_coefficient must lie in (-1, 1)")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ConfigError("synth.spike_probability must lie in [0, 1]")
        if self.kink_mean > 0:
            raise ConfigError("synth.kink_mean must be non-positive")
        if not self.volume_start < self.kink_volume < self.volume_end:
            raise ConfigError("synth.kink_volume must lie inside (volume_start, volume_end)")
        if not -500.0 <= self.price_start <= self.flat_price <= self.price_cap <= 3000.0:
            raise ConfigError("synth prices must satisfy -500 <= price_start <= flat_price <= price_cap <= 3000")


SECTIONS = {
    "model": ModelConfig,
    "backtest": BacktestConfig,
    "synth": SynthConfig,
}


def _coerce(raw: str) -> Any:
    """Parse an override value the way JSON would, falling back to a string"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


class Config:
    """Main configuration manager for pricedress"""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path or self.default_config_path()
        self.model = ModelConfig()
        self.backtest = BacktestConfig()
        self.synth = SynthConfig()

        # Load configuration if file exists
        self.load()

    @staticmethod
    def default_config_path() -> str:
        """Get default configuration file path"""
        env_path = os.environ.get(CONFIG_ENV_VAR)
        if env_path:
            return env_path
        return str(Path.home() / ".pricedress" / "config.json")

    def _read_file(self) -> Dict[str, Any]:
        path = Path(self.config_path)
        try:
            if path.suffix.lower() == ".toml":
                with open(path, "rb") as f:
                    return tomllib.load(f)
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Could not read config file {path}: {e}") from e

    def load(self) -> None:
        """Load configuration from file"""
        if not os.path.exists(self.config_path):
            return

        data = self._read_file()
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections {sorted(unknown)} in {self.config_path}")

        # Update configurations
        for name, section_cls in SECTIONS.items():
            if name in data:
                setattr(self, name, self._build_section(name, section_cls, data[name]))

    @staticmethod
    def _build_section(name: str, section_cls, values: Dict[str, Any]):
        known = {f.name for f in fields(section_cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown keys {sorted(unknown)} in config section '{name}'")
        try:
            return section_cls(**values)
        except TypeError as e:
            raise ConfigError(f"Invalid config section '{name}': {e}") from e

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """Apply SECTION.KEY=VALUE overrides on top of the loaded file"""
        for item in overrides:
            key, sep, raw = item.partition("=")
            section_name, dot, attr = key.strip().partition(".")
            if not sep or not dot or section_name not in SECTIONS:
                raise ConfigError(f"Override '{item}' must look like section.key=value")
            values = asdict(getattr(self, section_name))
            if attr not in values:
                raise ConfigError(f"Unknown config key '{key}'")
            values[attr] = _coerce(raw)
            setattr(self, section_name, self._build_section(section_name, SECTIONS[section_name], values))

    def to_dict(self) -> Dict[str, Any]:
        """Effective configuration as a plain dictionary"""
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def save(self) -> None:
        """Save configuration to file as JSON"""
        path = Path(self.config_path)
        if path.suffix.lower() == ".toml":
            raise ConfigError(f"Refusing to write JSON over the TOML config {path}; edit it by hand or point "
                              f"{CONFIG_ENV_VAR} at a .json file")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    def reset_to_defaults(self) -> None:
        """Reset all configuration to defaults"""
        self.model = ModelConfig()
        self.backtest = BacktestConfig()
        self.synth = SynthConfig()
        self.save()

    @classmethod
    def defaults(cls, config_path: Optional[str] = None) -> "Config":
        """Default configuration bound to a path, without reading the file there"""
        config = cls.from_dict({})
        config.config_path = config_path or cls.default_config_path()
        return config

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Config":
        """Rebuild a configuration from a manifest's effective config"""
        config = cls.__new__(cls)
        config.config_path = None
        config.model = ModelConfig()
        config.backtest = BacktestConfig()
        config.synth = SynthConfig()
        for name, section_cls in SECTIONS.items():
            if name in data:
                setattr(config, name, cls._build_section(name, section_cls, data[name]))
        return config
