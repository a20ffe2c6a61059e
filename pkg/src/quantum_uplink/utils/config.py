"""
Configuration management for the quantum uplink toolkit.
Loads and provides access to tool parameters from config.yaml.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

CONFIG_DIR_ENV = "QUPLINK_CONFIG_DIR"

# Source checkout fallback: <repo>/config
_REPO_CONFIG_DIR = Path(__file__).resolve().parents[3] / "config"


class Config:
    """Configuration manager for the toolkit."""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration.

        Args:
            config_path: Path to config.yaml file. If None, searches in standard locations.
        """
        if config_path is None:
            config_path = self._find_config_file()

        self.config_path = str(config_path)
        self._config = self._load_config()

    def _find_config_file(self) -> str:
        """Find config.yaml in standard locations."""
        possible_paths = []
        env_dir = os.environ.get(CONFIG_DIR_ENV)
        if env_dir:
            possible_paths.append(os.path.join(env_dir, "config.yaml"))
        possible_paths += [
            "config/config.yaml",
            "config.yaml",
            "../config/config.yaml",
            "../../config/config.yaml",
            str(_REPO_CONFIG_DIR / "config.yaml"),
        ]

        for path in possible_paths:
            if os.path.exists(path):
                return path

        raise FileNotFoundError(
            f"Could not find config.yaml in any of these locations: {possible_paths}"
        )

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file."""
        try:
            with open(self.config_path, "r") as f:
                config = yaml.safe_load(f)
            return config or {}
        except Exception as e:
            raise RuntimeError(f"Failed to load config from {self.config_path}: {e}")

    @property
    def config_dir(self) -> Path:
        """Directory holding the active config file."""
        return Path(self.config_path).resolve().parent

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value using dot notation.

        Args:
            key: Configuration key (e.g., 'analysis.coarse_bin_ns')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        keys = key.split(".")
        value = self._config

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def get_section(self, section: str) -> Dict[str, Any]:
        """
        Get entire configuration section.

        Args:
            section: Section name (e.g., 'analysis', 'sweep')

        Returns:
            Dictionary with section configuration
        """
        return self._config.get(section, {}) or {}

    def as_dict(self) -> Dict[str, Any]:
        """Full resolved configuration (embedded in run reports)."""
        return dict(self._config)

    # Convenience properties for commonly used configurations

    @property
    def analysis(self) -> Dict[str, Any]:
        """Get analysis configuration."""
        return self.get_section("analysis")

    @property
    def sweep(self) -> Dict[str, Any]:
        """Get sweep configuration."""
        return self.get_section("sweep")

    @property
    def qkd(self) -> Dict[str, Any]:
        """Get QKD post-processing configuration."""
        return self.get_section("qkd")

    @property
    def output(self) -> Dict[str, Any]:
        """Get output configuration."""
        return self.get_section("output")

    @property
    def logging(self) -> Dict[str, Any]:
        """Get logging configuration."""
        return self.get_section("logging")

    # Analysis settings, returned in SI units

    def get_coincidence_window(self) -> float:
        """Coincidence window tau_c in seconds."""
        return float(self.get("analysis.coincidence_window_ns", 0.8)) * 1e-9

    def get_coarse_bin(self) -> float:
        """Coarse cross-correlation bin in seconds."""
        return float(self.get("analysis.coarse_bin_ns", 100.0)) * 1e-9

    def get_fine_bin(self) -> float:
        """Fine refinement bin in seconds."""
        return float(self.get("analysis.fine_bin_ps", 10.0)) * 1e-12

    def get_search_span(self) -> float:
        """Half-width of the coarse offset search in seconds."""
        return float(self.get("analysis.search_span_s", 1.0))

    def get_correlation_chunk(self) -> float:
        """Length of the space-stream chunk used by the coarse search, seconds."""
        return float(self.get("analysis.correlation_chunk_s", 2.0))

    def get_segment_length(self) -> float:
        """Drift-tracking segment length in seconds."""
        return float(self.get("analysis.segment_s", 1.0))

    def get_track_bin(self) -> float:
        """Histogram bin used while tracking segments, seconds."""
        return float(self.get("analysis.track_bin_ns", 1.0)) * 1e-9

    def get_track_half_width(self) -> float:
        """Search half-width around the predicted offset while tracking, seconds."""
        return float(self.get("analysis.track_half_width_ns", 300.0)) * 1e-9

    def get_max_drift(self) -> float:
        """Assumed bound on the space clock drift rate."""
        return float(self.get("analysis.max_drift", 1e-7))

    def get_significance_threshold(self) -> float:
        """Minimum peak significance in floor standard deviations."""
        return float(self.get("analysis.significance_threshold", 6.0))

    def get_sideband_offsets(self) -> List[float]:
        """Sideband window centres for accidental estimation, seconds."""
        offsets = self.get(
            "analysis.sideband_offsets_us",
            [-15.0, -12.5, -10.0, -7.5, -5.0, 5.0, 7.5, 10.0, 12.5, 15.0],
        )
        return [float(o) * 1e-6 for o in offsets]

    def maximize_combination(self) -> bool:
        """Report S as the maximal CHSH combination."""
        return bool(self.get("analysis.maximize_combination", False))

    # QKD settings

    def get_error_correction_efficiency(self) -> float:
        """Error correction inefficiency f."""
        return float(self.get("qkd.error_correction_efficiency", 1.16))

    def get_sifting_factor(self) -> float:
        """Basis sifting factor q."""
        return float(self.get("qkd.sifting_factor", 0.5))

    def get_gate(self) -> float:
        """Per-pulse detection gate in seconds (background yield Y_0)."""
        return float(self.get("qkd.gate_ns", 1.0)) * 1e-9

    def get_min_events(self, protocol: str) -> int:
        """Minimum event count for a protocol ('bell' or 'qkd')."""
        defaults = {"bell": 1000, "qkd": 10000}
        return int(self.get(f"qkd.min_events_{protocol}", defaults[protocol]))

    # Sweeps

    def get_workers(self) -> int:
        """Worker count for grid sweeps."""
        return int(self.get("sweep.workers", 4))

    def get_background_levels(self) -> List[float]:
        """Background levels (cps) used for figure sweeps."""
        return [float(b) for b in self.get("sweep.background_cps", [100, 1000, 10000])]

    # Output / scenarios

    def get_schema_version(self) -> str:
        """Report schema version."""
        return str(self.get("output.schema_version", "1.0"))

    def get_scenario_dir(self) -> Path:
        """Directory with bundled scenario files."""
        directory = Path(self.get("scenarios.directory", "scenarios"))
        if not directory.is_absolute():
            directory = self.config_dir / directory
        return directory

    def get_log_level(self) -> str:
        """Logging level name."""
        return str(self.get("logging.level", "INFO"))

    def __str__(self) -> str:
        """String representation of configuration."""
        return f"Config(path={self.config_path})"

    def __repr__(self) -> str:
        """Detailed string representation."""
        return (
            f"Config(path='{self.config_path}', sections={list(self._config.keys())})"
        )


# Global config instance
_config_instance = None


def get_config(config_path: Optional[str] = None) -> Config:
    """
    Get global configuration instance.

    Args:
        config_path: Path to config file. Only used on first call.

    Returns:
        Config instance
    """
    global _config_instance

    if _config_instance is None:
        _config_instance = Config(config_path)

    return _config_instance


def reload_config(config_path: Optional[str] = None) -> Config:
    """
    Reload configuration.

    Args:
        config_path: Path to config file

    Returns:
        New Config instance
    """
    global _config_instance
    _config_instance = Config(config_path)
    return _config_instance
