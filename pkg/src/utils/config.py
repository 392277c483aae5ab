import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.errors import UsageError

logger = logging.getLogger(__name__)

ENV_VARS = {
    "embedder": "EMBEDDER_ENDPOINT",
    "embedder_dimension": "EMBEDDER_DIMENSION",
    "generator": "GENERATOR_ENDPOINT",
}


@dataclass
class RunConfig:
    """Every tunable of a run. Precedence: flags > config file > environment > defaults."""

    K: int = 10
    k: int = 100
    K_sem: Optional[int] = None
    K_struct: Optional[int] = None
    K_heur: Optional[int] = None
    alpha: float = 0.85
    tau: float = 0.5
    epsilon: float = 1e-8
    max_iter: int = 100
    kmeans_max_iter: int = 100
    top_n: int = 10
    seed: int = 0
    embedder: str = "builtin:hash"
    embedder_dimension: int = 256
    batch_limit: int = 64
    max_in_flight: int = 4
    generator: str = "builtin:na"
    families: List[str] = field(default_factory=lambda: ["sem", "struct", "heur"])
    ks: List[int] = field(default_factory=lambda: [10, 20, 50])
    acc_mode: str = "all"
    workers: int = 1
    timers: bool = True
    paths: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.K < 1 or self.k < 1:
            raise UsageError(f"K and k must be >= 1 (got K={self.K}, k={self.k})")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.tau <= 1.0:
            raise UsageError(f"tau must lie in [0, 1], got {self.tau}")
        if self.epsilon <= 0 or self.max_iter < 1 or self.top_n < 1:
            raise UsageError("epsilon must be > 0, max_iter and top_n must be >= 1")
        if self.acc_mode not in ("all", "any"):
            raise UsageError(f"acc_mode must be 'all' or 'any', got {self.acc_mode!r}")
        unknown = set(self.families) - {"sem", "struct", "heur"}
        if not self.families or unknown:
            raise UsageError(f"families must be a non-empty subset of sem/struct/heur, got {self.families}")
        if not self.ks or any(k < 1 for k in self.ks):
            raise UsageError(f"ks must be positive integers, got {self.ks}")
        return self

    def family_K(self) -> Dict[str, int]:
        return {
            "sem": self.K_sem or self.K,
            "struct": self.K_struct or self.K,
            "heur": self.K_heur or self.K,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(name: str, value: Any) -> Any:
    default = getattr(RunConfig(), name)
    if value is None or default is None or isinstance(default, (list, dict)):
        return value
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    return type(default)(value)


def load_config_file(path: str) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.is_file():
        raise UsageError(f"Config file not found: {path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise UsageError(f"Config file {path} must contain a JSON object")
    return data


def load_run_config(config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolve a RunConfig from defaults, environment, an optional JSON config file and flag overrides.
    Overrides with value None are treated as "flag not given".
    """
    load_dotenv()
    known = {f.name for f in fields(RunConfig)}
    values: Dict[str, Any] = {}

    for name, var in ENV_VARS.items():
        if os.getenv(var):
            values[name] = os.getenv(var)

    if config_path:
        file_values = load_config_file(config_path)
        unknown = set(file_values) - known
        if unknown:
            raise UsageError(f"Unknown config keys: {', '.join(sorted(unknown))}")
        values.update(file_values)

    for name, value in (overrides or {}).items():
        if name not in known:
            raise UsageError(f"Unknown option: {name}")
        if value is not None:
            values[name] = value

    try:
        config = RunConfig(**{name: _coerce(name, value) for name, value in values.items()})
    except (TypeError, ValueError) as e:
        raise UsageError(f"Invalid configuration value: {e}")
    return config.validate()
