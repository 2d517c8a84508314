from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import structlog
from dotenv import load_dotenv

from .cocycle import MatrixCocycle, build_cocycle
from .errors import CocycleError, ConfigError, NotMixingError
from .symbolic import SubshiftSpec, SymbolPotential, build_subshift, parse_word

SCHEMA = "cocycle-thermo/1"


@dataclass
class NumericsConfig:
    """수치 허용오차 및 반복 상한"""
    power_tol: float = 1e-10
    max_iter: int = 10000
    gap_floor: float = 0.05
    pressure_tol: float = 1e-4
    independence_tol: float = 1e-8


@dataclass
class LoggingConfig:
    level: str = "INFO"
    json: bool = False


@dataclass
class AppConfig:
    """프로세스 수준 기본값 (환경변수)"""
    numerics: NumericsConfig
    logging: LoggingConfig
    output_dir: Path
    threads: int = 1


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    return float(raw) if raw not in (None, "") else default


def load_app_config() -> AppConfig:
    """환경변수와 기본값을 사용해 앱 설정 로드 (.env 포함)"""
    load_dotenv()

    numerics = NumericsConfig(
        power_tol=_env_float("COCYCLE_POWER_TOL", 1e-10),
        max_iter=int(os.getenv("COCYCLE_MAX_ITER", "10000")),
        gap_floor=_env_float("COCYCLE_GAP_FLOOR", 0.05),
        pressure_tol=_env_float("COCYCLE_PRESSURE_TOL", 1e-4),
        independence_tol=_env_float("COCYCLE_INDEPENDENCE_TOL", 1e-8),
    )
    logging_cfg = LoggingConfig(
        level=os.getenv("COCYCLE_LOG_LEVEL", "INFO").upper(),
        json=os.getenv("COCYCLE_LOG_JSON", "false").lower() == "true",
    )
    # 스레드 수 기본값: 1 (결정적 실행)
    threads = max(1, int(os.getenv("COCYCLE_THREADS", "1")))
    return AppConfig(
        numerics=numerics,
        logging=logging_cfg,
        output_dir=Path(os.getenv("COCYCLE_OUTPUT_DIR", str(Path.cwd() / "output"))),
        threads=threads,
    )


def configure_logging(level: str = "INFO", json_output: bool = False) -> None:
    renderer = structlog.processors.JSONRenderer() if json_output else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level.upper(), logging.INFO)),
        cache_logger_on_first_use=False,
    )


def ensure_output_dirs(output_dir: Path) -> None:
    """출력 디렉토리 생성"""
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "tables").mkdir(exist_ok=True)
    (output_dir / "manifests").mkdir(exist_ok=True)


# --- run configuration -----------------------------------------------------------------------

@dataclass
class GridSettings:
    m_grid: int = 1
    n_proj: int = 512


@dataclass
class MixingSettings:
    L: int = 3
    n_gap: int = 8


@dataclass
class LyapunovSettings:
    n: int = 200
    trials: int = 200
    h_step: float = 0.05
    eps: float = 0.1
    n_list: List[int] = field(default_factory=lambda: [10, 20, 30, 40])


@dataclass
class TypicalitySettings:
    period_cap: int = 3
    insert_cap: int = 3


@dataclass
class HolonomySettings:
    x: str
    y: str
    x_past: str = ""
    y_past: str = ""


@dataclass(eq=False)
class RunConfig:
    name: str
    shift: SubshiftSpec
    cocycle: MatrixCocycle
    psi: SymbolPotential
    grid: GridSettings
    t_values: List[float]
    n: int = 12
    depth: int = 8
    mixing: MixingSettings = field(default_factory=MixingSettings)
    lyapunov: LyapunovSettings = field(default_factory=LyapunovSettings)
    typicality: TypicalitySettings = field(default_factory=TypicalitySettings)
    holonomy: Optional[HolonomySettings] = None
    require_fiber_bunching: bool = False
    seed: int = 0
    output_dir: Optional[Path] = None
    source: Dict[str, Any] = field(default_factory=dict, repr=False)


class _Collector:
    """섹션별 검증 오류를 모은다."""

    def __init__(self) -> None:
        self.errors: List[str] = []
        self.not_mixing: Optional[NotMixingError] = None

    def run(self, section: str, fn, *args):
        try:
            return fn(*args)
        except NotMixingError as e:
            self.not_mixing = e
            self.errors.append(f"{section}: {e.message}")
        except CocycleError as e:
            self.errors.append(f"{section}: {e.message}")
        except (KeyError, TypeError, ValueError) as e:
            self.errors.append(f"{section}: {type(e).__name__}: {e}")
        return None


def _positive_int(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _parse_shift(data: Dict[str, Any]) -> SubshiftSpec:
    return build_subshift(np.asarray(data["transitions"]))


def _parse_cocycle(data: Dict[str, Any], shift: SubshiftSpec, name: str) -> MatrixCocycle:
    gens = {parse_word(word): np.asarray(mat, dtype=float) for word, mat in data["generators"].items()}
    c = build_cocycle(
        shift,
        gens,
        holder_exponent=float(data.get("holder_exponent", 1.0)),
        lag=int(data.get("lag", 0)),
        name=name,
    )
    declared = data.get("dimension")
    if declared is not None and int(declared) != c.dimension:
        raise ValueError(f"dimension {declared} does not match {c.dimension}x{c.dimension} generators")
    if c.holder_exponent <= 0:
        raise ValueError("holder_exponent must be positive")
    return c


def _parse_psi(data: Optional[Dict[str, Any]], shift: SubshiftSpec) -> SymbolPotential:
    data = data or {"kind": "zero"}
    kind = data.get("kind", "zero")
    if kind == "zero":
        return SymbolPotential.zero(shift)
    if kind == "symbol_weights":
        return SymbolPotential.from_symbol_weights(shift, data["weights"])
    if kind == "table":
        table = {parse_word(w): float(v) for w, v in data["values"].items()}
        return SymbolPotential.from_table(shift, int(data["depth"]), table)
    raise ValueError(f"unknown psi kind {kind!r}")


def _parse_t(data: Any) -> List[float]:
    if isinstance(data, list):
        values = [float(v) for v in data]
    elif "values" in data:
        values = [float(v) for v in data["values"]]
    else:
        values = [float(v) for v in np.linspace(float(data["start"]), float(data["stop"]), int(data["num"]))]
    if not values:
        raise ValueError("at least one t value is required")
    return values


def _parse_grid(data: Optional[Dict[str, Any]]) -> GridSettings:
    data = data or {}
    return GridSettings(
        m_grid=_positive_int(data.get("m_grid", 1), "m_grid"),
        n_proj=_positive_int(data.get("n_proj", 512), "n_proj", 16),
    )


def _parse_lyapunov(data: Optional[Dict[str, Any]]) -> LyapunovSettings:
    data = data or {}
    eps = float(data.get("eps", 0.1))
    h_step = float(data.get("h_step", 0.05))
    if eps <= 0 or h_step <= 0:
        raise ValueError("eps and h_step must be positive")
    return LyapunovSettings(
        n=_positive_int(data.get("n", 200), "lyapunov.n"),
        trials=_positive_int(data.get("trials", 200), "lyapunov.trials", 30),
        h_step=h_step,
        eps=eps,
        n_list=[_positive_int(v, "lyapunov.n_list") for v in data.get("n_list", [10, 20, 30, 40])],
    )


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """
    Validate a config document and build its objects.

    Raises:
        ConfigError: every problem found, collected into .errors
        NotMixingError: the transition matrix is not primitive and nothing else is wrong
    """
    col = _Collector()
    if data.get("schema") != SCHEMA:
        col.errors.append(f"schema: expected {SCHEMA!r}, got {data.get('schema')!r}")
    name = str(data.get("name", "run"))

    shift = col.run("shift", _parse_shift, data.get("shift", {}))
    cocycle = psi = None
    if shift is not None:
        cocycle = col.run("cocycle", _parse_cocycle, data.get("cocycle", {}), shift, name)
        psi = col.run("psi", _parse_psi, data.get("psi"), shift)
    grid = col.run("grid", _parse_grid, data.get("grid"))
    t_values = col.run("t", _parse_t, data.get("t", {"values": [0.0]}))
    n = col.run("n", _positive_int, data.get("n", 12), "n", 2)
    depth = col.run("depth", _positive_int, data.get("depth", 8), "depth")
    mixing = col.run("mixing", lambda m: MixingSettings(_positive_int(m.get("L", 3), "L"),
                                                        _positive_int(m.get("n_gap", 8), "n_gap", 0)),
                     data.get("mixing", {}))
    lyap = col.run("lyapunov", _parse_lyapunov, data.get("lyapunov"))
    typ = col.run("typicality", lambda m: TypicalitySettings(_positive_int(m.get("period_cap", 3), "period_cap"),
                                                             _positive_int(m.get("insert_cap", 3), "insert_cap")),
                  data.get("typicality", {}))
    hol = None
    if data.get("holonomy"):
        hol = col.run("holonomy", lambda h: HolonomySettings(str(h["x"]), str(h["y"]), str(h.get("x_past", "")),
                                                           str(h.get("y_past", ""))), data["holonomy"])
    seed = col.run("seed", _positive_int, data.get("seed", 0), "seed", 0)

    if col.errors:
        if col.not_mixing is not None and len(col.errors) == 1:
            raise col.not_mixing
        raise ConfigError(f"{len(col.errors)} configuration error(s)", errors=col.errors)

    out = data.get("output_dir")
    return RunConfig(
        name=name,
        shift=shift,
        cocycle=cocycle,
        psi=psi,
        grid=grid,
        t_values=t_values,
        n=n,
        depth=depth,
        mixing=mixing,
        lyapunov=lyap,
        typicality=typ,
        holonomy=hol,
        require_fiber_bunching=bool(data.get("require_fiber_bunching", False)),
        seed=seed,
        output_dir=Path(out) if out else None,
        source=data,
    )


def parse_config(path: Path | str) -> RunConfig:
    """JSON 설정 파일을 읽고 전체 검증"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(data)
