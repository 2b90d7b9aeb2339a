from pydantic import BaseModel, field_validator
from typing import Dict, List, Literal, Optional

from maps import GOLDEN_OMEGA, SystemKind

DIAGNOSTICS = ('critical_b', 'lyapunov', 'area', 'lipschitz', 'capture', 'regime')


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


class SweepConfig(BaseModel):
    system: str
    a_values: List[float]
    b_values: List[float]
    b_mode: Literal['absolute', 'relative'] = 'relative'
    omega: float = GOLDEN_OMEGA
    g: str = 'default'
    delta: float = 1.0
    diagnostics: List[str] = ['critical_b']
    grid: int = 4096
    n_max: int = 40
    seed: int = 1
    trials: int = 200
    max_iters: int = 10000
    steps: int = 20000
    output_dir: str = 'runs'
    workers: int = 1
    persist: bool = False

    @field_validator('system')
    @classmethod
    def known_system(cls, v: str) -> str:
        SystemKind(v)
        return v

    @field_validator('a_values', 'b_values', 'diagnostics', mode='before')
    @classmethod
    def comma_lists(cls, v):
        return _split_list(v)

    @field_validator('a_values', 'b_values')
    @classmethod
    def nonempty(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError('at least one value is required')
        return v

    @field_validator('omega', mode='before')
    @classmethod
    def golden_alias(cls, v):
        if isinstance(v, str) and v.strip().lower() == 'golden':
            return GOLDEN_OMEGA
        return v

    @field_validator('diagnostics')
    @classmethod
    def known_diagnostics(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError('at least one diagnostic is required')
        unknown = [d for d in v if d not in DIAGNOSTICS]
        if unknown:
            raise ValueError(f"unknown diagnostics {unknown} (choose from {', '.join(DIAGNOSTICS)})")
        return list(dict.fromkeys(v))

    @field_validator('grid')
    @classmethod
    def grid_size(cls, v: int) -> int:
        if v < 16:
            raise ValueError('grid must hold at least 16 points')
        return v

    @field_validator('n_max', 'trials', 'steps', 'max_iters', 'workers')
    @classmethod
    def positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError('must be at least 1')
        return v


class SweepRow(BaseModel):
    cell_index: int
    a_index: int
    b_index: int
    a: float
    b: Optional[float] = None
    b_rel: Optional[float] = None
    b_star: Optional[float] = None
    theta_star: Optional[float] = None
    colliding: Optional[str] = None
    regime: Optional[str] = None
    lyapunov: Optional[float] = None
    flat_fraction: Optional[float] = None
    area: Optional[float] = None
    lipschitz: Optional[float] = None
    capture_fraction: Optional[float] = None
    status: str = 'ok'
    message: str = ''

    class Config:
        from_attributes = True


class RunManifest(BaseModel):
    tool_version: str
    created_at: str
    command: str
    omega: str
    parameters: Dict[str, str]
    outputs: Dict[str, str]
