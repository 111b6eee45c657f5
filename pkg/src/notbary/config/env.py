"""Environment configuration for notbary.

Process-wide knobs that do not belong to an experiment (and therefore do
not enter its config hash) are read from the environment:

```bash
export NOTBARY_THREADS=1
export NOTBARY_LOG_LEVEL=DEBUG
export NOTBARY_OUTPUT_DIR=~/runs
```

```python
from notbary.config import load_settings
settings = load_settings()
print(settings.output_dir)
```
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

_THREAD_VARIABLES = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _expand_path(p: str | Path | None) -> Path | None:
    """Expand ~ and environment variables in a path-like value."""
    if p is None:
        return None
    s = str(p) if isinstance(p, Path) else p
    return Path(os.path.expanduser(os.path.expandvars(s)))


class Settings(BaseSettings):
    """Process settings loaded from ``NOTBARY_``-prefixed environment variables."""

    threads: Optional[int] = Field(
        default=None,
        ge=1,
        description="Cap on linear-algebra threads; unset leaves the BLAS default",
    )
    log_level: str = Field(default="INFO", description="Root log level for the CLI")
    output_dir: Path = Field(
        default=Path("runs"), description="Default parent directory for run artifacts"
    )
    sample_dump_rows: int = Field(
        default=8192, ge=1, description="Row cap for samples/*.csv dumps"
    )
    record_wall_clock: bool = Field(
        default=True,
        description="Record per-epoch wall time in history.csv; False writes 0.0 for bit-identical files",
    )

    model_config = SettingsConfigDict(
        env_prefix="NOTBARY_",
        case_sensitive=False,
        env_file=(".env",),
        env_file_encoding="utf-8",
        frozen=True,
    )

    @field_validator("output_dir", mode="before")
    @classmethod
    def _expand_output_dir(cls, v):
        return _expand_path(v)

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, v: str) -> str:
        return v.upper()


def load_settings() -> Settings:
    """Load and validate settings from the environment (and ``.env`` if present)."""
    return Settings()


def apply_thread_cap(settings: Settings) -> None:
    """Export the BLAS thread cap so worker processes and late-loaded BLAS honour it."""
    if settings.threads is None:
        return
    for name in _THREAD_VARIABLES:
        os.environ[name] = str(settings.threads)
