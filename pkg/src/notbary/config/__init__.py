"""Process-level settings and logging setup for notbary.

Exposes `load_settings`, which reads ``NOTBARY_*`` environment variables
into a typed `Settings` instance, and `configure_logging`.
Experiment configuration lives in `notbary.schemas`.
"""

from .env import Settings, apply_thread_cap, load_settings
from .logs import configure_logging

__all__ = ["Settings", "apply_thread_cap", "configure_logging", "load_settings"]
