"""Model-backend contract and its fixture, synthetic, and subprocess implementations."""
from .base import (
    Backend,
    PromptTriplet,
    TagBundle,
    TagRequest,
    triplet_digest,
)
from .fixture import FixtureBackend, RecordingBackend, fixture_backend
from .synthetic import (
    SceneInstance,
    SyntheticBackend,
    SyntheticScene,
    load_scene,
    save_scene,
    synthetic_backend,
)
from .wire import SubprocessBackend, subprocess_backend

__all__ = [
    "Backend",
    "PromptTriplet",
    "TagBundle",
    "TagRequest",
    "triplet_digest",
    "FixtureBackend",
    "RecordingBackend",
    "fixture_backend",
    "SceneInstance",
    "SyntheticBackend",
    "SyntheticScene",
    "load_scene",
    "save_scene",
    "synthetic_backend",
    "SubprocessBackend",
    "subprocess_backend",
]
