"""Run configuration: one serializable object driving a whole build.

The same dict shape is accepted from config files, embedded in dataset
manifests, and produced by `to_dict`, so a run can be re-executed from
its manifest alone. Execution-only knobs (worker count, cache location,
call budget) never enter the manifest: they must not influence output
bytes.
"""

from dataclasses import dataclass, fields, replace
from typing import Any

from .encode import BASE_KINDS, DEFAULT_SUMMARIZE_BASE, EncodingStrategy
from .errors import ConfigError
from .qa import FACT, INVERSE, TASKS

OPEN_FORMATS = ("open", "mc")
BACKEND_KINDS = ("stub", "remote", "off")

# fields that steer execution but can never change emitted bytes
EXECUTION_ONLY = ("jobs", "llm_cache", "llm_max_calls")


@dataclass(frozen=True)
class RunConfig:
    k: int = 1
    n_max: int = 30
    t_max: int = 256
    chars_per_token: float = 4.0
    strategy: str = "triples"
    summarize_base: str = DEFAULT_SUMMARIZE_BASE
    tasks: tuple[str, ...] = (FACT, INVERSE)
    train_tasks: tuple[str, ...] = (FACT,)
    formats: tuple[str, ...] = ("open", "mc")
    split: float | None = None
    seed: int = 0
    eval_include_context: bool = False
    paraphrase_questions: bool = False
    llm_backend: str = "stub"
    templates: str | None = None
    # execution-only
    jobs: int = 1
    llm_cache: str | None = None
    llm_max_calls: int | None = None

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.n_max < 2:
            raise ConfigError(f"n_max must be >= 2, got {self.n_max}")
        if self.t_max < 32:
            raise ConfigError(f"t_max must be >= 32, got {self.t_max}")
        if self.chars_per_token <= 0:
            raise ConfigError(f"chars_per_token must be positive, got {self.chars_per_token}")
        try:
            EncodingStrategy.parse(self.strategy, self.summarize_base)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.summarize_base not in BASE_KINDS:
            raise ConfigError(f"summarize_base must be one of {BASE_KINDS}")
        for task in self.tasks:
            if task not in TASKS:
                raise ConfigError(f"unknown task {task!r}")
        for task in self.train_tasks:
            if task not in (FACT, INVERSE):
                raise ConfigError(f"train_tasks may only contain fact/inverse, got {task!r}")
        if not self.formats:
            raise ConfigError("at least one format required")
        for fmt in self.formats:
            if fmt not in OPEN_FORMATS:
                raise ConfigError(f"unknown format {fmt!r}")
        if self.split is not None and not 0 < self.split < 1:
            raise ConfigError(f"split ratio must be in (0, 1), got {self.split}")
        if "multihop" in self.tasks and self.split is None:
            raise ConfigError("the multihop task needs a --split ratio (it asks about held-out edges)")
        if self.llm_backend not in BACKEND_KINDS:
            raise ConfigError(f"llm_backend must be one of {BACKEND_KINDS}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.llm_max_calls is not None and self.llm_max_calls < 0:
            raise ConfigError(f"llm_max_calls must be >= 0, got {self.llm_max_calls}")

    def to_dict(self, include_execution: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            if not include_execution and f.name in EXECUTION_ONLY:
                continue
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RunConfig":
        if not isinstance(payload, dict):
            raise ConfigError(f"config must be an object, got {type(payload).__name__}")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(payload) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, value in payload.items():
            if name in ("tasks", "train_tasks", "formats"):
                if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
                    raise ConfigError(f"{name} must be a list of strings")
                kwargs[name] = tuple(value)
            elif name in ("k", "n_max", "t_max", "seed", "jobs"):
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ConfigError(f"{name} must be an integer, got {value!r}")
                kwargs[name] = value
            elif name in ("chars_per_token", "split"):
                if name == "split" and value is None:
                    kwargs[name] = None
                elif not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"{name} must be a number, got {value!r}")
                else:
                    kwargs[name] = float(value)
            elif name in ("eval_include_context", "paraphrase_questions"):
                if not isinstance(value, bool):
                    raise ConfigError(f"{name} must be true or false, got {value!r}")
                kwargs[name] = value
            elif name == "llm_max_calls":
                if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
                    raise ConfigError(f"{name} must be an integer or null, got {value!r}")
                kwargs[name] = value
            else:  # string-valued
                if value is not None and not isinstance(value, str):
                    raise ConfigError(f"{name} must be a string, got {value!r}")
                kwargs[name] = value
        config = cls(**kwargs)
        config.validate()
        return config

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Apply non-None overrides (CLI layer); returns a validated copy."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        config = replace(self, **clean)
        config.validate()
        return config

    @property
    def encoding(self) -> EncodingStrategy:
        return EncodingStrategy.parse(self.strategy, self.summarize_base)
