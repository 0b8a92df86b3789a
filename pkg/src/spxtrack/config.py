"""Flat ``key = value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .classifiers import ForestConfig
from .multistep import StepPlan
from .slic import SlicConfig
from .tracking import TrackerConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(t) for t in s.replace(",", " ").split())


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "auto", "none") else int(s)


def _opt_str(s: str):
    return None if s.strip().lower() in ("", "auto", "none") else s.strip()


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


# key -> (parser, default); a default of ... marks a required key
SCHEMA = {
    "sequence_dir": (str, ...),
    "pattern": (str, "*"),
    "reference_index": (int, 0),
    "roi_mask": (_opt_str, None),
    "gt_dir": (_opt_str, None),
    "output_dir": (str, ...),
    "cache_dir": (_opt_str, None),
    "seed": (_seed, ...),
    "jobs": (int, 1),
    "classifier": (str, "forest"),
    "matcher": (str, "fwbw"),
    "integration": (str, "MSI"),
    "msi_strategy": (str, "MSIm"),
    "direction": (_opt_str, None),
    "steps": (_ints, (1, 2, 5, 10, 20)),
    "k_max": (int, 7),
    "budget": (int, 200),
    "superpixels": (int, 500),
    "compactness": (float, 10.0),
    "slic_iterations": (int, 10),
    "min_size_ratio": (float, 0.25),
    "features": (int, 80),
    "radius": (int, 40),
    "box_sizes": (_ints, (3, 5, 7)),
    "trees": (int, 100),
    "max_depth": (int, 20),
    "min_leaf": (int, 5),
    "candidate_features": (_opt_int, None),
    "candidate_thresholds": (int, 10),
    "bootstrap": (_bool, True),
    "train_fraction": (float, 1.0),
    "knn_k": (int, 5),
    "knn_train_fraction": (float, 1.0),
    "contour_radius": (_opt_int, None),
}
PATH_KEYS = ("sequence_dir", "roi_mask", "gt_dir", "output_dir", "cache_dir")


def parse_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(t) for t in v)
    return str(v)


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    base: Path = field(default_factory=Path.cwd)

    def __getattr__(self, key):
        if key in ("values", "base"):
            raise AttributeError(key)
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    @classmethod
    def from_mapping(cls, raw: dict, base=None, overrides: dict | None = None) -> "RunConfig":
        base = Path(base) if base is not None else Path.cwd()
        raw = dict(raw)
        for k, v in (overrides or {}).items():
            if v is not None:
                raw[k] = str(v)
        values = {}
        for key, (parse, default) in SCHEMA.items():
            if key not in raw:
                if default is ...:
                    raise ConfigError(f"missing required key '{key}'")
                values[key] = default
                continue
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {exc}") from None
        for key in PATH_KEYS:
            if values[key] is not None:
                p = Path(values[key]).expanduser()
                values[key] = str(p if p.is_absolute() else (base / p).resolve())
        cfg = cls(values, base)
        cfg.tracker()  # validates the experiment knobs
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_mapping(parse_text(text, str(path)), path.parent.resolve(), overrides)

    def tracker(self) -> TrackerConfig:
        v = self.values
        try:
            return TrackerConfig(
                classifier=v["classifier"], matcher=v["matcher"], integration=v["integration"],
                msi_strategy=v["msi_strategy"],
                plan=StepPlan(v["steps"], v["k_max"], v["budget"]),
                slic=SlicConfig(v["superpixels"], v["compactness"], v["slic_iterations"],
                                v["min_size_ratio"]),
                n_features=v["features"], radius=v["radius"], box_sizes=v["box_sizes"],
                forest=ForestConfig(v["trees"], v["max_depth"], v["min_leaf"],
                                    v["candidate_features"], v["candidate_thresholds"],
                                    v["bootstrap"], v["train_fraction"]),
                knn_k=v["knn_k"], knn_train_fraction=v["knn_train_fraction"],
                direction=v["direction"], seed=v["seed"], jobs=v["jobs"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> str:
        """Every key with its resolved value; parseable back by :func:`parse_text`."""
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in SCHEMA)
