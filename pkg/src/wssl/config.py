"""Run configuration: ``key = value`` files with command-line overrides."""
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    k: int = 550
    alpha: float = 0.05
    lam: float = 0.01
    gamma: float = 0.01
    m: int = 35
    tol: float = 1e-4
    max_iter: int = 10
    seed: int = 0
    images: str = ""
    tags: str = ""
    gt: str = ""
    out: str = "out"
    cache: str = ""
    method: str = "wssl"
    lgc_alpha: float = 0.99
    n_components: int = 10
    min_region_frac: float = 0.005
    bandwidth: float = 0.0
    eigen: str = "auto"
    n_categories: int = 0
    noise: float = 0.0
    figures: bool = True

    def solver_params(self):
        from .solver import SolverParams

        return SolverParams(lam=self.lam, gamma=self.gamma, tol=self.tol, max_iter=self.max_iter)

    def to_dict(self):
        """Effective configuration keyed by the public key names."""
        return {PUBLIC.get(k, k): v for k, v in asdict(self).items()}


# public key -> field name, where they differ
ALIASES = {"lambda": "lam"}
PUBLIC = {v: k for k, v in ALIASES.items()}

_CHECKS = {
    "k": (lambda v: v >= 1, "must be >= 1"),
    "alpha": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "lam": (lambda v: v >= 0, "must be >= 0"),
    "gamma": (lambda v: v >= 0, "must be >= 0"),
    "m": (lambda v: v >= 1, "must be >= 1"),
    "tol": (lambda v: v > 0, "must be > 0"),
    "max_iter": (lambda v: v >= 1, "must be >= 1"),
    "method": (lambda v: v in ("wssl", "lgc"), "must be 'wssl' or 'lgc'"),
    "lgc_alpha": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "n_components": (lambda v: v >= 1, "must be >= 1"),
    "min_region_frac": (lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    "bandwidth": (lambda v: v >= 0, "must be >= 0 (0 selects the median rule)"),
    "eigen": (lambda v: v in ("auto", "dense", "lanczos"), "must be auto, dense or lanczos"),
    "n_categories": (lambda v: v >= 0, "must be >= 0"),
    "noise": (lambda v: 0 <= v <= 100, "must lie in [0, 100]"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def public_keys():
    return [PUBLIC.get(f.name, f.name) for f in fields(RunConfig)]


def _convert(key, name, raw):
    typ = _FIELD_TYPES[name]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if typ in ("bool", bool):
            if isinstance(raw, bool):
                return raw
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in ("int", int):
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if typ in ("float", float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None


def parse_config_text(text, source="<config>"):
    values = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def parse_config(path=None, overrides=None):
    """Defaults, then the file's entries, then ``overrides`` (flags win)."""
    merged = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        merged.update(parse_config_text(text, str(path)))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    cfg = RunConfig()
    for key, raw in merged.items():
        name = ALIASES.get(key, key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        value = _convert(key, name, raw)
        check = _CHECKS.get(name)
        if check and not check[0](value):
            raise ConfigError(f"{key} = {value!r} out of range: {check[1]}")
        setattr(cfg, name, value)
    return cfg


def format_config(cfg):
    """Inverse of :func:`parse_config_text` for a full config."""
    out = []
    for key, value in cfg.to_dict().items():
        out.append(f"{key} = {repr(value) if isinstance(value, float) else value}")
    return "\n".join(out) + "\n"
