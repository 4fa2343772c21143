"""Flat key=value configuration files and named presets."""

from __future__ import annotations

import importlib.resources
from pathlib import Path

from .mcmc import Schedule, SdePriors

PRESET_SCHEDULES = {
    "desk": Schedule.desk(),
    "paper": Schedule.paper(),
}


def read_kv_file(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv_file(path, mapping) -> None:
    with open(path, "w") as fh:
        for k, v in mapping.items():
            fh.write(f"{k} = {v!r}\n" if isinstance(v, str) else f"{k} = {v:.17g}\n")


def preset_path(name: str) -> Path:
    """Path of a packaged preset file ('sde-priors', 'shm-priors-2011')."""
    res = importlib.resources.files("qfabayes").joinpath("presets", f"{name}.cfg")
    if not res.is_file():
        raise FileNotFoundError(f"no preset named {name!r}")
    return Path(str(res))


def load_sde_priors(source: str | Path | None = None) -> SdePriors:
    """SdePriors from a preset name, a config path, or the defaults."""
    if source is None:
        return SdePriors()
    p = Path(source)
    if not p.exists():
        p = preset_path(str(source))
    raw = read_kv_file(p)
    return SdePriors(**{k: float(v) for k, v in raw.items()})
