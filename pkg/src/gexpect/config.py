"""Run configuration: defaults, flat key=value config files, and flag precedence."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .gcore import GParams

__all__ = ["RunConfig", "load_config", "save_config"]


@dataclass(frozen=True)
class RunConfig:
    sigma_lower_sq: float = 0.25
    sigma_upper_sq: float = 1.0
    horizon: float = 1.0
    n_steps: int = 200
    nx: int = 401
    n_paths: int = 10000
    seed: int = 0
    sigma_refinement: int = 0
    cfl_safety: float = 2.0
    x_span: float | None = None
    out_dir: str = "."
    timing: bool = True
    digits: int = 12
    tol: dict = field(default_factory=dict)  # per-check tolerance overrides

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("horizon, n_steps and n_paths must be positive")
        if self.nx < 3:
            raise ValueError("need nx >= 3")
        if self.sigma_refinement < 0:
            raise ValueError("sigma_refinement must be >= 0")

    @property
    def params(self) -> GParams:
        return GParams(
            sigma_lower_sq=self.sigma_lower_sq, sigma_upper_sq=self.sigma_upper_sq
        )

    def with_overrides(self, **kwargs) -> "RunConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


_BOOL = {"true": True, "false": False, "1": True, "0": False}


def _parse_value(name: str, text: str):
    kind = RunConfig.__dataclass_fields__[name].type
    text = text.strip()
    if name in ("n_steps", "nx", "n_paths", "seed", "sigma_refinement", "digits"):
        return int(text)
    if name == "timing":
        return _BOOL[text.lower()]
    if name == "out_dir":
        return text
    if name == "x_span":
        return None if text.lower() in ("", "none") else float(text)
    return float(text)


def load_config(path: str) -> RunConfig:
    """Flat key=value file, UTF-8, '#' comments; keys 'tol.<check>' set
    per-check tolerance overrides."""
    values: dict = {}
    tol: dict = {}
    known = {f.name for f in fields(RunConfig)} - {"tol"}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key.startswith("tol."):
                tol[key[4:]] = float(val)
            elif key in known:
                values[key] = _parse_value(key, val)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return RunConfig(tol=tol, **values)


def save_config(cfg: RunConfig, path: str) -> None:
    """Inverse of load_config (lossless round trip)."""
    lines = []
    for f in fields(RunConfig):
        if f.name == "tol":
            continue
        v = getattr(cfg, f.name)
        if f.name == "x_span" and v is None:
            v = "none"
        if f.name == "timing":
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    for k in sorted(cfg.tol):
        lines.append(f"tol.{k} = {cfg.tol[k]}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
