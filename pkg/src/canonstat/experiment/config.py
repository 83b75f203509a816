"""Experiment configuration: INI sections [generator], [kernel], [run], [thresholds].

Example::

    [generator]
    K = 2
    P = 0.7 0.3
        0.3 0.7
    seed = 7          ; or: file = chain.gen (path relative to the config)

    [kernel]
    preset = cvm      ; cvm | rank1 | zero | grid
    project = true
    ; file = kernel.txt   (preset = grid)

    [run]
    n = 2000
    reps = 10000
    n_cells = 256
    out = results/markov_cvm

Every threshold used by ``compare`` and ``verify`` lives in [thresholds] with the
defaults of :class:`Thresholds`.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InputError
from ..mixing import MarkovUniformGenerator, generator_problems, parse_generator_spec

KERNEL_PRESETS = ("cvm", "rank1", "zero", "grid")
SECTIONS = ("generator", "kernel", "run", "thresholds")


@dataclass(frozen=True)
class GeneratorSpec:
    K: int
    P: tuple
    seed: int
    source: str = "inline"

    @property
    def problems(self) -> list:
        return generator_problems(self.K, np.array(self.P, float))

    def build(self, seed: Optional[int] = None) -> MarkovUniformGenerator:
        return MarkovUniformGenerator(self.K, np.array(self.P, float), self.seed if seed is None else seed)

    @property
    def is_iid(self) -> bool:
        return bool(np.allclose(np.array(self.P, float), 1.0 / self.K, rtol=0, atol=1e-12))


@dataclass(frozen=True)
class KernelSpec:
    preset: str = "cvm"
    project: bool = True
    file: Optional[str] = None


@dataclass(frozen=True)
class Thresholds:
    """Pass/fail thresholds; the defaults are the calibrated acceptance values."""

    ks_iid: float = 0.03
    ks_dependent: float = 0.05
    single_draw_configs: int = 1000
    psi_lags: int = 50
    psi_grid: int = 32
    psi_slack: float = 1e-12
    probe_sizes: tuple = (100, 200, 400, 800, 1600, 3200)
    probe_reps: int = 20000
    probe_slope: float = 0.05
    tube_factor: float = 0.75
    seminorm_tol: float = 1e-10
    isometry_rtol: float = 1e-10
    psd_tol: float = 1e-8
    variation_rtol: float = 0.05
    degeneracy_tol: float = 1e-5
    mean_z: float = 3.0
    sweep: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorSpec
    kernel: KernelSpec = field(default_factory=KernelSpec)
    d: int = 2
    n: int = 1000
    reps: int = 10000
    n_cells: int = 256
    seed: int = 0
    tail_tol: float = 1e-8
    k_terms: int = 200
    nystrom_cells: int = 512
    threads: int = 1
    out: str = "results"
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        for name in ("d", "n", "reps", "n_cells", "k_terms", "nystrom_cells", "threads"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise InputError(f"{name} must be a positive integer, got {v!r}")
        if self.n_cells < 2:
            raise InputError("n_cells must be at least 2")
        if not (isinstance(self.tail_tol, float) and self.tail_tol > 0):
            raise InputError("tail_tol must be positive")
        if self.kernel.preset not in KERNEL_PRESETS:
            raise InputError(f"unknown kernel preset {self.kernel.preset!r}; choose from {KERNEL_PRESETS}")
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must be an unsigned 64-bit integer")

    def override(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw) if kw else self


# --- parsing -------------------------------------------------------------------


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    """1-based line of ``key`` inside ``[section]`` (or of the header); 0 if absent."""
    current = None
    for i, ln in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", ln)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            m = re.match(r"\s*([^=:\s]+)\s*[=:]", ln)
            if m and m.group(1).strip().lower() == key:
                return i
    return 0


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, text: str, source: str):
        self.cp, self.text, self.source = cp, text, source

    def where(self, section, key=None) -> str:
        line = _line_of(self.text, section, key)
        return f"{self.source}:{line}" if line else self.source

    def fail(self, section, key, msg):
        raise InputError(f"{self.where(section, key)}: [{section}] {key}: {msg}")

    def get(self, section, key, conv, default):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError):
            self.fail(section, key, f"cannot parse {raw!r}")

    def flag(self, section, key, default):
        if not self.cp.has_option(section, key):
            return default
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"expected a boolean, got {self.cp.get(section, key)!r}")


def _float_tuple(raw: str) -> tuple:
    vals = tuple(float(x) for x in raw.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _int_tuple(raw: str) -> tuple:
    return tuple(int(x) for x in _float_tuple(raw))


def _u64(raw: str) -> int:
    v = int(raw)
    if not 0 <= v < 2**64:
        raise ValueError("seed out of range")
    return v


def _parse_generator(r: _Reader, base: Path) -> GeneratorSpec:
    if not r.cp.has_section("generator"):
        raise InputError(f"{r.source}: missing [generator] section")
    if r.cp.has_option("generator", "file"):
        path = base / r.cp.get("generator", "file")
        try:
            text = path.read_text()
        except OSError as exc:
            r.fail("generator", "file", f"cannot read {path}: {exc.strerror}")
        K, P, seed = parse_generator_spec(text, str(path), check=False)
        return GeneratorSpec(K, tuple(map(tuple, P.tolist())), seed, str(path))
    K = r.get("generator", "k", int, None)
    if K is None or K < 1:
        r.fail("generator", "k", "state count K is required and must be positive")
    if not r.cp.has_option("generator", "p"):
        r.fail("generator", "p", "transition matrix P is required")
    raw = r.cp.get("generator", "p")
    rows = [ln for ln in re.split(r"[;\n]", raw) if ln.strip()]
    try:
        P = [[float(x) for x in ln.replace(",", " ").split()] for ln in rows]
    except ValueError:
        r.fail("generator", "p", f"cannot parse {raw!r}")
    if len(P) != K or any(len(row) != K for row in P):
        r.fail("generator", "p", f"expected {K} rows of {K} entries")
    seed = r.get("generator", "seed", _u64, 0)
    return GeneratorSpec(K, tuple(tuple(row) for row in P), seed)


def _parse_kernel(r: _Reader, base: Path) -> KernelSpec:
    if not r.cp.has_section("kernel"):
        return KernelSpec()
    preset = r.cp.get("kernel", "preset", fallback="cvm").strip().lower()
    if preset not in KERNEL_PRESETS:
        r.fail("kernel", "preset", f"unknown preset {preset!r}; choose from {', '.join(KERNEL_PRESETS)}")
    file = r.cp.get("kernel", "file", fallback=None)
    if preset == "grid" and not file:
        r.fail("kernel", "preset", "preset 'grid' needs a kernel file")
    return KernelSpec(preset, r.flag("kernel", "project", True), str(base / file) if file else None)


def _parse_thresholds(r: _Reader) -> Thresholds:
    th = Thresholds()
    if not r.cp.has_section("thresholds"):
        return th
    kw = {}
    for f in dataclasses.fields(Thresholds):
        default = getattr(th, f.name)
        if isinstance(default, tuple):
            conv = _int_tuple if isinstance(default[0], int) else _float_tuple
        else:
            conv = type(default)
        kw[f.name] = r.get("thresholds", f.name, conv, default)
    unknown = set(r.cp.options("thresholds")) - set(kw)
    if unknown:
        key = sorted(unknown)[0]
        r.fail("thresholds", key, "unknown threshold")
    return Thresholds(**kw)


_RUN_KEYS = {
    "d": int, "n": int, "reps": int, "n_cells": int, "seed": _u64, "tail_tol": float,
    "k_terms": int, "nystrom_cells": int, "threads": int, "out": str,
}


def parse_config(text: str, source: str = "<config>", base_dir=None) -> ExperimentConfig:
    """Parse INI text; every error message carries ``source:line``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        raise InputError(f"{source}:{lineno}: malformed line") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", 0)
        raise InputError(f"{source}:{lineno}: {exc.message.splitlines()[0]}") from None
    r = _Reader(cp, text, source)
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise InputError(f"{r.where(unknown[0])}: unknown section [{unknown[0]}]")
    base = Path(base_dir) if base_dir is not None else Path(".")
    gen = _parse_generator(r, base)
    kernel = _parse_kernel(r, base)
    kw = {}
    if cp.has_section("run"):
        for key in cp.options("run"):
            if key not in _RUN_KEYS:
                r.fail("run", key, "unknown key")
            kw[key] = r.get("run", key, _RUN_KEYS[key], None)
    kw.setdefault("seed", gen.seed)
    if "out" in kw and not Path(kw["out"]).is_absolute():
        kw["out"] = str(base / kw["out"])
    try:
        return ExperimentConfig(gen, kernel, thresholds=_parse_thresholds(r), **kw)
    except InputError as exc:
        key = str(exc).split(" ", 1)[0]
        raise InputError(f"{r.where('run', key)}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path), base_dir=path.parent)
