"""Scenario and pattern files, the CSI line format and CSV result tables.

Scenario files are JSON. Complex amplitudes are written as ``[re, im]``;
a plain number is read as a real amplitude. Floats are always written
with ``repr`` so every value survives a write/read cycle exactly.

CSI streams are line-delimited text, one packet per line::

    index,timestamp_s,rssi_db,re_0,im_0,re_1,im_1,...,re_{K-1},im_{K-1}

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import IO, Any, Iterable, Iterator, Sequence

import numpy as np

from .breathtrack import BreathPattern, BreathSegment
from .impairments import CsiSnapshot
from .model import (BreathPathParams, IrsGeometry, Scenario, SelfInterferenceParams,
                    StaticPath, as_state)
from .optimizer import TableMeasurement


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class CsiFormatError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


# ---------------------------------------------------------------------------
# JSON helpers


def _loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"syntax error: {e.msg} (column {e.colno})", line=e.lineno) from None


def _check_keys(obj: Any, allowed: Sequence[str], where: str, required: Sequence[str] = ()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", where or None)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        path = f"{where}.{unknown[0]}" if where else unknown[0]
        raise ConfigError(f"unknown key (allowed: {', '.join(allowed)})", path)
    for key in required:
        if key not in obj:
            raise ConfigError("missing required key", f"{where}.{key}" if where else key)
    return obj


def _number(v: Any, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", name)
    if not math.isfinite(v):
        raise ConfigError("must be finite", name)
    return float(v)


def _integer(v: Any, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", name)
    return v


def _complex(v: Any, name: str) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError("complex values are [re, im] pairs", name)
        return complex(_number(v[0], name), _number(v[1], name))
    return complex(_number(v, name), 0.0)


def _complex_out(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _build(cls, name: str, **kwargs):
    # turn model validation errors into errors that name the config key
    try:
        return cls(**kwargs)
    except ValueError as e:
        msg = str(e)
        for key in kwargs:
            if msg.startswith(key + " ") or f" {key} " in msg:
                raise ConfigError(msg, f"{name}.{key}" if name else key) from None
        raise ConfigError(msg, name or None) from None


# ---------------------------------------------------------------------------
# scenarios

_IRS_KEYS = ("n_rows", "n_cols", "width", "height", "phase_shift", "element_reflectance")
_SCENARIO_KEYS = ("irs_geometry", "antenna_distance", "antenna_offset", "static_paths",
                  "breath_path", "si", "carrier_hz", "subcarrier_spacing_hz", "n_subcarriers",
                  "round_trip_phase")


def scenario_from_dict(d: dict) -> Scenario:
    _check_keys(d, _SCENARIO_KEYS, "", required=("irs_geometry", "antenna_distance"))

    g = _check_keys(d["irs_geometry"], _IRS_KEYS, "irs_geometry")
    gk = {}
    for key in _IRS_KEYS:
        if key in g:
            conv = _integer if key in ("n_rows", "n_cols") else _number
            gk[key] = conv(g[key], f"irs_geometry.{key}")
    irs = _build(IrsGeometry, "irs_geometry", **gk)

    kw: dict[str, Any] = {"irs": irs}
    kw["antenna_distance"] = _number(d["antenna_distance"], "antenna_distance")
    if kw["antenna_distance"] <= 0:
        raise ConfigError(f"must be > 0, got {kw['antenna_distance']}", "antenna_distance")
    if "antenna_offset" in d:
        off = d["antenna_offset"]
        if not isinstance(off, list) or len(off) != 2:
            raise ConfigError("expected [horizontal, vertical]", "antenna_offset")
        kw["antenna_offset"] = (_number(off[0], "antenna_offset"), _number(off[1], "antenna_offset"))
    for key in ("carrier_hz", "subcarrier_spacing_hz"):
        if key in d:
            kw[key] = _number(d[key], key)
    if "n_subcarriers" in d:
        kw["n_subcarriers"] = _integer(d["n_subcarriers"], "n_subcarriers")
    if "round_trip_phase" in d:
        if not isinstance(d["round_trip_phase"], bool):
            raise ConfigError("expected true or false", "round_trip_phase")
        kw["round_trip_phase"] = d["round_trip_phase"]

    if "static_paths" in d:
        if not isinstance(d["static_paths"], list):
            raise ConfigError("expected a list", "static_paths")
        paths = []
        for i, p in enumerate(d["static_paths"]):
            where = f"static_paths[{i}]"
            _check_keys(p, ("a", "d"), where, required=("a", "d"))
            paths.append(_build(StaticPath, where, a=_complex(p["a"], f"{where}.a"),
                                d=_number(p["d"], f"{where}.d")))
        kw["static_paths"] = tuple(paths)

    if "si" in d:
        si = _check_keys(d["si"], ("a_iso", "theta"), "si", required=("a_iso",))
        kw["si"] = _build(SelfInterferenceParams, "si", a_iso=_complex(si["a_iso"], "si.a_iso"),
                          theta=_number(si.get("theta", 0.0), "si.theta"))

    try:
        s = Scenario(**kw)
    except ValueError as e:
        msg = str(e)
        key = next((k for k in _SCENARIO_KEYS if msg.startswith(k)), None)
        raise ConfigError(msg, key) from None

    bp = d.get("breath_path")
    if bp is not None:
        _check_keys(bp, ("a0", "d0", "lambda"), "breath_path", required=("a0", "d0"))
        lam = _number(bp["lambda"], "breath_path.lambda") if "lambda" in bp else s.wavelength
        breath = _build(BreathPathParams, "breath_path", a0=_complex(bp["a0"], "breath_path.a0"),
                        d0=_number(bp["d0"], "breath_path.d0"), wavelength=lam)
        s = replace(s, breath_path=breath)
    return s


def scenario_to_dict(s: Scenario) -> dict:
    g = s.irs
    d: dict[str, Any] = {
        "irs_geometry": {k: getattr(g, k) for k in _IRS_KEYS},
        "antenna_distance": s.antenna_distance,
        "antenna_offset": list(s.antenna_offset),
        "static_paths": [{"a": _complex_out(p.a), "d": p.d} for p in s.static_paths],
        "si": {"a_iso": _complex_out(s.si.a_iso), "theta": s.si.theta},
        "carrier_hz": s.carrier_hz,
        "subcarrier_spacing_hz": s.subcarrier_spacing_hz,
        "n_subcarriers": s.n_subcarriers,
        "round_trip_phase": s.round_trip_phase,
    }
    if s.breath_path is not None:
        b = s.breath_path
        d["breath_path"] = {"a0": _complex_out(b.a0), "d0": b.d0, "lambda": b.wavelength}
    return d


def parse_scenario(text: str) -> Scenario:
    return scenario_from_dict(_loads(text))


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def _read_text(path) -> str:
    p = Path(path)
    try:
        return p.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {p}") from None
    except OSError as e:
        raise OSError(f"cannot read {p}: {e.strerror or e}") from None


def load_scenario(path) -> Scenario:
    return parse_scenario(_read_text(path))


# ---------------------------------------------------------------------------
# breath patterns


def pattern_from_dict(d: Any) -> BreathPattern:
    _check_keys(d, ("segments",), "", required=("segments",))
    segs = d["segments"]
    if not isinstance(segs, list) or not segs:
        raise ConfigError("need a non-empty list of segments", "segments")
    out = []
    for i, seg in enumerate(segs):
        where = f"segments[{i}]"
        _check_keys(seg, ("kind", "duration", "rate", "depth"), where, required=("kind", "duration"))
        kw = {"kind": seg["kind"], "duration": _number(seg["duration"], f"{where}.duration")}
        for key in ("rate", "depth"):
            if key in seg:
                kw[key] = _number(seg[key], f"{where}.{key}")
        if kw["kind"] == "regular" and not {"rate", "depth"} <= set(seg):
            raise ConfigError("regular segments need rate and depth", where)
        out.append(_build(BreathSegment, where, **kw))
    return BreathPattern(tuple(out))


def parse_pattern(text: str) -> BreathPattern:
    if not text.strip():
        raise ConfigError("empty pattern file", "segments")
    return pattern_from_dict(_loads(text))


def serialize_pattern(p: BreathPattern) -> str:
    segs = []
    for seg in p.segments:
        item = {"kind": seg.kind, "duration": seg.duration}
        if seg.kind == "regular":
            item.update(rate=seg.rate, depth=seg.depth)
        segs.append(item)
    return json.dumps({"segments": segs}, indent=2) + "\n"


def load_pattern(path) -> BreathPattern:
    return parse_pattern(_read_text(path))


# ---------------------------------------------------------------------------
# IRS state files: one text row per surface row, characters 0/1


def format_state(state) -> str:
    bits = as_state(state)
    return "".join("".join(str(int(b)) for b in row) + "\n" for row in bits)


def parse_state(text: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    rows = [ln.strip().replace(" ", "").replace(",", "") for ln in text.splitlines()]
    rows = [r for r in rows if r and not r.startswith("#")]
    if not rows:
        raise ConfigError("state file has no rows")
    for i, r in enumerate(rows, 1):
        if set(r) - {"0", "1"}:
            raise ConfigError("state rows may only contain 0 and 1", line=i)
        if len(r) != len(rows[0]):
            raise ConfigError("all state rows need the same length", line=i)
    st = np.array([[int(c) for c in r] for r in rows], dtype=np.uint8)
    if shape is not None and st.shape != tuple(shape):
        raise ConfigError(f"state is {st.shape[0]}x{st.shape[1]}, surface is {shape[0]}x{shape[1]}")
    return st


def load_state(path, shape=None) -> np.ndarray:
    return parse_state(_read_text(path), shape)


# ---------------------------------------------------------------------------
# CSI record streams


@dataclass(frozen=True)
class CsiRecord:
    packet_index: int
    timestamp_s: float
    rssi_db: float
    csi: np.ndarray

    @classmethod
    def from_snapshot(cls, s: CsiSnapshot) -> "CsiRecord":
        return cls(s.packet_index, s.timestamp, s.rssi_db, s.h)

    def to_snapshot(self) -> CsiSnapshot:
        return CsiSnapshot(self.packet_index, self.timestamp_s, self.csi, self.rssi_db)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_csi_line(r: CsiRecord) -> str:
    h = np.asarray(r.csi, dtype=np.complex128)
    inter = np.empty(2 * h.shape[0])
    inter[0::2], inter[1::2] = h.real, h.imag
    parts = [str(int(r.packet_index)), _fmt(r.timestamp_s), _fmt(r.rssi_db)]
    parts.extend(map(repr, inter.tolist()))
    return ",".join(parts) + "\n"


def _open_lines(source) -> tuple[Iterable[str], IO | None]:
    if isinstance(source, (str, os.PathLike)):
        try:
            fh = open(source, "r")
        except FileNotFoundError:
            raise FileNotFoundError(f"no such file: {source}") from None
        return fh, fh
    return source, None


def read_csi_stream(source, n_subcarriers: int | None = None) -> Iterator[CsiRecord]:
    """Lazily parse CSI records from a path, an open file or an iterable of lines.

    ``n_subcarriers`` fixes K; otherwise the first record sets it.
    """
    lines, owned = _open_lines(source)
    K = n_subcarriers
    last_t = -math.inf
    try:
        for lineno, line in enumerate(lines, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 5 or (len(parts) - 3) % 2:
                raise CsiFormatError(f"expected index, timestamp, rssi and 2*K values, got {len(parts)} fields", lineno)
            k = (len(parts) - 3) // 2
            if K is None:
                K = k
            elif k != K:
                raise CsiFormatError(f"record has {k} subcarriers, stream has {K}", lineno)
            try:
                idx = int(parts[0])
                vals = np.array([float(v) for v in parts[1:]])
            except ValueError as e:
                raise CsiFormatError(f"not a number ({e})", lineno) from None
            t, rssi = vals[0], vals[1]
            if not math.isfinite(t) or not np.all(np.isfinite(vals[2:])):
                raise CsiFormatError("timestamp and CSI values must be finite", lineno)
            if t < last_t:
                raise CsiFormatError(f"timestamp {t} goes backwards", lineno)
            last_t = t
            yield CsiRecord(idx, float(t), float(rssi), vals[2::2] + 1j * vals[3::2])
    finally:
        if owned is not None:
            owned.close()


def write_csi_stream(records: Iterable, dest) -> int:
    """Write records or snapshots; returns the number written. Paths are written atomically."""
    def lines():
        for r in records:
            if isinstance(r, CsiSnapshot):
                r = CsiRecord.from_snapshot(r)
            yield format_csi_line(r)

    if isinstance(dest, (str, os.PathLike)):
        n = 0
        with _atomic_open(dest) as fh:
            for ln in lines():
                fh.write(ln)
                n += 1
        return n
    n = 0
    for ln in lines():
        dest.write(ln)
        n += 1
    return n


def read_subcarrier_phase(source, subcarrier: int) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps and wrapped phase of one subcarrier, keeping only those two numbers per packet."""
    ts, ph = [], []
    for rec in read_csi_stream(source):
        if not 0 <= subcarrier < rec.csi.shape[0]:
            raise IndexError(f"subcarrier {subcarrier} outside [0, {rec.csi.shape[0]})")
        ts.append(rec.timestamp_s)
        ph.append(float(np.angle(rec.csi[subcarrier])))
    return np.asarray(ts), np.asarray(ph)


# ---------------------------------------------------------------------------
# result tables


@dataclass
class Table:
    """A named CSV table; ``rows`` is any iterable of equal-length sequences."""

    name: str
    header: Sequence[str]
    rows: Iterable[Sequence[Any]] = field(default_factory=list)


class _AtomicFile:
    def __init__(self, path):
        self.path = Path(path)

    def __enter__(self):
        try:
            fd, self.tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.")
        except OSError as e:
            raise OSError(f"cannot write {self.path}: {e.strerror or e}") from None
        self.fh = os.fdopen(fd, "w", newline="")
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is not None:
            os.unlink(self.tmp)
            return False
        try:
            os.replace(self.tmp, self.path)
        except OSError as e:
            os.unlink(self.tmp)
            raise OSError(f"cannot write {self.path}: {e.strerror or e}") from None
        return False


def _atomic_open(path) -> _AtomicFile:
    return _AtomicFile(path)


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with _atomic_open(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path.name}: row has {len(row)} cells, header has {len(header)}")
            fh.write(",".join(_cell(v) for v in row) + "\n")
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]


def write_results(tables: Sequence[Table], out_dir) -> list[Path]:
    """Write every table to ``<out_dir>/<name>.csv``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create {out}: {e.strerror or e}") from None
    return [write_table(out / f"{t.name}.csv", t.header, t.rows) for t in tables]


CONVERGENCE_HEADER = ("method", "iteration", "mean_cum_min")
PHASE_PATTERN_HEADER = ("row", "col", "phase_rad")
PROJECTION_HEADER = ("row", "col", "bit")
HEATMAP_HEADER = ("row", "col", "on_ratio")
BREATH_TRACE_HEADER = ("time_s", "phase_deg_raw", "phase_deg_filtered", "ground_truth_norm")
IMPAIRMENT_HEADER = ("mode", "packet_index", "time_s", "phase_rad")


def grid_rows(values: np.ndarray) -> Iterator[tuple[int, int, Any]]:
    v = np.asarray(values)
    for r in range(v.shape[0]):
        for c in range(v.shape[1]):
            yield r, c, v[r, c].item()


def read_grid(path, value_type=float) -> np.ndarray:
    header, rows = read_table(path)
    if not rows:
        return np.empty((0, 0))
    rr = [int(r[0]) for r in rows]
    cc = [int(r[1]) for r in rows]
    out = np.zeros((max(rr) + 1, max(cc) + 1))
    for r, c, row in zip(rr, cc, rows):
        out[r, c] = value_type(row[2])
    return out


# ---------------------------------------------------------------------------
# recorded SI measurements: "<state hex>,<value>" with a "# shape RxC" header


def write_measurement_table(pairs: Iterable[tuple[np.ndarray, float]], shape, path) -> Path:
    with _atomic_open(path) as fh:
        fh.write(f"# shape {shape[0]}x{shape[1]}\n")
        for state, value in pairs:
            fh.write(f"{TableMeasurement.key(state).hex()},{_fmt(value)}\n")
    return Path(path)


def read_measurement_table(path) -> TableMeasurement:
    shape = None
    table = {}
    for i, ln in enumerate(_read_text(path).splitlines(), 1):
        ln = ln.strip()
        if not ln:
            continue
        if ln.startswith("# shape"):
            a, b = ln.split()[2].split("x")
            shape = (int(a), int(b))
            continue
        if ln.startswith("#"):
            continue
        try:
            key, val = ln.split(",")
            table[bytes.fromhex(key)] = float(val)
        except ValueError:
            raise ConfigError("expected '<state hex>,<value>'", line=i) from None
    if shape is None:
        raise ConfigError("missing '# shape RxC' header")
    return TableMeasurement(table, shape)


# ---------------------------------------------------------------------------
# run manifests


def _plain(obj):
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, complex):
        return _complex_out(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class RunManifest:
    """Everything needed to rerun a command: inputs, configs and explicit seeds."""

    command: str
    scenario_path: str | None
    output_dir: str
    seeds: dict[str, int]
    configs: dict[str, Any] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, seed in self.seeds.items():
            if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
                raise ConfigError(f"seed must be an explicit integer, got {seed!r}", f"seeds.{name}")
        refs = dict(self.inputs)
        if self.scenario_path is not None:
            refs["scenario"] = self.scenario_path
        for name, p in refs.items():
            if not Path(p).exists():
                raise ConfigError(f"referenced file does not exist: {p}", name)

    def to_json(self) -> str:
        return json.dumps(_plain(self), indent=2, sort_keys=True) + "\n"

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else Path(self.output_dir) / "manifest.json"
        with _atomic_open(path) as fh:
            fh.write(self.to_json())
        return path


# ---------------------------------------------------------------------------
# files shipped with the package


def builtin_names() -> list[str]:
    from importlib import resources

    return sorted(p.name[:-5] for p in resources.files("irsbreath").joinpath("data").iterdir()
                  if p.name.endswith(".json"))


def resolve_input(ref) -> Path:
    """A path that exists, or the name of a shipped file such as ``canonical``."""
    p = Path(ref)
    if p.exists():
        return p
    if str(ref) in builtin_names():
        from importlib import resources

        return Path(str(resources.files("irsbreath").joinpath("data", f"{ref}.json")))
    raise FileNotFoundError(f"no such file: {ref}")


def builtin_scenario(name: str = "canonical") -> Scenario:
    return load_scenario(resolve_input(name))


def builtin_pattern(name: str = "breath_hold") -> BreathPattern:
    return load_pattern(resolve_input(name))
