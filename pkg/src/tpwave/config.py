"""Run configuration files.

Flat `key = value` plain text: one assignment per line, `#` starts a
comment line, dotted keys group related settings. Every run is fully
described by one file; the `run` key selects the subcommand family.

Value grammar per key is fixed by the schema below:
  int / float / bool ("true"/"false") / str
  ints / floats / strs: space-separated lists
  pairs: semicolon-separated coordinate pairs, e.g. "750 975 ; 909 909"

Unknown keys are rejected with their path; parse -> emit -> parse is the
identity on the typed values (floats are rendered with repr, which
round-trips exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from tpwave.materials import material_library
from tpwave.scenarios import PointSource, ScenarioSpec


class ConfigError(ValueError):
    pass


REQUIRED = object()

_COMMON = {
    "run": ("str", REQUIRED),
    "outputs.dir": ("str", "out"),
}

SCHEMAS = {
    "mms_h": {
        **_COMMON,
        "k": ("int", 1),
        "nxs": ("ints", [4, 8, 16]),
        "material": ("str", "L1"),
        "T": ("float", 0.5),
        "ct": ("float", 0.25),
        "jitter": ("float", 0.0),
        "scheme": ("str", "cn"),
        "expect.rate_theta": ("float", None),
        "expect.rate_u": ("float", None),
        "tol.rate_theta": ("float", 0.15),
        "tol.rate_u": ("float", 0.2),
    },
    "mms_k": {
        **_COMMON,
        "nx": ("int", 4),
        "ks": ("ints", [1, 2, 3, 4]),
        "material": ("str", "L1"),
        "T": ("float", 0.1),
        "dt": ("float", 1e-4),
        "expect.max_ratio": ("float", 1e-2),
    },
    "mms_dt": {
        **_COMMON,
        "nx": ("int", 16),
        "k": ("int", 3),
        "material": ("str", "L1"),
        "T": ("float", 0.5),
        "steps": ("ints", [8, 16, 32, 64, 128]),
        "scheme": ("str", "cn"),
        "expect.rate": ("float", 2.0),
        "tol.rate": ("float", 0.1),
    },
    "simulate": {
        **_COMMON,
        "domain": ("floats", [0.0, 1500.0, 0.0, 1500.0]),
        "nx": ("int", 20),
        "ny": ("int", 20),
        "split": ("str", "crisscross"),
        "k": ("int", 3),
        "dt": ("float", 1e-2),
        "T": ("float", 0.4),
        "material.0": ("str", "L3"),
        "material.1": ("str", None),
        "material.split_x": ("float", None),
        "source.x": ("float", 750.0),
        "source.y": ("float", 750.0),
        "source.amplitude": ("float", 10.0),
        "source.f0": ("float", 15.0),
        "source.t0": ("float", 0.1),
        "source.eps": ("float", 0.0),
        "receivers": ("pairs", []),
        "receiver.fields": ("strs", ["u2", "q2"]),
        "compare": ("bool", False),
        "outputs.snapshots": ("floats", []),
        "outputs.fields": ("strs", ["umag", "u2", "rmag", "theta"]),
        "outputs.mesh": ("bool", False),
    },
    "check": {
        **_COMMON,
        "nx": ("int", 2),
        "ks": ("ints", [0, 1]),
        "material": ("str", "L1"),
        "steps": ("int", 20),
        "dt": ("float", 0.02),
        "trace.degrees": ("ints", [0, 1, 2, 3, 4]),
        "debug.stab_sign_flip": ("bool", False),
    },
}

_RUN_ALIASES = {"mms-h": "mms_h", "mms-k": "mms_k", "mms-dt": "mms_dt"}


def _parse_value(kind: str, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not (v == v) or v in (float("inf"), float("-inf")):
                raise ValueError("non-finite")
            return v
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if kind == "str":
            return raw
        if kind == "ints":
            return [int(x) for x in raw.split()]
        if kind == "floats":
            return [float(x) for x in raw.split()]
        if kind == "strs":
            return raw.split()
        if kind == "pairs":
            pairs = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                xy = chunk.split()
                if len(xy) != 2:
                    raise ValueError(f"pair needs 2 numbers, got {chunk!r}")
                pairs.append((float(xy[0]), float(xy[1])))
            return pairs
    except ValueError as err:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind} ({err})")
    raise ConfigError(f"internal: unknown value kind {kind}")


def _render_value(kind: str, value) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("int", "str"):
        return str(value)
    if kind == "float":
        return repr(float(value))
    if kind == "ints":
        return " ".join(str(v) for v in value)
    if kind == "floats":
        return " ".join(repr(float(v)) for v in value)
    if kind == "strs":
        return " ".join(value)
    if kind == "pairs":
        return " ; ".join(f"{repr(float(x))} {repr(float(y))}" for x, y in value)
    raise ConfigError(f"internal: unknown value kind {kind}")


@dataclass
class RunConfig:
    kind: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, val = stripped.partition("=")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = val.strip()

    if "run" not in raw:
        raise ConfigError(f"{source}: missing required key 'run'")
    kind = _RUN_ALIASES.get(raw["run"], raw["run"])
    if kind not in SCHEMAS:
        raise ConfigError(
            f"{source}: unknown run kind {raw['run']!r}; expected one of {sorted(SCHEMAS)}"
        )
    schema = SCHEMAS[kind]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown} for run kind {kind!r}")

    values = {}
    for key, (vkind, default) in schema.items():
        if key in raw:
            values[key] = _parse_value(vkind, raw[key], key) if key != "run" else kind
        elif default is REQUIRED:
            raise ConfigError(f"{source}: missing required key {key!r}")
        else:
            values[key] = default
    values["run"] = kind
    return RunConfig(kind=kind, values=values)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


def emit_config(cfg: RunConfig) -> str:
    schema = SCHEMAS[cfg.kind]
    lines = [f"run = {cfg.kind}"]
    for key in sorted(k for k in cfg.values if k != "run"):
        vkind, _ = schema[key]
        val = cfg.values[key]
        if val is None:
            continue
        lines.append(f"{key} = {_render_value(vkind, val)}")
    return "\n".join(lines) + "\n"


def scenario_from_config(cfg: RunConfig) -> ScenarioSpec:
    if cfg.kind != "simulate":
        raise ConfigError(f"expected a simulate config, got {cfg.kind!r}")
    v = cfg.values
    materials = {0: material_library(v["material.0"])}
    split_x = v.get("material.split_x")
    if v.get("material.1"):
        if split_x is None:
            raise ConfigError("material.1 given but material.split_x missing")
        materials[1] = material_library(v["material.1"])
    source = PointSource(
        x=v["source.x"], y=v["source.y"], amplitude=v["source.amplitude"],
        f0=v["source.f0"], t0=v["source.t0"], eps=v["source.eps"],
    )
    return ScenarioSpec(
        domain=tuple(v["domain"]),
        nx=v["nx"], ny=v["ny"], split=v["split"],
        k=v["k"], dt=v["dt"], T=v["T"],
        materials=materials,
        region_split_x=split_x if v.get("material.1") else None,
        source=source,
        receivers=v["receivers"],
        receiver_fields=tuple(v["receiver.fields"]),
        snapshot_times=v["outputs.snapshots"],
        snapshot_fields=tuple(v["outputs.fields"]),
    )
