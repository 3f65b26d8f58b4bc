"""Problem specification, JSON configuration, built-in scenarios and artifact I/O.

Configuration documents are JSON with one section per component. Angles are
given in degrees (rates in deg/s) in documents and stored in radians.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import AlignmentSpec, Obstacle, OperationalLimits
from .model import DEG, NU, NX, AircraftParams
from .subproblem import Weights
from .transcription import DenseTrajectory, MeshSpec, TrajectoryIterate
from .xptr import SolveSettings

STATE_NAMES = (
    "p_N", "p_E", "p_D", "u", "v", "w", "phi", "theta", "psi", "p", "q", "r", "delta_T",
)
INPUT_NAMES = ("delta_A", "delta_E", "delta_R", "eta_T")


class SchemaError(ValueError):
    """Configuration document does not match the schema; ``path`` locates the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass(frozen=True)
class BoundaryConditions:
    p_i: tuple = (-50000.0, -30000.0, -5000.0)
    v_i: tuple = (100.0, 0.0, 0.0)
    att_i: tuple = (0.0, 0.0, 0.0)
    omega_i: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("p_i", "v_i", "att_i", "omega_i"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 3 or not all(math.isfinite(c) for c in v):
                raise ValueError(f"{name} must be 3 finite numbers")
            object.__setattr__(self, name, v)
        if not -self.p_i[2] > 0:
            raise ValueError("initial altitude -p_D must be positive")
        if not abs(self.att_i[1]) < np.pi / 2:
            raise ValueError("initial pitch must lie inside (-90, 90) deg")

    @property
    def x_i(self) -> np.ndarray:
        """First twelve state components at t_0 (throttle state is free)."""
        return np.concatenate([self.p_i, self.v_i, self.att_i, self.omega_i])


@dataclass(frozen=True)
class ProblemSpec:
    name: str = "custom"
    aircraft: AircraftParams = AircraftParams()
    limits: OperationalLimits = OperationalLimits()
    alignment: AlignmentSpec = AlignmentSpec()
    obstacles: tuple = ()
    wind: tuple = (0.0, 0.0, 0.0)
    boundary: BoundaryConditions = BoundaryConditions()
    weights: Weights = Weights()
    mesh: MeshSpec = MeshSpec()
    settings: SolveSettings = SolveSettings()
    ctcs: bool = True

    def __post_init__(self):
        w = tuple(float(c) for c in self.wind)
        if len(w) != 3 or not all(math.isfinite(c) for c in w):
            raise ValueError("wind must be 3 finite numbers")
        object.__setattr__(self, "wind", w)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    @property
    def ctcs_bounds(self):
        inf = np.inf
        return self.limits.attitude_box if self.ctcs else (-inf, inf, -inf, inf)


# -- JSON (de)serialization ----------------------------------------------------

# fields stored in degrees (or deg/s) in documents
_ANGLE_FIELDS = {
    "aircraft": {"alpha0"},
    "limits": {
        "phi_min", "phi_max", "theta_min", "theta_max", "omega_min", "omega_max",
        "alpha_min", "alpha_max", "u_min", "u_max", "thr_min", "thr_max",
        "thr_rate_min", "thr_rate_max",
    },
    "alignment": {"lat_min", "lat_max", "ver_min", "ver_max"},
    "boundary": {"att_i", "omega_i"},
}
_SECTIONS = {
    "aircraft": AircraftParams,
    "limits": OperationalLimits,
    "alignment": AlignmentSpec,
    "boundary": BoundaryConditions,
    "weights": Weights,
    "mesh": MeshSpec,
    "settings": SolveSettings,
}


def _public_fields(cls):
    return {f.name: f for f in dataclasses.fields(cls) if not f.name.startswith("_")}


def _convert(value, default, path, angle):
    scale = DEG if angle else 1.0
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise SchemaError(path, f"expected a list of {len(default)} numbers")
        return tuple(_convert(v, default[i], f"{path}[{i}]", angle) for i, v in enumerate(value))
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(path, "expected true/false")
        return value
    if isinstance(default, enum.Enum):
        try:
            return type(default)(value)
        except ValueError:
            raise SchemaError(path, f"expected one of {[m.value for m in type(default)]}") from None
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(path, "expected an integer")
        return value
    if isinstance(default, float) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, "expected a number")
        return float(value) * scale
    if isinstance(default, str):
        if not isinstance(value, str):
            raise SchemaError(path, "expected a string")
        return value
    raise SchemaError(path, "unsupported field")


def _section(cls, doc, path, angles):
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    fields = _public_fields(cls)
    defaults = cls()
    kwargs = {}
    for key, value in doc.items():
        if key not in fields:
            raise SchemaError(f"{path}.{key}", "unknown field")
        default = getattr(defaults, key)
        if default is None and fields[key].type in ("int | None", "Optional[int]"):
            kwargs[key] = value if value is None else _convert(value, 0, f"{path}.{key}", False)
            continue
        kwargs[key] = _convert(value, default, f"{path}.{key}", key in angles)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from None


def _obstacle(doc, path) -> Obstacle:
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    name = doc.get("name", "")
    try:
        if "cylinder" in doc:
            c = doc["cylinder"]
            return Obstacle.cylinder(float(c["north"]), float(c["east"]), float(c["radius"]), name)
        return Obstacle(np.array(doc["H"], dtype=float), np.array(doc["r"], dtype=float), name)
    except KeyError as exc:
        raise SchemaError(path, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from None


def load_spec(document) -> ProblemSpec:
    """Build a ``ProblemSpec`` from a JSON string, a parsed dict, or a file path."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        try:
            document = Path(document).read_text()
        except OSError as exc:
            raise SchemaError("", f"cannot read {document}: {exc.strerror}") from None
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise SchemaError("", "expected a JSON object")

    kwargs = {}
    for key, value in document.items():
        if key in _SECTIONS:
            kwargs[key] = _section(_SECTIONS[key], value, key, _ANGLE_FIELDS.get(key, set()))
        elif key == "obstacles":
            if not isinstance(value, list):
                raise SchemaError(key, "expected a list")
            kwargs[key] = tuple(_obstacle(o, f"obstacles[{i}]") for i, o in enumerate(value))
        elif key == "wind":
            kwargs[key] = _convert(value, (0.0, 0.0, 0.0), key, False)
        elif key == "ctcs":
            kwargs[key] = _convert(value, True, key, False)
        elif key == "name":
            kwargs[key] = _convert(value, "", key, False)
        else:
            raise SchemaError(key, "unknown field")
    try:
        return ProblemSpec(**kwargs)
    except ValueError as exc:
        raise SchemaError("", str(exc)) from None


def _export(obj, angles):
    out = {}
    for name in _public_fields(type(obj)):
        v = getattr(obj, name)
        scale = 1.0 / DEG if name in angles else 1.0
        if isinstance(v, enum.Enum):
            v = v.value
        elif isinstance(v, tuple):
            v = [float(c) * scale for c in v]
        elif isinstance(v, float):
            v = v * scale
        out[name] = v
    return out


def spec_to_dict(spec: ProblemSpec) -> dict:
    doc = {"name": spec.name}
    for key in _SECTIONS:
        doc[key] = _export(getattr(spec, key), _ANGLE_FIELDS.get(key, set()))
    doc["obstacles"] = [{"H": o.H.tolist(), "r": o.r.tolist(), "name": o.name} for o in spec.obstacles]
    doc["wind"] = list(spec.wind)
    doc["ctcs"] = spec.ctcs
    return doc


def dump_spec(spec: ProblemSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


# -- built-in scenarios ----------------------------------------------------------

def _bc(p_km, att_deg=(0.0, 0.0, 0.0)):
    return BoundaryConditions(
        p_i=tuple(1000.0 * c for c in p_km),
        v_i=(100.0, 0.0, 0.0),
        att_i=tuple(c * DEG for c in att_deg),
    )


def _builtins():
    return {
        "A": ProblemSpec(name="A", boundary=_bc((-50, -30, -5))),
        "B": ProblemSpec(name="B", boundary=_bc((-10, 30, -5), (0, 0, -90))),
        "C": ProblemSpec(name="C", boundary=_bc((30, -10, -5), (0, 0, 90))),
        "ctcs_demo": ProblemSpec(name="ctcs_demo", boundary=_bc((-54, -34, -4.7), (-14, 0, -50))),
        "obstacle_demo": ProblemSpec(
            name="obstacle_demo",
            boundary=_bc((-50, -30, -5)),
            obstacles=(
                Obstacle.cylinder(-30000.0, -18000.0, 3000.0, "cyl1"),
                Obstacle.cylinder(-15000.0, -9000.0, 3000.0, "cyl2"),
            ),
        ),
        "crosswind_left": ProblemSpec(name="crosswind_left", boundary=_bc((-50, 0, -5)), wind=(0.0, 5.0, 0.0)),
        "crosswind_right": ProblemSpec(name="crosswind_right", boundary=_bc((-50, 0, -5)), wind=(0.0, -5.0, 0.0)),
    }


BUILTIN_NAMES = tuple(_builtins())


class UnknownScenarioError(KeyError):
    pass


def builtin_scenario(name: str) -> ProblemSpec:
    table = _builtins()
    if name not in table:
        raise UnknownScenarioError(f"unknown scenario {name!r}; available: {', '.join(table)}")
    return table[name]


# -- artifacts ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _write_table(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(float(c)) for c in r])


def _read_table(path: Path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(c) for c in row] for row in r], dtype=float)
    return header, data.reshape(-1, len(header))


@dataclass
class TrajectoryArtifact:
    iterate: TrajectoryIterate
    dense: DenseTrajectory | None = None
    audit: dict = field(default_factory=dict)

    def node_rows(self):
        it = self.iterate
        t = it.times
        s = np.append(it.s, np.nan)
        return np.column_stack([np.arange(it.n + 1), t, it.x, it.u, s])


NODE_HEADER = ["k", "t"] + list(STATE_NAMES) + list(INPUT_NAMES) + ["s"]
DENSE_HEADER = ["interval", "t"] + list(STATE_NAMES) + list(INPUT_NAMES)


def save_artifact(report, artifact: TrajectoryArtifact, path, spec: ProblemSpec | None = None) -> Path:
    """Write node/dense tables, the run log, plot series and the resolved spec to ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_table(out / "nodes.csv", NODE_HEADER, artifact.node_rows())
        if artifact.dense is not None:
            d = artifact.dense
            _write_table(out / "dense.csv", DENSE_HEADER, np.column_stack([d.interval, d.t, d.x, d.u]))
            plots = out / "plots"
            plots.mkdir(exist_ok=True)
            x = d.x
            _write_table(plots / "ground_track.csv", ["p_E", "p_N"], x[:, [1, 0]])
            _write_table(plots / "altitude.csv", ["t", "p_N", "altitude"], np.column_stack([d.t, x[:, 0], -x[:, 2]]))
            _write_table(plots / "euler_deg.csv", ["t", "phi", "theta", "psi"], np.column_stack([d.t, x[:, 6:9] / DEG]))
            _write_table(plots / "rates_deg_s.csv", ["t", "p", "q", "r"], np.column_stack([d.t, x[:, 9:12] / DEG]))
            _write_table(
                plots / "inputs_deg.csv", ["t", *INPUT_NAMES, "delta_T"],
                np.column_stack([d.t, d.u / DEG, x[:, 12] / DEG]),
            )
        log = {"audit": artifact.audit}
        if report is not None:
            log.update(report.to_dict())
        (out / "run_log.json").write_text(json.dumps(log, indent=2, default=_json_default))
        if spec is not None:
            (out / "spec.json").write_text(dump_spec(spec))
    except OSError as exc:
        raise OSError(f"cannot write artifact to {out}: {exc.strerror}") from exc
    return out


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(type(o).__name__)


class ArtifactError(ValueError):
    pass


def load_artifact(path) -> tuple[TrajectoryArtifact, ProblemSpec | None]:
    """Reload the node table (and resolved spec if present) of a saved artifact."""
    d = Path(path)
    nodes = d / "nodes.csv"
    if not nodes.is_file():
        raise ArtifactError(f"{nodes}: missing node table")
    try:
        header, data = _read_table(nodes)
    except (ValueError, StopIteration) as exc:
        raise ArtifactError(f"{nodes}: corrupt node table ({exc})") from None
    if header != NODE_HEADER or data.shape[0] < 2:
        raise ArtifactError(f"{nodes}: unexpected header or too few rows")
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ArtifactError(f"{nodes}: node indices out of order")
    x = data[:, 2 : 2 + NX]
    u = data[:, 2 + NX : 2 + NX + NU]
    s = data[:-1, -1]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u)) and np.all(np.isfinite(s))):
        raise ArtifactError(f"{nodes}: non-finite entries")
    try:
        it = TrajectoryIterate(x, u, s)
    except ValueError as exc:
        raise ArtifactError(f"{nodes}: {exc}") from None
    spec = load_spec(d / "spec.json") if (d / "spec.json").is_file() else None
    audit = {}
    if (d / "run_log.json").is_file():
        audit = json.loads((d / "run_log.json").read_text()).get("audit", {})
    return TrajectoryArtifact(it, None, audit), spec
