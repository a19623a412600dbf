"""``shapeforge`` command line: batch geometry and learning jobs.

    shapeforge <command> --space <name> --config <file> [--out <dir>] [--seed <n>]

Commands: dist, geodesic, align, mean, regress. The config file is YAML
with the keys of :class:`JobConfig`; command-line flags override it.
Exit codes: 0 success, 2 invalid input or configuration, 3 solver warning
or failure (outputs are still written when available).
"""

import argparse
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .curves import DiscreteCurves, ElasticMetric
from .geometry import ConvergenceError, ConvergenceWarning, Euclidean, GeometryError, Hypersphere
from .io import (
    InputError,
    format_float,
    read_json_batch,
    read_point_file,
    sha256_file,
    write_csv_matrix,
    write_json,
    write_obj,
)
from .landmarks import Landmarks, kendall_space, project_to_preshape
from .learning import FrechetMeanConfig, GeodesicRegression, frechet_mean_with_info
from .surfaces import (
    DiscreteSurfaces,
    RelaxationParams,
    SurfaceMetricParams,
    TriangleMesh,
    VarifoldParams,
    path_energy,
    path_length,
    relaxed_geodesic_bvp,
)

log = logging.getLogger("shapeforge")

COMMANDS = ("dist", "geodesic", "align", "mean", "regress")
SPACES = ("landmarks", "kendall", "curves", "curve_shapes", "surfaces", "surface_shapes",
          "sphere", "euclidean")
DEFAULT_FRAMES = 6
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


class ConfigError(GeometryError):
    pass


@dataclass
class JobConfig:
    command: str
    space: str
    space_params: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    out: str = "shapeforge_out"
    seed: int = 0
    frames: int = DEFAULT_FRAMES
    x_new: list = field(default_factory=list)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {COMMANDS}")
        if self.space not in SPACES:
            raise ConfigError(f"unknown space {self.space!r}; choose from {SPACES}")
        if int(self.frames) < 2:
            raise ConfigError("frames must be at least 2")
        needed = {"dist": ("a", "b"), "geodesic": ("a", "b"), "align": ("a", "b"),
                  "mean": ("batch",), "regress": ("batch",)}[self.command]
        missing = [k for k in needed if not self.inputs.get(k)]
        if missing:
            raise ConfigError(f"command {self.command!r} needs inputs: {', '.join(missing)}")
        return self


# ---------------------------------------------------------------------------
# space adapters: file data <-> points, and the geometry used by commands


class SpaceAdapter:
    suffix = ".csv"
    is_quotient = False

    def __init__(self, params):
        self.params = dict(params)

    def _require(self, *keys):
        missing = [k for k in keys if k not in self.params]
        if missing:
            raise ConfigError(f"space {self.name!r} needs space_params: {', '.join(missing)}")
        return [self.params[k] for k in keys]

    def load(self, data):
        raise NotImplementedError

    def dump(self, point, path):
        write_csv_matrix(path, point)

    @property
    def metric(self):
        return self.space.metric

    def dist(self, a, b):
        return self.metric.dist(a, b)

    def frames(self, a, b, times):
        return self.metric.geodesic(a, end_point=b)(times)

    def align(self, a, b):
        return b

    def extra_scalars(self, frames):
        return {}


class VectorAdapter(SpaceAdapter):
    def load(self, data):
        data = np.asarray(data, dtype=float).ravel()
        if data.size != self.space.shape[0]:
            raise ConfigError(f"expected {self.space.shape[0]} coordinates, got {data.size}")
        if not self.space.belongs(data):
            raise GeometryError(f"point does not lie on the {self.name} (norm {np.linalg.norm(data):.17g})")
        return data

    def dump(self, point, path):
        write_csv_matrix(path, np.asarray(point)[None, :])


class EuclideanAdapter(VectorAdapter):
    name = "euclidean"

    def __init__(self, params):
        super().__init__(params)
        (dim,) = self._require("dim")
        self.space = Euclidean(int(dim))


class SphereAdapter(VectorAdapter):
    name = "sphere"

    def __init__(self, params):
        super().__init__(params)
        (dim,) = self._require("dim")
        self.space = Hypersphere(int(dim))


class LandmarksAdapter(SpaceAdapter):
    name = "landmarks"

    def __init__(self, params):
        super().__init__(params)
        k, d = self._require("k", "d")
        self.space = Landmarks(int(k), int(d))

    def load(self, data):
        data = np.asarray(data, dtype=float)
        if data.shape != self.space.shape:
            raise ConfigError(f"expected a {self.space.shape} configuration, got {data.shape}")
        return data


class KendallAdapter(LandmarksAdapter):
    name = "kendall"
    is_quotient = True

    def __init__(self, params):
        SpaceAdapter.__init__(self, params)
        k, d = self._require("k", "d")
        self.space = kendall_space(int(k), int(d))

    def load(self, data):
        return project_to_preshape(super().load(data))

    def align(self, a, b):
        return self.space.fiber_bundle.align(b, a)


class CurvesAdapter(SpaceAdapter):
    name = "curves"

    def __init__(self, params):
        super().__init__(params)
        k, d = self._require("k", "d")
        a = float(self.params.get("a", 1.0))
        b = float(self.params.get("b", 0.5))
        self.curves = DiscreteCurves(int(k), int(d))
        if (a, b) != (1.0, 0.5):
            self.curves.equip_with_metric(ElasticMetric(self.curves, a, b))
        self.space = self.curves

    def load(self, data):
        data = np.asarray(data, dtype=float)
        expected = (self.curves.k_sampling_points, self.curves.ambient_dim)
        if data.shape != expected:
            raise ConfigError(f"expected a {expected} curve, got {data.shape}")
        point = self.curves.strip(data)
        if not self.curves.belongs(point):
            raise GeometryError("curve has a zero-velocity segment")
        return point

    def dump(self, point, path):
        write_csv_matrix(path, self.curves.full(point))

    def frames(self, a, b, times):
        metric = self.curves.metric
        if type(metric) is ElasticMetric:
            path = metric.discrete_geodesic(a, b, n_times=len(times))
            return path
        return metric.geodesic(a, end_point=b)(times)


class CurveShapesAdapter(CurvesAdapter):
    name = "curve_shapes"
    is_quotient = True

    def __init__(self, params):
        super().__init__(params)
        if type(self.curves.metric) is ElasticMetric:
            raise ConfigError("curve_shapes supports the SRV metric (a=1, b=0.5) only")
        groups = self.params.get("groups", ["rotations", "reparametrizations"])
        if isinstance(groups, str):
            groups = [groups]
        self.curves.equip_with_group_action(tuple(groups))
        self.curves.equip_with_quotient()
        self.space = self.curves.quotient

    def align(self, a, b):
        return self.space.fiber_bundle.align(b, a)

    def frames(self, a, b, times):
        return self.space.metric.geodesic(a, end_point=b)(times)


class SurfacesAdapter(SpaceAdapter):
    name = "surfaces"
    suffix = ".obj"

    def __init__(self, params):
        super().__init__(params)
        values = self.params.get("metric", [1, 1, 1, 1, 1, 1])
        if isinstance(values, dict):
            self.metric_params = SurfaceMetricParams(**{k: float(v) for k, v in values.items()})
        else:
            self.metric_params = SurfaceMetricParams.from_sequence(values)
        self.n_times = int(self.params.get("n_times", 10))
        self.faces = None
        self.space = None

    def load(self, data):
        if not isinstance(data, TriangleMesh):
            raise ConfigError("surface inputs must be OBJ meshes")
        if self.faces is None:
            self.faces = data.faces
            self.space = DiscreteSurfaces(data.faces, data.n_vertices, self.metric_params)
            self.space.metric.n_times = self.n_times
        elif not np.array_equal(self.faces, data.faces):
            raise GeometryError("mismatched connectivity: all meshes must share the face array")
        return np.array(data.vertices)

    def dump(self, point, path):
        write_obj(path, point, self.faces)

    def frames(self, a, b, times):
        result = self.space.metric.geodesic_bvp(a, b)
        self._last_path = result.path
        out = _resample_path(result.path, times)
        out[0], out[-1] = a, b
        return out

    def extra_scalars(self, frames):
        path = getattr(self, "_last_path", None)
        if path is None:
            return {}
        return {"path_energy": path_energy(self.metric_params, path, self.faces)}

    def dist(self, a, b):
        if np.array_equal(a, b):
            return 0.0
        result = self.space.metric.geodesic_bvp(a, b)
        self._last_path = result.path
        return path_length(self.metric_params, result.path, self.faces)


class SurfaceShapesAdapter(SurfacesAdapter):
    """Unparametrized surfaces: the second mesh may have any connectivity and
    is matched through the varifold-relaxed geodesic."""

    name = "surface_shapes"
    is_quotient = True

    def __init__(self, params):
        super().__init__(params)
        width = self.params.get("varifold_width")
        self.varifold = VarifoldParams(
            None if width is None else float(width),
            self.params.get("normal_kernel", "oriented_gaussian"),
            float(self.params.get("normal_width", 0.5)),
        )
        self.relaxation = RelaxationParams(float(self.params.get("lambda0", 0.0)),
                                           float(self.params.get("lambda1", 100.0)), self.n_times)
        self.target = None

    def load(self, data):
        if self.faces is None:
            return super().load(data)
        if not isinstance(data, TriangleMesh):
            raise ConfigError("surface inputs must be OBJ meshes")
        self.target = data
        return np.array(data.vertices)

    def _match(self, a):
        result = relaxed_geodesic_bvp(self.metric_params, self.varifold, self.relaxation, a,
                                      self.faces, self.target.vertices, self.target.faces)
        self._last_path = result.path
        self._discrepancy = result.discrepancy
        return result

    def dist(self, a, b):
        result = self._match(a)
        return path_length(self.metric_params, result.path, self.faces)

    def align(self, a, b):
        return self._match(a).path[-1]

    def frames(self, a, b, times):
        out = _resample_path(self._match(a).path, times)
        out[0] = a
        return out

    def extra_scalars(self, frames):
        scalars = super().extra_scalars(frames)
        if hasattr(self, "_discrepancy"):
            scalars["varifold_discrepancy"] = self._discrepancy
        return scalars


def _resample_path(path, times):
    """Piecewise-linear interpolation of a uniformly timed path of meshes."""
    grid = np.linspace(0.0, 1.0, len(path))
    idx = np.clip(np.searchsorted(grid, times, side="right") - 1, 0, len(path) - 2)
    s = ((np.asarray(times) - grid[idx]) / (grid[idx + 1] - grid[idx]))[:, None, None]
    return (1 - s) * path[idx] + s * path[idx + 1]


ADAPTERS = {cls.name: cls for cls in (EuclideanAdapter, SphereAdapter, LandmarksAdapter,
                                      KendallAdapter, CurvesAdapter, CurveShapesAdapter,
                                      SurfacesAdapter, SurfaceShapesAdapter)}


# ---------------------------------------------------------------------------
# running jobs


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f", line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{where}: invalid YAML") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent
    inputs = {k: str((base / v)) if v and not Path(v).is_absolute() else v
              for k, v in (doc.get("inputs") or {}).items()}
    doc["inputs"] = inputs
    return doc


def parse_inputs(config, adapter):
    """Read and validate the files named by the config."""
    if config.command in ("mean", "regress"):
        items = read_json_batch(config.inputs["batch"])
        points = [adapter.load(item["data"]) for item in items]
        xs = [item["x"] for item in items]
        if config.command == "regress" and any(x is None for x in xs):
            raise InputError("regression batch items need an 'x' value")
        return {"points": points, "x": xs, "names": [item["name"] for item in items]}
    a = adapter.load(read_point_file(config.inputs["a"]))
    b = adapter.load(read_point_file(config.inputs["b"]))
    return {"a": a, "b": b}


def _input_files(config):
    files = [config.inputs[k] for k in ("a", "b", "batch") if config.inputs.get(k)]
    if config.inputs.get("batch"):
        import json

        doc = json.loads(Path(config.inputs["batch"]).read_text())
        base = Path(config.inputs["batch"]).parent
        files += [str(base / item["data"]) for item in doc.get("items", [])
                  if isinstance(item, dict) and isinstance(item.get("data"), str)]
    return files


def run_command(config, argv=None):
    """Execute a validated job; returns the manifest dictionary."""
    config.validate()
    start = time.perf_counter()
    np.random.seed(int(config.seed))
    adapter = ADAPTERS[config.space](config.space_params)
    data = parse_inputs(config, adapter)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    scalars, artifacts = {}, []

    def emit(name, point):
        path = out / f"{name}{adapter.suffix}"
        adapter.dump(point, path)
        artifacts.append(path.name)

    caught = []
    with warnings.catch_warnings(record=True) as records:
        warnings.simplefilter("always", ConvergenceWarning)
        if config.command == "dist":
            scalars["distance"] = float(adapter.dist(data["a"], data["b"]))
            scalars.update(adapter.extra_scalars(None))
        elif config.command == "geodesic":
            times = np.linspace(0.0, 1.0, int(config.frames))
            frames = adapter.frames(data["a"], data["b"], times)
            for i, frame in enumerate(frames):
                emit(f"frame_{i:03d}", frame)
            scalars["n_frames"] = len(frames)
            scalars.update(adapter.extra_scalars(frames))
        elif config.command == "align":
            before = float(adapter.metric.dist(data["a"], data["b"])) if not adapter.is_quotient else None
            aligned = adapter.align(data["a"], data["b"])
            emit("aligned", aligned)
            if adapter.is_quotient and config.space != "surface_shapes":
                total = adapter.space.total_space.metric
                scalars["distance_before"] = float(total.dist(data["a"], data["b"]))
                scalars["distance_after"] = float(total.dist(data["a"], aligned))
            elif before is not None:
                scalars["distance_before"] = scalars["distance_after"] = before
            scalars.update(adapter.extra_scalars(None))
        elif config.command == "mean":
            result = frechet_mean_with_info(adapter.metric, np.stack(data["points"]),
                                            FrechetMeanConfig(**config.space_params.get("mean", {})))
            emit("mean", result.mean)
            scalars["gradient_norm"] = float(result.gradient_norm)
            scalars["n_iter"] = int(result.n_iter)
        elif config.command == "regress":
            options = dict(config.space_params.get("regression", {}))
            options.setdefault("seed", int(config.seed))
            model = GeodesicRegression(adapter.metric, **options).fit(
                np.array(data["x"]), np.stack(data["points"])).model_
            emit("intercept", model.intercept)
            emit("coef", model.coef)
            scalars["loss"] = float(model.loss)
            x_new = [float(x) for x in config.x_new] or [float(x) for x in data["x"]]
            preds = GeodesicRegression(adapter.metric, **options)
            preds.model_ = model
            for i, point in enumerate(preds.predict(x_new)):
                emit(f"prediction_{i:03d}", point)
            scalars["x_new"] = x_new
        caught = [str(w.message) for w in records if issubclass(w.category, ConvergenceWarning)]
    manifest = {
        "command": list(argv) if argv is not None else [config.command, "--space", config.space],
        "job": {"command": config.command, "space": config.space, "seed": int(config.seed),
                "frames": int(config.frames), "space_params": config.space_params},
        "inputs": {str(p): sha256_file(p) for p in _input_files(config)},
        "scalars": _json_scalars(scalars),
        "artifacts": artifacts,
        "timings": {"total_seconds": time.perf_counter() - start},
        "version": __version__,
        "status": "warning" if caught else "ok",
        "warnings": caught,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _json_scalars(scalars):
    """Floats as 17-significant-digit strings parsed back, so JSON keeps them exactly."""
    out = {}
    for key, value in scalars.items():
        if isinstance(value, (list, tuple)):
            out[key] = [float(format_float(v)) for v in value]
        elif isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            out[key] = int(value)
        else:
            out[key] = float(format_float(value))
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="shapeforge", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--space", choices=SPACES)
    parser.add_argument("--config", help="YAML job file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--a", dest="input_a", help="first input file (CSV or OBJ)")
    parser.add_argument("--b", dest="input_b", help="second input file (CSV or OBJ)")
    parser.add_argument("--batch", help="JSON batch file for mean/regress")
    parser.add_argument("--frames", type=int, help=f"geodesic frames (default {DEFAULT_FRAMES})")
    parser.add_argument("--x-new", type=float, nargs="+", help="regression prediction inputs")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="space parameter override (YAML value), repeatable")
    return parser


def config_from_args(args):
    doc = load_config(args.config) if args.config else {}
    params = dict(doc.get("space_params") or {})
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = yaml.safe_load(value)
    inputs = dict(doc.get("inputs") or {})
    for key, value in (("a", args.input_a), ("b", args.input_b), ("batch", args.batch)):
        if value:
            inputs[key] = value
    space = args.space or doc.get("space")
    if space is None:
        raise ConfigError("no space given (use --space or the config 'space' key)")
    return JobConfig(
        command=args.command,
        space=space,
        space_params=params,
        inputs=inputs,
        out=args.out or doc.get("out", "shapeforge_out"),
        seed=args.seed if args.seed is not None else int(doc.get("seed", 0)),
        frames=args.frames if args.frames is not None else int(doc.get("frames", DEFAULT_FRAMES)),
        x_new=args.x_new if args.x_new is not None else list(doc.get("x_new") or []),
    )


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=os.environ.get("SHAPEFORGE_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        manifest = run_command(config, ["shapeforge"] + argv)
    except (ConvergenceError,) as err:
        log.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (GeometryError, ValueError, LookupError, OSError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    for message in manifest["warnings"]:
        print(f"warning: {message}", file=sys.stderr)
    print(Path(config.out) / "manifest.json")
    return EXIT_SOLVER if manifest["warnings"] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
