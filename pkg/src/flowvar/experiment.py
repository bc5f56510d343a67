"""Experiment configuration files.

An experiment file is a JSON object::

    {
      "network": "six_node.json",        # spec path (relative to this file) or inline object
      "arrivals": [dist | null, ...],    # one per queue; null where alpha_k = 0
      "services": [dist, ...],           # one per queue (unused by the zero-service oracle)
      "servers": [{"queues": [1, 2], "priority": [1, 2]}],   # optional policy override
      "horizon": 1000,
      "grid": {"start": 20, "stop": 1000, "step": 20},       # or an explicit list
      "replications": 20000,
      "seed": 1,
      "flows": ["5->4"]                  # flows to report
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from . import distributions
from .network import (
    FlowId, NetworkSpec, SpecFileError, ValidatedNetwork, load_spec, validate, _parse_servers,
)
from .simulation import ConfigError, SimConfig, uniform_grid


@dataclass(frozen=True)
class Experiment:
    net: ValidatedNetwork
    arrivals: tuple
    services: tuple
    config: SimConfig
    flows: tuple[FlowId, ...]


def data_path(name: str) -> Path:
    """Path of a bundled data file (network specs and experiments)."""
    return Path(str(resources.files("flowvar") / "data" / name))


def six_node_network() -> ValidatedNetwork:
    """The bundled six-queue example network."""
    return validate(load_spec(data_path("six_node.json")))


def _grid(value) -> tuple[float, ...]:
    if isinstance(value, dict):
        try:
            return uniform_grid(float(value["step"]), float(value["stop"]),
                                float(value["start"]) if "start" in value else None)
        except KeyError as exc:
            raise ConfigError(f"grid object missing {exc.args[0]!r}") from exc
    if isinstance(value, list):
        return tuple(float(t) for t in value)
    raise ConfigError("grid must be a list of times or {start, stop, step}")


def experiment_from_dict(doc: dict, base_dir: Path | None = None,
                         spec_path: str | Path | None = None, **overrides) -> Experiment:
    base_dir = base_dir or Path.cwd()
    if spec_path is not None:
        spec = load_spec(spec_path)
    elif isinstance(doc.get("network"), str):
        spec = load_spec(base_dir / doc["network"])
    elif isinstance(doc.get("network"), dict):
        spec = NetworkSpec.from_dict(doc["network"])
    else:
        raise ConfigError("experiment needs a 'network' (spec path or inline object)")
    if doc.get("servers") is not None:
        spec.servers = _parse_servers(doc["servers"])
    net = validate(spec)

    def dists(key, allow_null):
        raw = doc.get(key)
        if raw is None:
            return None
        if not isinstance(raw, list):
            raise ConfigError(f"{key!r} must be an array with one entry per queue")
        out = []
        for k, item in enumerate(raw, start=1):
            if item is None:
                if not allow_null:
                    raise ConfigError(f"{key}[{k}] must not be null")
                out.append(None)
                continue
            try:
                out.append(distributions.from_dict(item))
            except distributions.DistributionError as exc:
                raise ConfigError(f"{key}[{k}]: {exc}") from exc
        return tuple(out)

    arrivals = dists("arrivals", True)
    if arrivals is None:
        raise ConfigError("experiment needs 'arrivals'")
    services = dists("services", False)

    params = {
        "grid": _grid(doc.get("grid", [])),
        "replications": int(doc.get("replications", 1)),
        "seed": int(doc.get("seed", 0)),
        "horizon": doc.get("horizon"),
    }
    for key in ("max_events", "max_tour_len"):
        if key in doc:
            params[key] = int(doc[key])
    params.update({k: v for k, v in overrides.items() if v is not None})
    config = SimConfig(**params)

    flows = []
    for text in doc.get("flows", []):
        try:
            f = FlowId.parse(text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (1 <= f.i <= net.K and 1 <= f.j <= net.K):
            raise ConfigError(f"flow {f} is outside the {net.K}-queue network")
        flows.append(f)
    return Experiment(net=net, arrivals=arrivals, services=services or (), config=config,
                      flows=tuple(flows))


def load_experiment(path: str | Path, spec_path: str | Path | None = None,
                    **overrides) -> Experiment:
    """Read an experiment file; keyword overrides (seed, replications, force, ...) win."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return experiment_from_dict(doc, path.parent, spec_path, **overrides)
    except (ConfigError, SpecFileError) as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def with_config(exp: Experiment, **changes) -> Experiment:
    return replace(exp, config=replace(exp.config, **changes))
