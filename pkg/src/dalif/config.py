"""Strict JSON run configuration.

A config document has the sections ``network``, ``train``, ``data``,
``energy``, ``grad_check`` and ``output_dir``.  Every key is optional and
falls back to :data:`DEFAULTS`; unknown keys are rejected with the dotted
path of the offender.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from . import data as dp
from .network import Network, build_network
from .neuron import NeuronConfig
from .train import Dataset, TrainConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "network": {
        "hidden": [
            {"kind": "conv", "out": 16, "k": 3, "stride": 1, "padding": 1},
            {"kind": "conv", "out": 32, "k": 3, "stride": 2, "padding": 1},
        ],
        "neuron_model": "dalif",
        "decay_activation": "tanh",
        "detach_reset": False,
        "v_th": 1.0,
        "v_reset": 0.0,
        "tau_m": 2.0,
        "surrogate_a": 1.0,
        "rho_alpha": 1.0,
        "rho_beta": 1.0,
    },
    "train": {
        "lr": 0.1,
        "momentum": 0.9,
        "epochs": 10,
        "batch_size": 16,
        "seed": 0,
        "timesteps": 8,
        "ablation_mode": "both",
        "lr_schedule": "constant",
        "seeds": [0, 1, 2, 3, 4],
    },
    "data": {
        "kind": "synth",
        "n_train": 1024,
        "n_test": 1024,
        "noise": 0.1,
        "seed": 1000,
    },
    "energy": {"e_mac": None, "e_ac": None},
    "grad_check": {"epsilon": 1e-5, "samples": 2, "timesteps": 4},
    "output_dir": "runs/default",
}

# allowed keys (and defaults) of the data section by kind
DATA_KEYS = {
    "synth": {"n_train": 1024, "n_test": 1024, "noise": 0.1, "seed": 1000},
    "idx": {"train_images": None, "train_labels": None, "test_images": None,
            "test_labels": None, "num_classes": 10, "limit": None},
    "events": {"train": [], "test": [], "duration_us": None, "num_classes": None},
}

LAYER_KEYS = {"kind", "out", "k", "stride", "padding"}


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(defaults[key], dict) and key != "data":
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{where}' must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _merge_data(user: dict) -> dict:
    if not isinstance(user, dict):
        raise ConfigError("config key 'data' must be an object")
    kind = user.get("kind", "synth")
    if kind not in DATA_KEYS:
        raise ConfigError(f"config key 'data.kind' must be one of {sorted(DATA_KEYS)}")
    rest = {k: v for k, v in user.items() if k != "kind"}
    merged = _merge(DATA_KEYS[kind], rest, "data")
    merged["kind"] = kind
    return merged


def parse_config(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    user = dict(doc)
    data = user.pop("data", {})
    cfg = _merge(DEFAULTS, user, "")
    cfg["data"] = _merge_data(data)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"config key 'schema_version' must be {SCHEMA_VERSION}")
    for i, layer in enumerate(cfg["network"]["hidden"]):
        extra = set(layer) - LAYER_KEYS
        if extra:
            raise ConfigError(f"unknown config key 'network.hidden[{i}].{sorted(extra)[0]}'")
        if layer.get("kind") not in ("conv", "dense") or "out" not in layer:
            raise ConfigError(f"config key 'network.hidden[{i}]' needs kind conv|dense and out")
    # validate eagerly so errors surface as config errors
    try:
        neuron_config(cfg)
        train_config(cfg)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    return cfg


def set_dotted(doc: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override '{dotted}': '{p}' is not an object")
    node[parts[-1]] = value


def load_config(path, overrides=()) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    for key, value in overrides:
        set_dotted(doc, key, value)
    return parse_config(doc)


def neuron_config(cfg: dict) -> NeuronConfig:
    net = cfg["network"]
    return NeuronConfig(v_th=net["v_th"], v_reset=net["v_reset"], tau_m=net["tau_m"],
                        surrogate_a=net["surrogate_a"], detach_reset=net["detach_reset"],
                        decay_activation=net["decay_activation"])


def train_config(cfg: dict) -> TrainConfig:
    t = {k: v for k, v in cfg["train"].items() if k != "seeds"}
    return TrainConfig(**t)


def load_dataset(cfg: dict, seed_offset: int = 0) -> tuple[Dataset, tuple, int]:
    """Returns ``(dataset, input_shape, num_classes)``."""
    d = cfg["data"]
    T = cfg["train"]["timesteps"]
    if d["kind"] == "synth":
        seed = d["seed"] + seed_offset
        ds = Dataset(dp.synth_task(seed, d["n_train"], T, d["noise"]),
                     dp.synth_task(seed + 1_000_000, d["n_test"], T, d["noise"]))
        return ds, (1, dp.SYNTH_SIZE, dp.SYNTH_SIZE), 2
    if d["kind"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not d[key]:
                raise ConfigError(f"config key 'data.{key}' is required for idx data")

        def split(images, labels):
            rows = dp.load_idx(images, labels)[: d["limit"]]
            return [dp.Sample(dp.encode_static(img, T), lab) for img, lab in rows]

        train = split(d["train_images"], d["train_labels"])
        test = split(d["test_images"], d["test_labels"])
        return Dataset(train, test), train[0].frames.shape[1:], d["num_classes"]
    # events: lists of {"path": ..., "label": ...}
    if not d["duration_us"] or not d["num_classes"]:
        raise ConfigError("config keys 'data.duration_us' and 'data.num_classes' are required")

    def split(entries):
        out = []
        for i, entry in enumerate(entries):
            if set(entry) != {"path", "label"}:
                raise ConfigError(f"data entry {i} must have exactly 'path' and 'label'")
            f = dp.load_event_file(entry["path"])
            out.append(dp.Sample(dp.bin_events(f.events, T, f.width, f.height, d["duration_us"]),
                                 int(entry["label"])))
        return out

    train, test = split(d["train"]), split(d["test"])
    if not train:
        raise ConfigError("config key 'data.train' lists no event files")
    return Dataset(train, test), train[0].frames.shape[1:], d["num_classes"]


def build_from_config(cfg: dict, input_shape, num_classes: int, seed: int | None = None,
                      T: int | None = None) -> Network:
    net = cfg["network"]
    return build_network(
        input_shape, net["hidden"], num_classes,
        seed=cfg["train"]["seed"] if seed is None else seed,
        T=cfg["train"]["timesteps"] if T is None else T,
        neuron=neuron_config(cfg), neuron_model=net["neuron_model"],
        rho_alpha=net["rho_alpha"], rho_beta=net["rho_beta"],
    )


def save_snapshot(path, net: Network, cfg: dict) -> None:
    arrays = {f"layer{n}_weight": l.weight for n, l in enumerate(net.layers)}
    arrays["readout"] = net.readout
    arrays["rho_alpha"] = np.array([l.decays.rho_alpha for l in net.layers])
    arrays["rho_beta"] = np.array([l.decays.rho_beta for l in net.layers])
    arrays["neuron_model"] = np.array([l.neuron_model for l in net.layers])
    arrays["config"] = np.array(json.dumps(cfg, sort_keys=True))
    arrays["input_shape"] = np.array(net.input_shape)
    np.savez(path, **arrays)


def load_snapshot(path) -> tuple[Network, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"snapshot not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        cfg = json.loads(str(z["config"]))
        net = build_from_config(cfg, tuple(int(s) for s in z["input_shape"]),
                                z["readout"].shape[0])
        for n, layer in enumerate(net.layers):
            layer.weight = z[f"layer{n}_weight"].copy()
            layer.decays.rho_alpha = float(z["rho_alpha"][n])
            layer.decays.rho_beta = float(z["rho_beta"][n])
            layer.neuron_model = str(z["neuron_model"][n])
        net.readout = z["readout"].copy()
    return net, cfg
