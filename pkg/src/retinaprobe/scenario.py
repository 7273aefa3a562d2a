"""Declarative sweep scenarios: schema, presets, validation and runner.

A scenario is a YAML mapping. Missing fields take the defaults in
:data:`DEFAULTS`; presets are partial scenarios layered on top of them.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .mc_oracle import histogram_tv, mc_fisher, sample_network
from .metrology import MetrologyConfig, SweepRow, fisher_scalar, volume_sweep
from .photon_stats import LossChannel, apply_loss, make_state
from .retina_net import BipolarLayer, NetworkSpec, RodParams, network_output

__all__ = [
    "DEFAULTS",
    "PRESETS",
    "SWEEPABLE",
    "ScenarioError",
    "Scenario",
    "ResultTable",
    "load_scenario",
    "preset",
    "list_presets",
    "validate",
    "resolve",
    "run",
    "run_oracle",
]

CSV_COLUMNS = (
    "state",
    "sweep_value",
    "metric_kind",
    "value",
    "fisher_cond",
    "mass_defect",
    "fd_plateau_ok",
    "status",
)

DEFAULTS: dict[str, Any] = {
    "name": "custom",
    "figure": None,
    "light": {"kinds": ["fock", "coherent", "thermal"], "mean_photons": 1},
    "loss": None,
    "rods": {"count": 1, "eta": 0.4, "sigma_D": 0.15, "sigma_A": 0.5, "A0_bar": 0.7},
    "network": {
        "weights": [{"ratio": 1.0}],
        "ganglion_threshold": 0.1,
        "bipolar": None,
        "correlated_absorption": False,
        "tied": False,
    },
    "sweep": {"parameter": "network.w", "start": 0.05, "stop": 1.0, "points": 40, "w": 0.5},
    "metrology": {
        "confidence_level": 0.99,
        "fisher_domain": "full",
        "volume_convention": "k_scaled",
        "delta_rel": 1e-3,
    },
    "numerics": {"grid_step": 0.002, "eps_trunc": 1e-12},
    "output": {"format": "csv", "path": None},
}

_LOSS_DEFAULTS = {"u": 0.5, "mode": "exact"}
_BIPOLAR_DEFAULTS = {"groups": None, "threshold": 0.0, "rod_weights": None}

SWEEPABLE = ("network.w", "rods.eta", "light.mean_photons", "loss.u")


def _w(ratio):
    return {"ratio": ratio}


# name -> (figure, provenance, overrides)
PRESETS: dict[str, tuple[str, str, dict]] = {
    "fig4a": (
        "Fig. 4(a)",
        "single rod, eta = 0.4, n = 1; CRLB vs w",
        {"light": {"mean_photons": 1}},
    ),
    "fig4b": (
        "Fig. 4(b)",
        "single rod, eta = 0.4, n = 5; CRLB vs w",
        {"light": {"mean_photons": 5}},
    ),
    "fig5": (
        "Fig. 5",
        "two rods, eta = 0.4, n = 1; ray w2 = 0.5 w1 through the w-plane",
        {"light": {"mean_photons": 1}, "rods": {"count": 2}, "network": {"weights": [_w(1.0), _w(0.5)]}},
    ),
    "fig6": (
        "Fig. 6",
        "two rods, eta = 0.4, n = 5; ray w2 = 0.5 w1 through the w-plane",
        {"light": {"mean_photons": 5}, "rods": {"count": 2}, "network": {"weights": [_w(1.0), _w(0.5)]}},
    ),
    "fig7a": (
        "Fig. 7(a)",
        "two rods, w2 = 0.7 w1, eta = 0.4, n = 1",
        {"light": {"mean_photons": 1}, "rods": {"count": 2}, "network": {"weights": [_w(1.0), _w(0.7)]}},
    ),
    "fig7b": (
        "Fig. 7(b)",
        "two rods, w2 = 0.7 w1, eta = 0.4, n = 5",
        {"light": {"mean_photons": 5}, "rods": {"count": 2}, "network": {"weights": [_w(1.0), _w(0.7)]}},
    ),
    "fig8": (
        "Fig. 8",
        "three rods, w2 = 0.5 w1, w3 = 0.7 w1, eta = 0.4, n = 1",
        {
            "light": {"mean_photons": 1},
            "rods": {"count": 3},
            "network": {"weights": [_w(1.0), _w(0.5), _w(0.7)]},
        },
    ),
    "fig10": (
        "Fig. 10",
        "three-layer network, 4 rods, 2 bipolar cells (threshold 0), w1 = w, w2 = 0.7, eta = 0.4, n = 5",
        {
            "light": {"mean_photons": 5},
            "rods": {"count": 4},
            "network": {
                "weights": [_w(1.0), 0.7],
                "bipolar": {"groups": [[0, 1], [2, 3]], "threshold": 0.0},
            },
        },
    ),
    "fig10_ratio": (
        "Fig. 10",
        "as fig10 with w2 read as a ratio, w2 = 0.7 w1",
        {
            "light": {"mean_photons": 5},
            "rods": {"count": 4},
            "network": {
                "weights": [_w(1.0), _w(0.7)],
                "bipolar": {"groups": [[0, 1], [2, 3]], "threshold": 0.0},
            },
        },
    ),
    "fig11": (
        "Fig. 11",
        "single rod (equal weights), eta = 0.4, n = 10, loss u = 0.5 (binomial thinning)",
        {"light": {"mean_photons": 10}, "loss": {"u": 0.5, "mode": "exact"}},
    ),
    "fig11_poisson": (
        "Fig. 11",
        "as fig11 with a Fock input mapped to a Poisson law after the loss",
        {"light": {"mean_photons": 10}, "loss": {"u": 0.5, "mode": "paper_poisson"}},
    ),
    "fig12": (
        "Fig. 12",
        "two rods, w2 = 0.8 w1, eta = 0.4, n = 10, loss u = 0.5 (binomial thinning)",
        {
            "light": {"mean_photons": 10},
            "loss": {"u": 0.5, "mode": "exact"},
            "rods": {"count": 2},
            "network": {"weights": [_w(1.0), _w(0.8)]},
        },
    ),
    "fig12_poisson": (
        "Fig. 12",
        "as fig12 with a Fock input mapped to a Poisson law after the loss",
        {
            "light": {"mean_photons": 10},
            "loss": {"u": 0.5, "mode": "paper_poisson"},
            "rods": {"count": 2},
            "network": {"weights": [_w(1.0), _w(0.8)]},
        },
    ),
}


class ScenarioError(ValueError):
    """Configuration problem; ``errors`` lists messages with field paths."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def list_presets() -> list[tuple[str, str, str]]:
    return [(name, fig, desc) for name, (fig, desc, _) in PRESETS.items()]


def preset(name: str) -> dict:
    """Raw scenario mapping of a preset."""
    if name not in PRESETS:
        raise ScenarioError([f"preset: unknown preset {name!r}"])
    fig, desc, over = PRESETS[name]
    return _merge({"name": name, "figure": f"{fig}: {desc}"}, over)


def load_scenario(path: str | Path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ScenarioError([f"{path}: scenario must be a mapping"])
    return raw


def _check_keys(raw: dict, allowed: dict, path: str, errors: list[str]):
    for key in raw:
        if key not in allowed:
            errors.append(f"{path}{key}: unknown field")


def _number(cfg, key, path, errors, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False):
    v = cfg.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{path}{key}: expected a finite number, got {v!r}")
        return
    if v < lo or v > hi or (lo_open and v == lo) or (hi_open and v == hi):
        errors.append(f"{path}{key}: {v!r} out of range")


def _expand(raw: dict) -> dict:
    """Layer a scenario that names a ``preset`` over that preset."""
    base = _normalize(preset(raw["preset"]))
    return _merge(base, _normalize({k: v for k, v in raw.items() if k != "preset"}))


def _normalize(raw: dict) -> dict:
    """Accept ``light.kind`` as a synonym of ``light.kinds``."""
    light = raw.get("light")
    if isinstance(light, dict) and "kind" in light:
        light = dict(light)
        kind = light.pop("kind")
        if "kinds" not in light:
            light["kinds"] = kind
        raw = {**raw, "light": light}
    return raw


def validate(raw: dict) -> list[str]:
    """Schema and invariant errors of a raw scenario; empty when valid."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return ["<root>: scenario must be a mapping"]
    if "preset" in raw:
        if raw["preset"] not in PRESETS:
            return [f"preset: unknown preset {raw['preset']!r}"]
        raw = _expand(raw)
    raw = _normalize(raw)
    _check_keys(raw, DEFAULTS, "", errors)
    cfg = _merge(DEFAULTS, raw)
    if cfg["loss"] is not None:
        cfg["loss"] = _merge(_LOSS_DEFAULTS, cfg["loss"])
    for section in ("light", "rods", "network", "sweep", "metrology", "numerics", "output"):
        if not isinstance(cfg[section], dict):
            errors.append(f"{section}: expected a mapping")
            return errors
        _check_keys(raw.get(section) or {}, DEFAULTS[section], f"{section}.", errors)
    if isinstance(raw.get("loss"), dict):
        _check_keys(raw["loss"], _LOSS_DEFAULTS, "loss.", errors)

    light = cfg["light"]
    kinds = light.get("kinds")
    if isinstance(kinds, str):
        kinds = [kinds]
    if not kinds or not isinstance(kinds, list):
        errors.append("light.kinds: expected a non-empty list")
    else:
        for i, k in enumerate(kinds):
            if k not in ("fock", "coherent", "thermal"):
                errors.append(f"light.kinds[{i}]: unknown light state {k!r}")
    _number(light, "mean_photons", "light.", errors, lo=0)

    rods = cfg["rods"]
    if not isinstance(rods.get("count"), int) or rods["count"] < 1:
        errors.append("rods.count: expected a positive integer")
    _number(rods, "eta", "rods.", errors, 0, 1)
    _number(rods, "sigma_D", "rods.", errors, 0, lo_open=True)
    _number(rods, "sigma_A", "rods.", errors, 0)
    _number(rods, "A0_bar", "rods.", errors)

    net = cfg["network"]
    weights = net.get("weights")
    if not isinstance(weights, list) or not weights:
        errors.append("network.weights: expected a non-empty list")
        weights = []
    for i, w in enumerate(weights):
        p = f"network.weights[{i}]"
        if isinstance(w, dict):
            if set(w) != {"ratio"}:
                errors.append(f"{p}: expected {{ratio: r}} or a number")
            else:
                r = w["ratio"]
                if isinstance(r, bool) or not isinstance(r, (int, float)) or not 0 < r < math.inf:
                    errors.append(f"{p}.ratio: ratios must lie in (0, inf)")
        elif isinstance(w, bool) or not isinstance(w, (int, float)) or not (w >= 0 and math.isfinite(w)):
            errors.append(f"{p}: weights must be finite and non-negative")
    _number(net, "ganglion_threshold", "network.", errors)
    bip = net.get("bipolar")
    n_rods = rods.get("count") if isinstance(rods.get("count"), int) else None
    if bip is not None:
        if not isinstance(bip, dict):
            errors.append("network.bipolar: expected a mapping")
        else:
            _check_keys(bip, _BIPOLAR_DEFAULTS, "network.bipolar.", errors)
            groups = bip.get("groups")
            if not isinstance(groups, list) or not groups:
                errors.append("network.bipolar.groups: expected a list of rod index lists")
            else:
                flat = sorted(i for g in groups for i in (g if isinstance(g, list) else [None]) if isinstance(i, int))
                if n_rods is not None and flat != list(range(n_rods)):
                    errors.append("network.bipolar.groups: groups must partition the rods")
                if len(groups) != len(weights):
                    errors.append("network.weights: need one weight per bipolar cell")
            if "threshold" in bip:
                _number(bip, "threshold", "network.bipolar.", errors)
            rw = bip.get("rod_weights")
            if rw is not None and (not isinstance(rw, list) or len(rw) != n_rods):
                errors.append("network.bipolar.rod_weights: need one weight per rod")
    elif n_rods is not None and len(weights) != n_rods:
        errors.append("network.weights: need one weight per rod")
    if not isinstance(net.get("correlated_absorption"), bool):
        errors.append("network.correlated_absorption: expected true/false")
    if not isinstance(net.get("tied"), bool):
        errors.append("network.tied: expected true/false")

    sweep = cfg["sweep"]
    param = sweep.get("parameter")
    if isinstance(param, list):
        if len(param) != 1:
            errors.append("sweep.parameter: exactly one swept parameter is allowed")
        param = param[0] if len(param) == 1 else None
    if param is not None and param not in SWEEPABLE:
        errors.append(f"sweep.parameter: {param!r} is not sweepable; choose one of {', '.join(SWEEPABLE)}")
    if param == "loss.u" and cfg["loss"] is None:
        errors.append("sweep.parameter: loss.u needs a loss section")
    _number(sweep, "start", "sweep.", errors)
    _number(sweep, "stop", "sweep.", errors)
    if not isinstance(sweep.get("points"), int) or sweep["points"] < 1:
        errors.append("sweep.points: expected a positive integer")
    _number(sweep, "w", "sweep.", errors, 0, lo_open=True)
    if param == "network.w" and not any(isinstance(w, dict) for w in weights):
        errors.append("network.weights: sweeping network.w needs at least one {ratio: r} weight")

    met = cfg["metrology"]
    _number(met, "confidence_level", "metrology.", errors, 0, 1, True, True)
    if met.get("fisher_domain") not in ("full", "density_only"):
        errors.append("metrology.fisher_domain: expected full or density_only")
    if met.get("volume_convention") not in ("k_scaled", "paper_eq16"):
        errors.append("metrology.volume_convention: expected k_scaled or paper_eq16")
    _number(met, "delta_rel", "metrology.", errors, 0, 0.5, True, True)

    num = cfg["numerics"]
    _number(num, "grid_step", "numerics.", errors, 0, lo_open=True)
    _number(num, "eps_trunc", "numerics.", errors, 0, 1, True, True)

    if cfg["loss"] is not None:
        _number(cfg["loss"], "u", "loss.", errors, 0, 1)
        if cfg["loss"].get("mode") not in ("exact", "paper_poisson"):
            errors.append("loss.mode: expected exact or paper_poisson")
    if cfg["output"].get("format") not in ("csv", "json"):
        errors.append("output.format: expected csv or json")
    return errors


@dataclass(frozen=True)
class Scenario:
    """A validated scenario with every default filled in."""

    config: dict

    @property
    def name(self) -> str:
        return self.config["name"]

    def sweep_values(self) -> np.ndarray:
        s = self.config["sweep"]
        if s["points"] == 1:
            return np.array([float(s["start"])])
        return np.linspace(s["start"], s["stop"], s["points"])

    def metrology_config(self) -> MetrologyConfig:
        m = self.config["metrology"]
        return MetrologyConfig(
            confidence_level=m["confidence_level"],
            fisher_domain=m["fisher_domain"],
            volume_convention=m["volume_convention"],
            delta_rel=m["delta_rel"],
            base_step=self.config["numerics"]["grid_step"],
        )

    def _param(self, value: float) -> dict:
        cfg = copy.deepcopy(self.config)
        section, key = cfg["sweep"]["parameter"].split(".")
        if (section, key) != ("network", "w"):
            cfg[section][key] = value
        return cfg

    def network(self, value: float) -> NetworkSpec:
        cfg = self._param(value)
        r = cfg["rods"]
        rod = RodParams(r["sigma_D"], r["sigma_A"], r["A0_bar"], r["eta"])
        w1 = value if cfg["sweep"]["parameter"] == "network.w" else cfg["sweep"]["w"]
        net = cfg["network"]
        weights = [w1 * w["ratio"] if isinstance(w, dict) else float(w) for w in net["weights"]]
        bip = net["bipolar"]
        layer = None
        if bip is not None:
            bip = _merge(_BIPOLAR_DEFAULTS, bip)
            layer = BipolarLayer(
                tuple(map(tuple, bip["groups"])),
                float(bip["threshold"]),
                None if bip["rod_weights"] is None else tuple(bip["rod_weights"]),
            )
        return NetworkSpec(
            rods=(rod,) * r["count"],
            weights=tuple(weights),
            ganglion_threshold=float(net["ganglion_threshold"]),
            bipolar=layer,
            correlated_absorption=net["correlated_absorption"],
        )

    def states(self, value: float) -> dict:
        cfg = self._param(value)
        light = cfg["light"]
        kinds = light["kinds"] if isinstance(light["kinds"], list) else [light["kinds"]]
        eps = cfg["numerics"]["eps_trunc"]
        out = {}
        for kind in kinds:
            d = make_state(kind, light["mean_photons"], eps)
            if cfg["loss"] is not None:
                d = apply_loss(d, LossChannel(cfg["loss"]["u"]), cfg["loss"]["mode"], eps)
            out[kind] = d
        return out

    def points(self):
        for v in self.sweep_values():
            yield float(v), self.network(v), self.states(v)


def resolve(raw: dict) -> Scenario:
    """Validate ``raw`` (optionally naming a ``preset`` to start from) and
    fill in defaults. Raises :class:`ScenarioError`."""
    if isinstance(raw, dict) and "preset" in raw:
        raw = _expand(raw)
    raw = _normalize(raw)
    errors = validate(raw)
    if errors:
        raise ScenarioError(errors)
    cfg = _merge(DEFAULTS, raw)
    if cfg["loss"] is not None:
        cfg["loss"] = _merge(_LOSS_DEFAULTS, cfg["loss"])
    if isinstance(cfg["light"]["kinds"], str):
        cfg["light"]["kinds"] = [cfg["light"]["kinds"]]
    if isinstance(cfg["sweep"]["parameter"], list):
        cfg["sweep"]["parameter"] = cfg["sweep"]["parameter"][0]
    if cfg["network"]["bipolar"] is not None:
        cfg["network"]["bipolar"] = _merge(_BIPOLAR_DEFAULTS, cfg["network"]["bipolar"])
    return Scenario(cfg)


@dataclass
class ResultTable:
    scenario: Scenario
    rows: list[SweepRow]
    extra_header: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {"retinaprobe": __version__, "scenario": self.scenario.config, **self.extra_header}

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in yaml.safe_dump(self.header(), sort_keys=True).splitlines():
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.state,
                    repr(float(r.sweep_value)),
                    r.metric_kind,
                    repr(float(r.value)),
                    repr(float(r.fisher_cond)),
                    repr(float(r.mass_defect)),
                    str(bool(r.fd_plateau_ok)).lower(),
                    r.status,
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            return x

        rows = [{k: clean(v) for k, v in r.as_dict().items()} for r in self.rows]
        return json.dumps({"header": self.header(), "rows": rows}, indent=2, sort_keys=True)

    def series(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Plot-ready ``state -> (sweep values, metric values)``."""
        out: dict[str, list] = {}
        for r in self.rows:
            out.setdefault(r.state, []).append((r.sweep_value, r.value))
        return {k: tuple(np.array(c) for c in zip(*v)) for k, v in out.items()}


def run(scenario: Scenario | dict, jobs: int = 1) -> ResultTable:
    """Evaluate CRLB or ellipsoid volume at every sweep point and state."""
    if not isinstance(scenario, Scenario):
        scenario = resolve(scenario)
    tied = scenario.config["network"]["tied"]
    rows = volume_sweep(scenario.points(), scenario.metrology_config(), tied=tied, jobs=jobs)
    return ResultTable(scenario, rows)


ORACLE_COLUMNS = (
    "state",
    "sweep_value",
    "tv_distance",
    "atom_grid",
    "atom_mc",
    "atom_z",
    "fisher_grid",
    "fisher_mc",
    "fisher_mc_se",
    "ok",
)


def run_oracle(
    scenario: Scenario | dict,
    seed: int = 0,
    count: int = 10**7,
    fisher_count: int = 4 * 10**6,
    n_points: int = 3,
) -> list[dict]:
    """Monte-Carlo cross-checks at ``n_points`` sweep values.

    Compares the grid output law with a sampled histogram (TV distance,
    atom mass) and the tied-weight Fisher information with ``mc_fisher``.
    """
    if not isinstance(scenario, Scenario):
        scenario = resolve(scenario)
    values = scenario.sweep_values()
    picks = values[np.unique(np.linspace(0, values.size - 1, n_points).round().astype(int))]
    out = []
    for j, v in enumerate(picks):
        spec = scenario.network(v)
        w = np.asarray(spec.weights)
        tied_spec = spec.with_weights(np.full(w.size, w.max()))
        for k, (label, photons) in enumerate(scenario.states(v).items()):
            s = seed + 1000 * j + 10 * k
            law = network_output(spec, photons)
            batch = sample_network(spec, photons, count, s)
            tv = histogram_tv(batch, law)
            p = law.atom_mass
            se = math.sqrt(max(p * (1 - p), 1e-300) / count)
            z = (batch.zero_fraction - p) / se
            info = fisher_scalar(tied_spec, photons, scenario.metrology_config())
            est = mc_fisher(tied_spec, photons, None, 0.05 * w.max(), fisher_count, s + 1)
            ok = tv < 0.01 and abs(z) <= 4 and est.agrees_with(info)
            out.append(
                dict(
                    state=label,
                    sweep_value=float(v),
                    tv_distance=tv,
                    atom_grid=p,
                    atom_mc=batch.zero_fraction,
                    atom_z=z,
                    fisher_grid=info,
                    fisher_mc=est.value,
                    fisher_mc_se=est.stderr,
                    ok=bool(ok),
                )
            )
    return out
