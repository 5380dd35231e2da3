"""Problem configuration: JSON schema, validation, and object construction."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .statespace import StateSpace
from .plant import SaturatedLFTPlant, UncertaintyStructure, loop_transform, attach_filters
from .multipliers import (make_popov_multiplier, make_zames_falb_multiplier,
                          make_sector_multiplier, make_transformed_sector_multiplier)
from .factorization import (j_spectral_factorize, to_triangular,
                            proportional_sector_factor, make_uncertainty_iqc,
                            UncertaintyBlock)
from .synthesis import SynthesisOptions
from .simulate import Scenario, sinusoid, step_signal

__all__ = ["ProblemConfig", "ConfigError", "load_config", "CONFIG_SCHEMA",
           "STRATEGIES", "build_filters", "build_closed_loop"]


class ConfigError(ValueError):
    """Invalid problem configuration (schema or dimension violation)."""


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["plant", "alpha", "u_bar", "iqcs"],
    "properties": {
        "name": {"type": "string"},
        "plant": {
            "type": "object",
            "required": ["A", "B0", "B2", "C1", "D10", "D12"],
            "properties": {k: {"type": "array"} for k in
                           ("A", "B0", "B1", "B2", "C0", "D00", "D01", "D02",
                            "C1", "D10", "D11", "D12")},
        },
        "uncertainty": {
            "type": "object",
            "properties": {
                "scalar_blocks": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "full_blocks": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "bound": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "u_bar": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "iqcs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["popov", "zames_falb", "sector"]},
                    "eps": {"type": "number", "exclusiveMinimum": 0},
                    "h": {
                        "type": "object",
                        "properties": {"num": {"type": "array"}, "den": {"type": "array"}},
                    },
                },
            },
        },
        "synthesis": {
            "type": "object",
            "properties": {
                "scalings": {"enum": ["free", "anchored"]},
                "feedthrough": {"type": "boolean"},
                "q_max": {"type": ["number", "null"]},
                "q_min": {"type": "number"},
                "pole_region": {
                    "type": ["object", "null"],
                    "properties": {"rho": {"type": "number"}, "theta": {"type": "number"}},
                },
                "strategy": {"enum": ["popov", "zames_falb", "sector", "mixed", "antiwindup"]},
            },
        },
        "solver": {
            "type": "object",
            "properties": {
                "feas_tol": {"type": "number"},
                "gap": {"type": "number"},
                "solver": {"type": "string"},
            },
        },
        "scenarios": {"type": "array"},
        "sweep": {
            "type": "object",
            "properties": {
                "alphas": {"type": "array", "items": {"type": "number"}},
                "strategies": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}

# sweep strategy presets: IQC kinds, scaling mode, dead-zone feedthrough.
# Single-IQC designs anchor the scalar scalings (see decisions notes);
# the mixed design uses the fully convexified program with w-feedback.
STRATEGIES = {
    "popov": (("popov",), "anchored", False),
    "zames_falb": (("zames_falb",), "anchored", False),
    "sector": (("sector",), "anchored", False),
    "mixed": (("popov", "zames_falb", "sector"), "free", True),
}


def _mat(cfg_plant, key, rows, cols, path):
    raw = cfg_plant.get(key)
    if raw is None:
        return np.zeros((rows, cols))
    M = np.asarray(raw, dtype=float)
    M = np.atleast_2d(M)
    if M.size == 0:
        M = M.reshape(0, 0)
        if rows == 0 or cols == 0:
            return np.zeros((rows, cols))
    if M.shape != (rows, cols):
        raise ConfigError(f"plant.{key}: expected {rows}x{cols}, got {M.shape} ({path})")
    return M


@dataclass
class ProblemConfig:
    name: str
    plant: SaturatedLFTPlant
    iqcs: list
    synthesis: dict
    solver: dict
    scenarios: list
    sweep: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def alpha(self) -> float:
        return self.plant.alpha


def _tf_to_ss(num, den) -> StateSpace:
    """Controllable canonical realization of a strictly proper SISO transfer."""
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    if den[0] == 0:
        raise ConfigError("transfer function denominator has zero leading coefficient")
    num = num / den[0]
    den = den / den[0]
    n = den.size - 1
    if num.size > n:
        raise ConfigError("Zames-Falb filter must be strictly proper (deg num < deg den)")
    num = np.concatenate([np.zeros(n - num.size), num])
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = num.reshape(1, n)
    return StateSpace(A, B, C, np.zeros((1, 1)))


def load_config(path) -> ProblemConfig:
    """Load, schema-validate, and dimension-check a problem configuration."""
    import jsonschema

    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"config field {loc}: {exc.message}") from exc

    unc = raw.get("uncertainty", {})
    structure = UncertaintyStructure(
        scalar_blocks=tuple(unc.get("scalar_blocks", ())),
        full_blocks=tuple(unc.get("full_blocks", ())),
        bound=float(unc.get("bound", 1.0)),
    )
    p = raw["plant"]
    A = np.atleast_2d(np.asarray(p["A"], dtype=float))
    nx = A.shape[0]
    if A.shape != (nx, nx):
        raise ConfigError("plant.A: must be square")
    B0 = np.atleast_2d(np.asarray(p["B0"], dtype=float))
    if B0.shape[0] != nx:
        raise ConfigError(f"plant.B0: expected {nx} rows, got {B0.shape[0]}")
    nu = B0.shape[1]
    B2 = np.atleast_2d(np.asarray(p["B2"], dtype=float))
    if B2.shape[0] != nx:
        raise ConfigError(f"plant.B2: expected {nx} rows, got {B2.shape[0]}")
    nd = B2.shape[1]
    C1 = np.atleast_2d(np.asarray(p["C1"], dtype=float))
    if C1.shape[1] != nx:
        raise ConfigError(f"plant.C1: expected {nx} columns, got {C1.shape[1]}")
    ne = C1.shape[0]
    nq = structure.n_q
    try:
        plant = SaturatedLFTPlant(
            A=A, B0=B0,
            B1=_mat(p, "B1", nx, nq, path),
            B2=B2,
            C0=_mat(p, "C0", nq, nx, path),
            D00=_mat(p, "D00", nq, nu, path),
            D01=_mat(p, "D01", nq, nq, path),
            D02=_mat(p, "D02", nq, nd, path),
            C1=C1,
            D10=_mat(p, "D10", ne, nu, path),
            D11=_mat(p, "D11", ne, nq, path),
            D12=_mat(p, "D12", ne, nd, path),
            structure=structure,
            u_bar=np.asarray(raw["u_bar"], dtype=float),
            alpha=float(raw["alpha"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    iqcs = []
    for i, item in enumerate(raw["iqcs"]):
        entry = {"kind": item["kind"], "eps": float(item.get("eps", 0.01))}
        if "h" in item:
            entry["h"] = _tf_to_ss(item["h"].get("num", [0.0]), item["h"].get("den", [1.0]))
        iqcs.append(entry)

    synth = dict(raw.get("synthesis", {}))
    solver = {"feas_tol": 1e-7, "gap": 1e-9, "solver": "auto"}
    solver.update(raw.get("solver", {}))
    scenarios = raw.get("scenarios", [])
    sweep = dict(raw.get("sweep", {}))
    return ProblemConfig(raw.get("name", path.stem), plant, iqcs, synth,
                         solver, scenarios, sweep, raw)


def build_filters(cfg: ProblemConfig, alpha: float | None = None,
                  kinds: tuple | None = None):
    """Triangular IQC filters for the configured (or overridden) selection."""
    alpha = cfg.alpha if alpha is None else float(alpha)
    chosen = cfg.iqcs if kinds is None else [
        next((e for e in cfg.iqcs if e["kind"] == k), {"kind": k, "eps": 0.01})
        for k in kinds
    ]
    out = []
    for entry in chosen:
        kind, eps = entry["kind"], entry.get("eps", 0.01)
        if kind == "popov":
            out.append(to_triangular(j_spectral_factorize(
                make_popov_multiplier(alpha, eps, nu=cfg.plant.nu))))
        elif kind == "zames_falb":
            out.append(to_triangular(j_spectral_factorize(
                make_zames_falb_multiplier(alpha, eps, entry.get("h"), nu=cfg.plant.nu))))
        elif kind == "sector":
            if cfg.plant.nu != 1:
                raise ConfigError("the sector strategy factor is scalar-channel")
            out.append(proportional_sector_factor(alpha, eps))
        else:
            raise ConfigError(f"unknown IQC kind {kind!r}")
    return out


def build_closed_loop(cfg: ProblemConfig, alpha: float | None = None,
                      kinds: tuple | None = None):
    """Open interconnection (plant + filters) for synthesis."""
    plant = cfg.plant
    if alpha is not None and alpha != plant.alpha:
        plant = SaturatedLFTPlant(
            A=plant.A, B0=plant.B0, B1=plant.B1, B2=plant.B2,
            C0=plant.C0, D00=plant.D00, D01=plant.D01, D02=plant.D02,
            C1=plant.C1, D10=plant.D10, D11=plant.D11, D12=plant.D12,
            structure=plant.structure, u_bar=plant.u_bar, alpha=float(alpha))
    aug = loop_transform(plant)
    filters = build_filters(cfg, alpha=plant.alpha, kinds=kinds)
    unc = [make_uncertainty_iqc(UncertaintyBlock(kind, size), plant.structure.bound)
           for kind, size, _off in plant.structure.blocks()]
    return attach_filters(aug, filters, unc or None)


def synthesis_options(cfg: ProblemConfig, scalings=None, feedthrough=None) -> SynthesisOptions:
    s = cfg.synthesis
    pr = s.get("pole_region")
    region = (float(pr["rho"]), float(pr["theta"])) if pr else None
    return SynthesisOptions(
        scalings=scalings if scalings is not None else s.get("scalings", "free"),
        feedthrough=feedthrough if feedthrough is not None else s.get("feedthrough", True),
        q_max=s.get("q_max", 1e6),
        q_min=s.get("q_min", 1e-7),
        pole_region=region,
    )


def build_scenario(spec: dict, cfg: ProblemConfig, seed: int | None = None) -> Scenario:
    dist = None
    ds = spec.get("disturbance")
    if ds:
        if ds["type"] == "sinusoid":
            dist = sinusoid(ds.get("amplitude", 1.0), ds.get("frequency", 1.0),
                            ds.get("phase", 0.0), ds.get("t_on", 0.0),
                            ds.get("t_off", math.inf))
        elif ds["type"] == "step":
            dist = step_signal(ds.get("amplitude", 1.0), ds.get("t_on", 0.0),
                               ds.get("t_off", math.inf))
        else:
            raise ConfigError(f"unknown disturbance type {ds['type']!r}")
    delta = None
    dl = spec.get("delta")
    if dl and cfg.plant.nq:
        structure = cfg.plant.structure
        if dl["type"] == "sinusoid_scalar":
            mag = float(dl.get("magnitude", structure.bound))
            if mag > structure.bound:
                raise ConfigError("uncertainty magnitude exceeds the declared bound")
            freq = float(dl.get("frequency", 1.0))
            delta = lambda t: mag * np.sin(freq * t) * np.eye(cfg.plant.nq)
        elif dl["type"] == "constant":
            mag = float(dl.get("magnitude", structure.bound))
            delta = lambda t: mag * np.eye(cfg.plant.nq)
        else:
            raise ConfigError(f"unknown uncertainty realization {dl['type']!r}")
    return Scenario(
        duration=float(spec.get("duration", 10.0)),
        step=float(spec.get("step", 1e-3)),
        disturbance=dist,
        delta=delta,
        x0=np.asarray(spec["x0"], dtype=float) if spec.get("x0") is not None else None,
    )
