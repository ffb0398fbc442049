"""Experiment configuration: a single JSON document, validated exhaustively."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from .fem import CoefficientField, ellipticity_check
from .schemes import SchemeKind, SchemeSpec


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


_triple = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_kind = {"enum": [k.value for k in SchemeKind]}
_pos = {"type": "number", "exclusiveMinimum": 0}


def _section(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _section({
    "mesh": _section({"m": {"type": "integer", "minimum": 2}}),
    "problem": _section({
        "initial_data": {"enum": ["default", "zero"]},
        "transfer": {"enum": ["projection", "interpolation"]},
        "lumped_mass": {"type": "boolean"},
    }),
    "coefficients": _section({"upper": _triple, "lower": _triple}),
    "time": _section({"tau": _pos, "N": {"type": "integer", "minimum": 0}}),
    "scheme": _section({
        "kind": _kind,
        "sigma": {"type": "number"},
        "decomposition": {"enum": ["rows", "columns"]},
    }, required=("kind",)),
    "reference": _section({"kind": _kind, "sigma": {"type": "number"}}),
    "solver": _section({"tol": _pos, "max_iter": {"type": "integer", "minimum": 1}}),
    "output": _section({
        "dir": {"type": "string"},
        "snapshot_steps": {"type": "array", "items": {"type": "integer"}},
        "eps_norm": {"enum": ["mass", "euclidean"]},
    }),
    "convergence": _section({
        "taus": {"type": "array", "items": _pos, "minItems": 3},
        "T": _pos,
        "target": {"enum": ["dense", "fem"]},
    }),
    "stability": _section({"probe_steps": {"type": "integer", "minimum": 1}}),
}, required=("scheme",))

DEFAULTS: dict[str, Any] = {
    "mesh": {"m": 32},
    "problem": {"initial_data": "default", "transfer": "projection", "lumped_mass": False},
    "coefficients": {"upper": [5.0, -2.0, 1.0], "lower": [1.0, 2.0, 5.0]},
    "time": {"tau": 1e-3, "N": 100},
    "scheme": {"sigma": 1.0, "decomposition": "rows"},
    "reference": {},
    "solver": {"tol": 1e-10, "max_iter": 10000},
    "output": {"dir": ".", "eps_norm": "mass"},
    "convergence": {"taus": [1 / 20, 1 / 40, 1 / 80, 1 / 160], "T": 1.0, "target": "dense"},
    "stability": {"probe_steps": 50},
}


@dataclass(frozen=True)
class RunConfig:
    m: int
    initial_data: str
    transfer: str
    lumped_mass: bool
    coefficients: CoefficientField
    tau: float
    N: int
    scheme: SchemeSpec
    reference: SchemeSpec
    solver_tol: float
    solver_max_iter: int
    out_dir: str
    snapshot_steps: tuple[int, ...]
    eps_norm: str
    conv_taus: tuple[float, ...]
    conv_T: float
    conv_target: str
    probe_steps: int


def default_snapshots(N: int) -> tuple[int, ...]:
    return tuple(sorted({0, N // 4, N // 2, (3 * N) // 4, N}))


def default_reference(spec: SchemeSpec) -> SchemeSpec:
    """Backward Euler for first-order schemes, Crank-Nicolson for second-order ones."""
    return SchemeSpec(SchemeKind.WEIGHTED, 0.5 if spec.order == 2 else 1.0)


def is_geometric(taus, rtol: float = 1e-9) -> bool:
    if len(taus) < 3:
        return False
    ratios = [a / b for a, b in zip(taus[:-1], taus[1:])]
    return ratios[0] != 1.0 and all(math.isclose(r, ratios[0], rel_tol=rtol) for r in ratios)


def _merge(doc: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for key, val in doc.items():
        out[key] = {**out.get(key, {}), **val}
    return out


def parse_config(doc: Any) -> RunConfig:
    """Validate a decoded JSON document and fill defaults.

    Schema and semantic problems are all collected before raising ConfigError.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
              for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))]
    if errors:
        raise ConfigError(errors)

    c = _merge(doc)
    m, tau, N = c["mesh"]["m"], c["time"]["tau"], c["time"]["N"]
    if m % 2:
        errors.append(f"mesh/m: must be even so the coefficient jump lies on element edges, got {m}")
    coeffs = CoefficientField(tuple(map(float, c["coefficients"]["upper"])),
                              tuple(map(float, c["coefficients"]["lower"])))
    for chk in ellipticity_check(coeffs):
        if not chk.passed:
            errors.append(f"coefficients/{chk.name}: ellipticity fails "
                          f"(d11={chk.d11:g}, d22={chk.d22:g}, margin {chk.margin:g})")

    sc = c["scheme"]
    scheme = SchemeSpec(SchemeKind(sc["kind"]), float(sc["sigma"]), sc["decomposition"])
    if "kind" in c["reference"]:
        ref_default = default_reference(scheme)
        reference = SchemeSpec(SchemeKind(c["reference"]["kind"]),
                               float(c["reference"].get("sigma", ref_default.sigma)))
    else:
        reference = default_reference(scheme)
        if "sigma" in c["reference"]:
            reference = SchemeSpec(reference.kind, float(c["reference"]["sigma"]))

    snaps = c["output"].get("snapshot_steps")
    snaps = default_snapshots(N) if snaps is None else tuple(sorted(set(snaps)))
    bad = [s for s in snaps if not 0 <= s <= N]
    if bad:
        errors.append(f"output/snapshot_steps: {bad} outside [0, {N}]")

    taus = tuple(float(t) for t in c["convergence"]["taus"])
    if not is_geometric(taus):
        errors.append(f"convergence/taus: need at least 3 values in geometric progression, got {list(taus)}")
    T = float(c["convergence"]["T"])
    off_grid = [t for t in taus if abs(T / t - round(T / t)) > 1e-8 * (T / t)]
    if off_grid:
        errors.append(f"convergence/T: {T:g} is not a whole number of steps for tau {off_grid}")
    if errors:
        raise ConfigError(errors)

    return RunConfig(
        m=m, initial_data=c["problem"]["initial_data"], transfer=c["problem"]["transfer"],
        lumped_mass=c["problem"]["lumped_mass"], coefficients=coeffs, tau=float(tau), N=N,
        scheme=scheme, reference=reference, solver_tol=float(c["solver"]["tol"]),
        solver_max_iter=c["solver"]["max_iter"], out_dir=c["output"]["dir"],
        snapshot_steps=snaps, eps_norm=c["output"]["eps_norm"], conv_taus=taus, conv_T=T,
        conv_target=c["convergence"]["target"], probe_steps=c["stability"]["probe_steps"],
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"]) from exc
    return parse_config(doc)
