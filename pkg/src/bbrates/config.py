"""JSON run configuration: schema validation and construction of the model objects."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .geometry import DipoleGeometry, explicit_geometry, linear_lattice
from .golden_rule import BOHR_MAGNETON_EV_UM, KERNEL_MODES, CouplingSpec, KernelSettings, PhysicalConstants
from .pauli import MAX_SITES, PauliString, Spectrum, parse_hamiltonian_text, spectrum_from_terms

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["hamiltonian", "geometry", "coupling"],
    "properties": {
        "units": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "system": {"enum": ["dimensionless", "gaussian-ev-um-k"]},
                "hbar": _POS,
                "c": _POS,
                "k_B": _POS,
            },
        },
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "terms": {"type": "array", "items": {"type": "string"}},
                "file": {"type": "string"},
                "n_sites": {"type": "integer", "minimum": 1},
                "degeneracy_tol": _POS,
                "max_sites": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["terms"]}, {"required": ["file"]}],
        },
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lattice": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n", "spacing"],
                    "properties": {"n": {"type": "integer", "minimum": 1}, "spacing": _POS},
                },
                "explicit": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                },
            },
            "oneOf": [{"required": ["lattice"]}, {"required": ["explicit"]}],
        },
        "coupling": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mu", "temperature"],
            "properties": {
                "mu": {"type": "number"},
                "temperature": {"type": "number", "minimum": 0},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": list(KERNEL_MODES)},
                "tol": {"type": "number", "minimum": 1e-13},
                "theta_c": _POS,
                "theta_i": _POS,
                "b_switch": _POS,
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
                "kernel_dump": {"type": "boolean"},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    base_dir: Path
    constants: PhysicalConstants
    terms: list[PauliString]
    n_sites: int
    geometry: DipoleGeometry
    coupling: CouplingSpec
    kernel: KernelSettings
    degeneracy_tol: float | None
    max_sites: int
    output_dir: Path | None
    formats: tuple[str, ...]
    kernel_dump: bool

    def spectrum(self) -> Spectrum:
        return spectrum_from_terms(self.terms, self.n_sites, self.degeneracy_tol, self.max_sites)

    def echo(self) -> dict:
        """Config with defaults filled in, for summary files."""
        out = copy.deepcopy(self.raw)
        out.setdefault("units", {}).update(system=self.constants.name, hbar=self.constants.hbar,
                                           c=self.constants.c, k_B=self.constants.k_B)
        out["hamiltonian"]["resolved_terms"] = [str(t) for t in self.terms]
        out["hamiltonian"]["n_sites"] = self.n_sites
        out["kernel"] = {"mode": self.kernel.mode, "tol": self.kernel.tol, "theta_c": self.kernel.theta_c,
                         "theta_i": self.kernel.theta_i, "b_switch": self.kernel.b_switch}
        out["coupling"]["mu_internal"] = self.coupling.mu
        return out


def _constants(units: dict) -> PhysicalConstants:
    base = (PhysicalConstants.ev_um_kelvin() if units.get("system") == "gaussian-ev-um-k"
            else PhysicalConstants.dimensionless())
    return PhysicalConstants(units.get("hbar", base.hbar), units.get("c", base.c), units.get("k_B", base.k_B),
                             base.name)


def parse_config(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    base_dir = Path(base_dir)
    constants = _constants(raw.get("units", {}))

    geo = raw["geometry"]
    if "lattice" in geo:
        geometry = linear_lattice(geo["lattice"]["n"], geo["lattice"]["spacing"])
    else:
        try:
            geometry = explicit_geometry(geo["explicit"])
        except ValueError as exc:
            raise ConfigError(f"config error at geometry/explicit: {exc}") from None

    ham = raw["hamiltonian"]
    n_sites = ham.get("n_sites", geometry.n)
    if n_sites != geometry.n:
        raise ConfigError(f"hamiltonian has {n_sites} sites but geometry has {geometry.n}")
    if "terms" in ham:
        text = "\n".join(ham["terms"])
    else:
        text = (base_dir / ham["file"]).read_text()
    terms = parse_hamiltonian_text(text, n_sites=n_sites)

    cp = raw["coupling"]
    mu = cp["mu"] * (BOHR_MAGNETON_EV_UM if constants.name == "gaussian-ev-um-k" else 1.0)
    coupling = CouplingSpec(mu, cp["temperature"])
    kernel = KernelSettings(**raw.get("kernel", {}))

    outs = raw.get("outputs", {})
    out_dir = outs.get("directory")
    return RunConfig(
        raw=raw,
        base_dir=base_dir,
        constants=constants,
        terms=terms,
        n_sites=n_sites,
        geometry=geometry,
        coupling=coupling,
        kernel=kernel,
        degeneracy_tol=ham.get("degeneracy_tol"),
        max_sites=ham.get("max_sites", MAX_SITES),
        output_dir=None if out_dir is None else base_dir / out_dir,
        formats=tuple(outs.get("formats", ["csv", "json"])),
        kernel_dump=outs.get("kernel_dump", False),
    )


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, path.parent)
