"""Checkpoint persistence: JSON sidecar plus raw little-endian f64 blob.

The blob layout is site-major in lexicographic site order with the component
index minor, exactly the in-memory layout of FormField data; the sidecar
records the lattice spec, field degree, endianness tag and format version.
"""

import json
from pathlib import Path

import numpy as np

from .lattice import FormField, Lattice

FORMAT_VERSION = 1


def lattice_to_dict(lattice: Lattice) -> dict:
    return {
        "active_axes": list(lattice.active_axes),
        "points_per_axis": lattice.points_per_axis,
        "period": lattice.period,
        "scheme": lattice.scheme,
    }


def lattice_from_dict(d: dict) -> Lattice:
    return Lattice(tuple(d["active_axes"]), d["points_per_axis"],
                   d["period"], d.get("scheme", "spectral"))


def write_form_field(base, field: FormField, extra: dict = None) -> Path:
    """Write <base>.json + <base>.bin; returns the sidecar path."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    blob = np.ascontiguousarray(field.data, dtype="<f8")
    (base.with_suffix(".bin")).write_bytes(blob.tobytes())
    sidecar = {
        "version": FORMAT_VERSION,
        "endianness": "little",
        "dtype": "f8",
        "kind": "form",
        "degree": field.degree,
        "shape": list(field.data.shape),
        "lattice": lattice_to_dict(field.lattice),
        "blob": base.with_suffix(".bin").name,
    }
    if extra:
        sidecar["extra"] = extra
    path = base.with_suffix(".json")
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_form_field(base):
    """Read a checkpointed field; returns (FormField, extra_dict)."""
    base = Path(base)
    sidecar = json.loads(base.with_suffix(".json").read_text())
    if sidecar.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {sidecar.get('version')}")
    if sidecar.get("endianness") != "little":
        raise ValueError("checkpoint must be little-endian")
    lattice = lattice_from_dict(sidecar["lattice"])
    raw = (base.parent / sidecar["blob"]).read_bytes()
    data = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(sidecar["shape"])
    return FormField(lattice, sidecar["degree"], data), sidecar.get("extra", {})
