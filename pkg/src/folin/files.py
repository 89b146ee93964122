"""JSON documents: system, observer and scenario files.

Observer files come in two kinds::

    {"kind": "lti", "A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]],
     "alpha": [α_1, ...], "beta": [[...], ...], "metadata": {...}}

    {"kind": "general", "alpha": [α_1, ...] | "roots": [...],
     "Z0": "<expr in z, y1..yp>", "Z": ["<expr in y1..yp>", ...],
     "inverse": "<expr in zeta, y1..yp>", "bracket": [z_lo, z_hi], "params": {...}}

A scenario names a system (and optionally an observer) file plus the
simulation settings; relative file names resolve against the scenario's own
directory first and the shipped data directory second.
"""
from __future__ import annotations

import json
import os
from importlib import resources

import numpy as np

from .gfol import GeneralObserver, GeneralSpec, synthesize_general
from .span import CharPoly, char_from_roots, companion
from .synth import ObserverLTI, beta_from_observer
from .system import SystemFileError, eval_params, system_from_dict

__all__ = ["data_path", "resolve", "read_json", "write_json", "load_system",
           "observer_to_dict", "observer_from_dict", "load_observer",
           "load_scenario", "SHIPPED"]

SHIPPED = ("cstr.json", "example75.json", "dblint.json")


def data_path(name: str) -> str:
    """Path of a file shipped in the package data directory."""
    return str(resources.files("folin") / "data" / name)


def resolve(name, base_dir=None) -> str:
    """Find ``name`` as given, next to ``base_dir``, or among the shipped data."""
    name = os.fspath(name)
    candidates = [name]
    if base_dir is not None and not os.path.isabs(name):
        candidates.append(os.path.join(base_dir, name))
    candidates.append(data_path(os.path.basename(name)))
    for c in candidates:
        if os.path.isfile(c):
            return c
    raise FileNotFoundError(f"no such file: {name}")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemFileError(f"{path}: invalid JSON ({exc})") from None


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2) + "\n")


def load_system(name, base_dir=None):
    """``(model, lti_or_None, path)`` for a system file."""
    path = resolve(name, base_dir)
    model, lti = system_from_dict(read_json(path))
    return model, lti, path


def _matrix(doc, key, shape=None):
    try:
        M = np.atleast_2d(np.asarray(doc[key], dtype=float))
    except KeyError:
        raise SystemFileError(f"observer file is missing {key!r}") from None
    except (TypeError, ValueError):
        raise SystemFileError(f"observer field {key!r} is not a numeric matrix") from None
    if shape is not None and M.shape != shape:
        raise SystemFileError(f"observer field {key!r} has shape {M.shape}, expected {shape}")
    return M


def _charpoly(doc):
    if "alpha" in doc:
        return CharPoly(tuple(float(a) for a in doc["alpha"]))
    if "roots" in doc:
        return char_from_roots([complex(r) if isinstance(r, str) else r for r in doc["roots"]])
    raise SystemFileError("observer file needs 'alpha' or 'roots'")


def observer_to_dict(obs, metadata=None) -> dict:
    if isinstance(obs, GeneralObserver):
        from .expr import to_string
        spec = obs.spec
        doc = {"kind": "general", "alpha": list(spec.alpha.alpha),
               "Z0": to_string(spec.Z0), "Z": [to_string(z) for z in spec.Z]}
        if spec.inverse is not None:
            doc["inverse"] = to_string(spec.inverse)
        if spec.bracket is not None:
            doc["bracket"] = list(spec.bracket)
        if spec.params:
            doc["params"] = dict(spec.params)
    else:
        doc = {"kind": "lti",
               "A": obs.A.tolist(), "B": obs.B.tolist(),
               "C": obs.C.tolist(), "D": obs.D.tolist(),
               "alpha": [float(a) for a in obs.alpha.alpha],
               "beta": obs.beta.tolist()}
    if metadata:
        doc["metadata"] = metadata
    return doc


def observer_from_dict(doc: dict, p=None):
    """Rebuild an :class:`ObserverLTI` or :class:`GeneralObserver`.

    ``A`` must be the companion matrix of ``alpha`` (to 1e-12); when ``alpha``
    is absent it is read off the last column of ``A``.
    """
    kind = doc.get("kind")
    if kind == "general":
        try:
            spec = GeneralSpec(_charpoly(doc), int(p if p is not None else doc.get("p", 1)),
                               doc["Z0"], tuple(doc["Z"]), inverse=doc.get("inverse"),
                               bracket=doc.get("bracket"),
                               params=eval_params(doc.get("params", {})))
        except KeyError as exc:
            raise SystemFileError(f"observer file is missing {exc.args[0]!r}") from None
        return synthesize_general(spec, allow_unstable=True)
    if kind != "lti":
        raise SystemFileError(f"unknown observer kind {kind!r}")
    A = _matrix(doc, "A")
    v = A.shape[0]
    if A.shape != (v, v):
        raise SystemFileError("observer matrix A must be square")
    B = _matrix(doc, "B")
    if B.shape[0] != v:
        raise SystemFileError(f"observer matrix B must have {v} rows")
    q = B.shape[1]
    if p is not None and q != p:
        raise SystemFileError(f"observer expects {q} outputs, system has {p}")
    C = _matrix(doc, "C", (1, v))
    D = _matrix(doc, "D", (1, q))
    alpha = _charpoly(doc) if ("alpha" in doc or "roots" in doc) else \
        CharPoly(tuple(float(-a) for a in A[::-1, -1]))
    if alpha.order != v or not np.allclose(A, companion(alpha.alpha), rtol=0, atol=1e-12):
        raise SystemFileError("observer matrix A is not the companion matrix of alpha")
    e_v = np.zeros((1, v))
    e_v[0, -1] = 1.0
    if not np.array_equal(C, e_v):
        raise SystemFileError("observer matrix C must be (0, ..., 0, 1)")
    obs = ObserverLTI(A, B, C, D, alpha, np.zeros((v + 1, q)))
    beta = beta_from_observer(obs, alpha)
    if "beta" in doc:
        given = _matrix(doc, "beta", (v + 1, q))
        scale = max(1.0, float(np.max(np.abs(given))))
        if np.max(np.abs(given - beta)) > 1e-9 * scale:
            raise SystemFileError("observer field 'beta' is inconsistent with (A, B, C, D)")
        beta = given
    return ObserverLTI(A, B, C, D, alpha, beta)


def load_observer(name, p=None, base_dir=None):
    path = resolve(name, base_dir)
    return observer_from_dict(read_json(path), p=p)


def load_scenario(name):
    """Parse a scenario file; system/observer entries become resolved paths."""
    path = resolve(name)
    doc = read_json(path)
    base = os.path.dirname(os.path.abspath(path))
    if "system" not in doc:
        raise SystemFileError("scenario file is missing 'system'")
    out = dict(doc)
    out["system"] = resolve(doc["system"], base)
    if doc.get("observer"):
        out["observer"] = resolve(doc["observer"], base)
    return out
