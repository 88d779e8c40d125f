"""JSON and CSV formats for operators, states, models, samples and rankings.

Floats are written with Python's shortest round-trip representation, so
every value re-parses to the identical double.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .gibbs import GibbsModel, gibbs_state
from .likelihood import SampleMeans
from .operators import DensityMatrix, HermitianOperator, ObservableSet
from .tomography import EnsembleSpec, SampleRecord

PARSE_ATOL = 1e-9
MANIFEST = "manifest.json"
RANKING_FIELDS = ("label", "fit_term", "penalty_term", "total", "posterior_weight")


class SchemaError(ValueError):
    """Input does not match the expected JSON layout."""


def _require(obj, *keys):
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a JSON object, got {type(obj).__name__}")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise SchemaError(f"missing keys {missing}")


def operator_to_json(op) -> dict:
    m = np.asarray(op.matrix if hasattr(op, "matrix") else op, dtype=complex)
    entries = [[[float(z.real), float(z.imag)] for z in row] for row in m]
    return {"dim": int(m.shape[0]), "entries": entries}


def _entries(obj) -> np.ndarray:
    _require(obj, "dim", "entries")
    d = obj["dim"]
    try:
        m = np.array([[complex(re, im) for re, im in row] for row in obj["entries"]], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"entries must be rows of [re, im] pairs: {exc}") from None
    if m.shape != (d, d):
        raise SchemaError(f"entries have shape {m.shape}, dim says {d}")
    return m


def operator_from_json(obj) -> HermitianOperator:
    _require(obj, "dim", "entries")
    if obj.get("type", "operator") not in ("operator", "state"):
        raise SchemaError(f"unexpected type tag {obj.get('type')!r}")
    try:
        return HermitianOperator(_entries(obj), atol=PARSE_ATOL)
    except SchemaError:
        raise
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def state_to_json(rho: DensityMatrix) -> dict:
    out = {"type": "state"}
    out.update(operator_to_json(rho))
    return out


def state_from_json(obj) -> DensityMatrix:
    _require(obj, "dim", "entries")
    if obj.get("type", "state") != "state":
        raise SchemaError(f"expected a state, got type {obj.get('type')!r}")
    op = operator_from_json(obj)
    try:
        return DensityMatrix(op)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def observable_set_to_json(obs: ObservableSet) -> dict:
    return {
        "dim": obs.dim,
        "labels": list(obs.labels),
        "observables": [operator_to_json(o) for o in obs],
    }


def observable_set_from_json(obj, default_label: str = "F1") -> ObservableSet:
    """Parse an observable set; a bare operator object becomes a one-element set."""
    if isinstance(obj, dict) and "entries" in obj:
        op = operator_from_json(obj)
        return ObservableSet([op], [str(obj.get("label", default_label))])
    if isinstance(obj, list):
        obj = {"observables": obj}
    _require(obj, "observables")
    ops = [operator_from_json(o) for o in obj["observables"]]
    labels = obj.get("labels")
    if labels is None:
        labels = [o.get("label", f"F{i + 1}") for i, o in enumerate(obj["observables"])]
    try:
        return ObservableSet(ops, labels, dim=obj.get("dim"))
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def gibbs_model_to_json(model: GibbsModel) -> dict:
    return {
        "sigma": state_to_json(model.sigma),
        "labels": list(model.labels),
        "kappa": [float(k) for k in model.kappa],
        "log_partition": float(model.log_partition),
        "observables": [operator_to_json(o) for o in model.observables],
    }


def gibbs_model_from_json(obj) -> GibbsModel:
    _require(obj, "sigma", "labels", "kappa", "log_partition", "observables")
    sigma = state_from_json(obj["sigma"])
    obs = ObservableSet([operator_from_json(o) for o in obj["observables"]], obj["labels"], dim=sigma.dim)
    kappa = np.array(obj["kappa"], dtype=float)
    return GibbsModel(
        sigma=sigma,
        observables=obs,
        kappa=kappa,
        state=gibbs_state(kappa, obs, sigma),
        log_partition=float(obj["log_partition"]),
    )


def sample_means_to_json(means: SampleMeans) -> dict:
    return {"labels": list(means.labels), "values": [float(v) for v in means.values], "N": means.sample_size}


def sample_means_from_json(obj, observables: ObservableSet) -> SampleMeans:
    """Attach parsed means to ``observables``, reordering by label."""
    _require(obj, "labels", "values", "N")
    lookup = dict(zip(obj["labels"], obj["values"]))
    if len(lookup) != len(obj["values"]):
        raise SchemaError("labels and values differ in length or repeat")
    try:
        values = [lookup[s] for s in observables.labels]
    except KeyError as exc:
        raise SchemaError(f"no mean for observable {exc.args[0]!r}") from None
    if set(obj["labels"]) != set(observables.labels):
        raise SchemaError("sample means carry labels outside the observable set")
    return SampleMeans(observables, values, obj["N"])


def sample_record_to_json(rec: SampleRecord) -> dict:
    return {
        "id": rec.id,
        "size": rec.size,
        "means": sample_means_to_json(rec.means),
        "image": state_to_json(rec.image),
        "true_state": None if rec.true_state is None else state_to_json(rec.true_state),
        "shrink_factor": float(rec.shrink_factor),
        "residual": float(rec.residual),
    }


def sample_record_from_json(obj, measurement_set: ObservableSet) -> SampleRecord:
    _require(obj, "id", "size", "means", "image")
    true = obj.get("true_state")
    return SampleRecord(
        id=str(obj["id"]),
        size=int(obj["size"]),
        means=sample_means_from_json(obj["means"], measurement_set),
        image=state_from_json(obj["image"]),
        true_state=None if true is None else state_from_json(true),
        shrink_factor=float(obj.get("shrink_factor", 1.0)),
        residual=float(obj.get("residual", 0.0)),
    )


def ensemble_spec_from_json(obj, seed: int | None = None) -> EnsembleSpec:
    """Parse an ensemble spec; ``seed`` overrides the file's seed."""
    _require(obj, "family", "parameter_draws", "sizes", "measurement_set")
    family = observable_set_from_json(obj["family"])
    measurement = observable_set_from_json(obj["measurement_set"])
    sigma = state_from_json(obj["sigma"]) if obj.get("sigma") else DensityMatrix.maximally_mixed(family.dim)
    recon = obj.get("reconstruction_sigma")
    if seed is None:
        if "seed" not in obj:
            raise SchemaError("no seed given")
        seed = obj["seed"]
    try:
        return EnsembleSpec(
            sigma=sigma,
            family=family,
            parameter_draws=obj["parameter_draws"],
            sizes=obj["sizes"],
            measurement_set=measurement,
            seed=int(seed),
            reconstruction_sigma=state_from_json(recon) if recon else None,
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def ensemble_spec_to_json(spec: EnsembleSpec) -> dict:
    out = {
        "sigma": state_to_json(spec.sigma),
        "family": observable_set_to_json(spec.family),
        "parameter_draws": [[float(k) for k in draw] for draw in spec.parameter_draws],
        "sizes": list(spec.sizes),
        "measurement_set": observable_set_to_json(spec.measurement_set),
        "seed": spec.seed,
    }
    if spec.reconstruction_sigma is not None:
        out["reconstruction_sigma"] = state_to_json(spec.reconstruction_sigma)
    return out


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def write_ensemble(records, spec: EnsembleSpec, directory) -> Path:
    """One JSON file per sample plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for rec in records:
        name = f"{rec.id}.json"
        dump_json(sample_record_to_json(rec), directory / name)
        names.append(name)
    manifest = {
        "format": "gibbsfit-ensemble",
        "seed": spec.seed,
        "sigma": state_to_json(spec.sigma),
        "family": observable_set_to_json(spec.family),
        "measurement_set": observable_set_to_json(spec.measurement_set),
        "samples": names,
    }
    path = directory / MANIFEST
    dump_json(manifest, path)
    return path


def read_ensemble(directory) -> tuple[list[SampleRecord], dict]:
    directory = Path(directory)
    path = directory / MANIFEST if directory.is_dir() else directory
    manifest = load_json(path)
    _require(manifest, "measurement_set", "samples")
    measurement = observable_set_from_json(manifest["measurement_set"])
    records = [sample_record_from_json(load_json(path.parent / name), measurement) for name in manifest["samples"]]
    if not records:
        raise SchemaError("ensemble manifest lists no samples")
    return records, manifest


def ranking_rows(ranked) -> list[dict]:
    return [
        {
            "label": r.hypothesis.label,
            "fit_term": float(r.score.fit_term),
            "penalty_term": float(r.score.penalty_term),
            "total": float(r.score.total),
            "posterior_weight": float(r.posterior_weight),
        }
        for r in ranked
    ]


def write_ranking(ranked, json_path, csv_path) -> None:
    rows = ranking_rows(ranked)
    dump_json(rows, json_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RANKING_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_ranking(json_path) -> list[dict]:
    rows = load_json(json_path)
    if not isinstance(rows, list):
        raise SchemaError("ranking must be a JSON array")
    for row in rows:
        _require(row, *RANKING_FIELDS)
    return rows


def read_ranking_csv(csv_path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "label" else float(v)) for k, v in row.items()} for row in rows]

