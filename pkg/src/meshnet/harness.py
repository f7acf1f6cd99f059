"""Experiment harness: equivariance-gap reports, toy training, eval, timing.

The equivariance gap of a model under a transformation family is the mean
squared difference between the logits of the transformed input and the
(pushed-forward) logits of the original, averaged over a mesh set.  An
equivariant model shows gaps at floating-point noise level; models with raw
coordinates or plain vector biases show gaps orders of magnitude larger
under the corresponding family.

Every report embeds the config hash, a build identifier (hash of the
installed package sources), and the seed, so identical inputs reproduce
identical JSON apart from wall-clock timings.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time

import numpy as np

from . import __version__
from .autodiff import Adam, Tensor, nll_loss
from .config import RunConfig, config_hash, model_spec_from_config
from .datasets import Dataset, dataset_from_config, eqgap_meshes
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .features import compute_features
from .layers import EdgeGeometry, EmanAttentionLayer, GemConvLayer
from .mesh import Mesh, generate_grid_patch, generate_icosphere
from .model import Model, build_model
from .representations import FeatureType
from .tangent import build_frames, regauge
from .transforms import (
    AmbientTransform,
    apply_ambient,
    apply_permutation,
    random_transform_suite,
)

__all__ = ["build_id", "model_logits", "equivariance_gap", "train", "evaluate",
           "time_layers", "save_checkpoint", "load_checkpoint",
           "generate_config_mesh", "features_report"]

_CKPT_MAGIC = b"MNET"


def build_id() -> str:
    """Hash of the installed package sources (git-style build identifier)."""
    pkg_dir = os.path.dirname(__file__)
    h = hashlib.sha256()
    for name in sorted(os.listdir(pkg_dir)):
        if name.endswith(".py"):
            with open(os.path.join(pkg_dir, name), "rb") as fh:
                h.update(name.encode())
                h.update(fh.read())
    return h.hexdigest()[:12]


def _report_header(cfg: RunConfig) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "build_id": build_id(),
        "seed": cfg.run["seed"],
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# Forward pipeline
# ---------------------------------------------------------------------------

def mesh_pipeline(mesh: Mesh, family: str, powers=(0.7,)):
    """Frames, transport, edge geometry, and input features for one mesh."""
    frames = build_frames(mesh)
    geom = EdgeGeometry.from_frames(frames)
    field = compute_features(family, mesh, frames, powers)
    return frames, geom, field


def model_logits(model: Model, mesh: Mesh) -> np.ndarray:
    spec = model.spec
    _frames, geom, field = mesh_pipeline(mesh, spec.features, spec.reltan_powers)
    return model.forward(field, geom).value


# ---------------------------------------------------------------------------
# Equivariance gap
# ---------------------------------------------------------------------------

def _ambient_for_family(family: str, suite) -> AmbientTransform:
    if family == "rot_tr_scale":
        return suite.ambient
    if family == "rot":
        return AmbientTransform(rotation=suite.ambient.rotation)
    if family == "translate":
        return AmbientTransform(translation=suite.ambient.translation)
    if family == "scale":
        return AmbientTransform(scale=suite.ambient.scale)
    raise ValueError(f"not an ambient family: {family}")


def _gap_for_mesh(model: Model, mesh: Mesh, family: str, suite) -> float:
    spec = model.spec
    frames, geom, field = mesh_pipeline(mesh, spec.features, spec.reltan_powers)
    logits0 = model.forward(field, geom).value
    if family == "gauge":
        # rotate the existing frames rather than re-selecting reference
        # neighbors: isolates gauge sensitivity
        frames2, transport2 = regauge(frames, suite.gauge[: mesh.n_vertices])
        geom2 = EdgeGeometry.from_frames(frames2, transport2)
        field2 = compute_features(spec.features, mesh, frames2, spec.reltan_powers)
        logits1 = model.forward(field2, geom2).value
        ref = logits0
    elif family == "perm":
        perm = suite.perm
        mesh2 = apply_permutation(mesh, perm)
        logits1 = model_logits(model, mesh2)
        if spec.task == "segmentation":
            logits1 = perm.unpermute_rows(logits1)
        ref = logits0
    else:
        mesh2 = apply_ambient(mesh, _ambient_for_family(family, suite))
        logits1 = model_logits(model, mesh2)
        ref = logits0
    return float(np.mean((logits1 - ref) ** 2))


def equivariance_gap(cfg: RunConfig) -> dict:
    """Mean per-family logit MSE of a randomly initialized model."""
    seed = cfg.run["seed"]
    spec = model_spec_from_config(cfg)
    model = build_model(spec, seed)
    meshes = eqgap_meshes(cfg.data["n_meshes"], seed, cfg.data["subdivisions"])
    tr = cfg.transforms
    families = list(tr["families"])
    gaps = {f: [] for f in families}
    rng = np.random.default_rng(seed + 1)
    for mesh in meshes:
        for _ in range(tr["samples_per_mesh"]):
            suite = random_transform_suite(
                mesh.n_vertices, rng, tr["translation_range"],
                tr["scale_min"], tr["scale_max"],
            )
            for family in families:
                gaps[family].append(_gap_for_mesh(model, mesh, family, suite))
    report = _report_header(cfg)
    report.update({
        "kind": spec.kind,
        "features": spec.features,
        "bias": spec.bias,
        "n_meshes": len(meshes),
        "gaps": {f: float(np.mean(v)) for f, v in gaps.items()},
    })
    return report


# ---------------------------------------------------------------------------
# Training / evaluation
# ---------------------------------------------------------------------------

def _accuracy(model: Model, samples, transform=None, rng=None) -> float:
    """Fraction of correct predictions, optionally under a transformation."""
    correct = 0
    total = 0
    for s in samples:
        mesh, label = s.mesh, s.label
        if transform == "gauge":
            frames, geom, field = mesh_pipeline(
                mesh, model.spec.features, model.spec.reltan_powers)
            frames2, transport2 = regauge(
                frames, rng.uniform(-np.pi, np.pi, mesh.n_vertices))
            geom = EdgeGeometry.from_frames(frames2, transport2)
            field = compute_features(model.spec.features, mesh, frames2,
                                     model.spec.reltan_powers)
            logits = model.forward(field, geom).value
        elif transform == "rot_tr_scale":
            suite = random_transform_suite(mesh.n_vertices, rng)
            logits = model_logits(model, apply_ambient(mesh, suite.ambient))
        elif transform == "perm":
            suite = random_transform_suite(mesh.n_vertices, rng)
            logits = model_logits(model, apply_permutation(mesh, suite.perm))
            if model.spec.task == "segmentation":
                label = suite.perm.permute_rows(label)
        else:
            logits = model_logits(model, mesh)
        pred = logits.argmax(axis=1)
        if model.spec.task == "segmentation":
            correct += int((pred == label).sum())
            total += len(label)
        else:
            correct += int(pred[0] == label)
            total += 1
    return 100.0 * correct / total


def train(cfg: RunConfig, dataset: Dataset | None = None):
    """NLL training with Adam on the configured dataset.

    No transformations are applied to the training meshes.  Returns
    ``(model, metrics)``; raises TrainingDivergedError if the loss leaves
    the reals.
    """
    if dataset is None:
        dataset = dataset_from_config(cfg)
    seed = cfg.run["seed"]
    spec = model_spec_from_config(cfg, target_dim=dataset.target_dim,
                                  task=dataset.task)
    model = build_model(spec, seed)
    opt = Adam([t for _n, t in model.parameters()], lr=cfg.training["learning_rate"])
    drop_rng = np.random.default_rng(seed + 2)
    batch_size = max(1, cfg.training["batch_size"])

    # geometry and features never change during training: precompute
    prepared = []
    for s in dataset.train:
        _frames, geom, field = mesh_pipeline(s.mesh, spec.features, spec.reltan_powers)
        target = (np.asarray(s.label) if spec.task == "segmentation"
                  else np.array([s.label]))
        prepared.append((field, geom, target))

    history = []
    for epoch in range(cfg.training["epochs"]):
        losses = []
        for start in range(0, len(prepared), batch_size):
            batch = prepared[start:start + batch_size]
            opt.zero_grad()
            total = None
            for field, geom, target in batch:
                logits = model.forward(field, geom, train=True, rng=drop_rng)
                loss = nll_loss(logits, target)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            if not np.isfinite(total.item()):
                raise TrainingDivergedError(epoch, total.item())
            total.backward()
            opt.step()
            losses.append(total.item())
        acc = _accuracy(model, dataset.train)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)),
                        "train_accuracy": acc})
    metrics = _report_header(cfg)
    metrics.update({
        "epochs": cfg.training["epochs"],
        "final_train_accuracy": history[-1]["train_accuracy"] if history else None,
        "history": history,
        "n_parameters": model.n_parameters(),
    })
    return model, metrics


def evaluate(cfg: RunConfig, model: Model | None = None,
             checkpoint: str | None = None, dataset: Dataset | None = None) -> dict:
    """Accuracy table: train / test / per transformation family."""
    if dataset is None:
        dataset = dataset_from_config(cfg)
    if not dataset.test:
        raise ConfigError("evaluation needs a non-empty test set")
    if model is None:
        spec = model_spec_from_config(cfg, target_dim=dataset.target_dim,
                                      task=dataset.task)
        model = build_model(spec, cfg.run["seed"])
        if checkpoint is None:
            raise ConfigError("evaluate needs a model or a checkpoint path")
        load_checkpoint(model, checkpoint, expect_hash=config_hash(cfg))
    seed = cfg.run["seed"]
    report = _report_header(cfg)
    report["accuracy"] = {
        "train": _accuracy(model, dataset.train),
        "test": _accuracy(model, dataset.test),
        "gauge": _accuracy(model, dataset.test, "gauge",
                           np.random.default_rng(seed + 10)),
        "rot_tr_scale": _accuracy(model, dataset.test, "rot_tr_scale",
                                  np.random.default_rng(seed + 11)),
        "perm": _accuracy(model, dataset.test, "perm",
                          np.random.default_rng(seed + 12)),
    }
    return report


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

def _time_layer(layer, x, geom, repetitions, warmups) -> float:
    def run():
        out = layer.forward(Tensor(x), geom)
        loss = (out * out).sum()
        loss.backward()

    for _ in range(warmups):
        run()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def time_layers(cfg: RunConfig) -> dict:
    """Median forward+backward wall time of single hidden layers.

    Times both layer kinds on a grid mesh and again on a grid with roughly
    twice the edges, to expose the edge-linear scaling.
    """
    t = cfg.timing
    hidden = FeatureType.parse(cfg.model["hidden_type"])
    rng = np.random.default_rng(cfg.run["seed"])
    report = _report_header(cfg)
    report["layers"] = {}
    meshes = {
        "base": generate_grid_patch(t["rows"], t["cols"], 0.1, cfg.run["seed"]),
        "double_edges": generate_grid_patch(t["rows"], 2 * t["cols"] - 1, 0.1,
                                            cfg.run["seed"]),
    }
    geoms = {}
    feats = {}
    for name, mesh in meshes.items():
        frames = build_frames(mesh)
        geoms[name] = EdgeGeometry.from_frames(frames)
        feats[name] = rng.standard_normal((mesh.n_vertices, hidden.dim))
        report["layers"][name] = {"edges": int(mesh.n_edges)}
    for kind in ("gem", "eman"):
        for name in meshes:
            if kind == "gem":
                layer = GemConvLayer(hidden, hidden, rng=rng)
            else:
                layer = EmanAttentionLayer(hidden, hidden, rng=rng)
            seconds = _time_layer(layer, feats[name], geoms[name],
                                  t["repetitions"], t["warmups"])
            report["layers"][name][kind + "_seconds"] = seconds
    base = report["layers"]["base"]
    dbl = report["layers"]["double_edges"]
    report["eman_gem_ratio"] = base["eman_seconds"] / base["gem_seconds"]
    report["edge_scaling_ratio"] = {
        "gem": dbl["gem_seconds"] / base["gem_seconds"],
        "eman": dbl["eman_seconds"] / base["eman_seconds"],
        "edge_factor": dbl["edges"] / base["edges"],
    }
    return report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: str, cfg_hash: str):
    """Binary record: magic, hash, count, float64 coefficients; JSON sidecar."""
    flat = model.flat_parameters()
    hash_bytes = cfg_hash.encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", 1, len(hash_bytes)))
        fh.write(hash_bytes)
        fh.write(struct.pack("<Q", flat.size))
        fh.write(flat.astype("<f8").tobytes())
    sidecar = {
        "config_hash": cfg_hash,
        "n_parameters": int(flat.size),
        "layers": [{"name": n, "shape": list(t.value.shape)}
                   for n, t in model.parameters()],
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_checkpoint(model: Model, path: str, expect_hash: str | None = None):
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _CKPT_MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            _version, hash_len = struct.unpack("<II", fh.read(8))
            stored_hash = fh.read(hash_len).decode()
            (count,) = struct.unpack("<Q", fh.read(8))
            flat = np.frombuffer(fh.read(count * 8), dtype="<f8").copy()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if expect_hash is not None and stored_hash != expect_hash:
        raise CheckpointError(
            f"checkpoint was written for config {stored_hash}, "
            f"current config hashes to {expect_hash}"
        )
    if flat.size != count:
        raise CheckpointError(f"{path}: truncated parameter record")
    model.load_flat_parameters(flat)
    return stored_hash


# ---------------------------------------------------------------------------
# Small CLI helpers
# ---------------------------------------------------------------------------

def generate_config_mesh(cfg: RunConfig) -> Mesh:
    m = cfg.mesh
    if m["generator"] == "icosphere":
        return generate_icosphere(m["subdivisions"])
    return generate_grid_patch(m["rows"], m["cols"], m["noise"], cfg.run["seed"])


def features_report(cfg: RunConfig) -> dict:
    mesh = generate_config_mesh(cfg)
    frames, _geom, field = mesh_pipeline(
        mesh, cfg.model["features"], cfg.model["reltan_powers"])
    report = _report_header(cfg)
    report.update({
        "family": cfg.model["features"],
        "feature_type": str(field.ftype),
        "n_vertices": mesh.n_vertices,
        "values": field.values.tolist(),
    })
    if cfg.mesh["dump_frames"]:
        report["frames"] = {
            "normals": frames.normals.tolist(),
            "e1": frames.e1.tolist(),
            "e2": frames.e2.tolist(),
        }
    return report
