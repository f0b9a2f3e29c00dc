"""Fitted pipeline parameters and their on-disk bundle.

A model bundle is a directory holding one MAT1 blob per fitted matrix plus
a manifest.json recording the configuration, format version, and the shape
of every blob. Loading validates magic, shapes against the manifest, shape
consistency with the configuration, and rotation orthogonality.

Matrices are persisted as f32. canonicalize() pushes a freshly fitted
model's float64 matrices through f32 once, so encoding behaves identically
whether the model was just fitted or loaded back from disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebooks import Codebook, DiagonalGmm
from .config import PipelineConfig, config_from_manifest, config_to_entries
from .embedding import TembProjection
from .errors import (
    DataError,
    MissingBlobError,
    ShapeMismatchError,
    VersionMismatchError,
)
from .hashing import ItqModel
from .postprocessing import RnModel
from .preprocessing import PcaModel
from .storage import load_matrix, save_matrix

FORMAT_VERSION = "convagg-model-1"
MANIFEST_NAME = "manifest.json"
ORTHO_TOL = 1e-5


@dataclass(frozen=True)
class PipelineModel:
    config: PipelineConfig
    pca: PcaModel
    codebook: Codebook | None = None
    gmm: DiagonalGmm | None = None
    temb: TembProjection | None = None
    rn: RnModel | None = None
    itq: ItqModel | None = None

    def canonicalize(self) -> "PipelineModel":
        """Round every matrix through f32, matching a save/load cycle."""

        def f32(a: np.ndarray) -> np.ndarray:
            return a.astype(np.float32).astype(np.float64)

        pca = PcaModel(f32(self.pca.mean), f32(self.pca.basis), f32(self.pca.eigenvalues))
        codebook = Codebook(f32(self.codebook.centroids)) if self.codebook is not None else None
        gmm = (
            DiagonalGmm(f32(self.gmm.weights), f32(self.gmm.means), f32(self.gmm.variances))
            if self.gmm is not None
            else None
        )
        temb = (
            TembProjection(f32(self.temb.mean), f32(self.temb.drop_basis), f32(self.temb.keep_basis))
            if self.temb is not None
            else None
        )
        rn = (
            RnModel(
                f32(self.rn.mean),
                f32(self.rn.rotation),
                f32(self.rn.eigenvalues),
                self.rn.whiten,
                self.rn.epsilon,
            )
            if self.rn is not None
            else None
        )
        itq = (
            ItqModel(f32(self.itq.mean), f32(self.itq.pca), f32(self.itq.rotation))
            if self.itq is not None
            else None
        )
        return PipelineModel(self.config, pca, codebook, gmm, temb, rn, itq)


def _blob_map(model: PipelineModel) -> dict[str, np.ndarray]:
    blobs: dict[str, np.ndarray] = {
        "pca_mean": np.atleast_2d(model.pca.mean),
        "pca_basis": model.pca.basis,
        "pca_eigenvalues": np.atleast_2d(model.pca.eigenvalues),
    }
    if model.codebook is not None:
        blobs["codebook"] = model.codebook.centroids
    if model.gmm is not None:
        blobs["gmm_weights"] = np.atleast_2d(model.gmm.weights)
        blobs["gmm_means"] = model.gmm.means
        blobs["gmm_variances"] = model.gmm.variances
    if model.temb is not None:
        blobs["temb_mean"] = np.atleast_2d(model.temb.mean)
        blobs["temb_drop_basis"] = model.temb.drop_basis
        blobs["temb_keep_basis"] = model.temb.keep_basis
    if model.rn is not None:
        blobs["rn_mean"] = np.atleast_2d(model.rn.mean)
        blobs["rn_rotation"] = model.rn.rotation
        blobs["rn_eigenvalues"] = np.atleast_2d(model.rn.eigenvalues)
    if model.itq is not None:
        blobs["itq_mean"] = np.atleast_2d(model.itq.mean)
        blobs["itq_pca"] = model.itq.pca
        blobs["itq_rotation"] = model.itq.rotation
    return blobs


def save_model(model: PipelineModel, bundle_dir: Path | str) -> Path:
    """Write blobs + manifest; returns the manifest path."""
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    blobs = _blob_map(model)
    shapes: dict[str, list[int]] = {}
    for name, arr in blobs.items():
        save_matrix(arr, bundle_dir / f"{name}.mat")
        shapes[name] = [int(arr.shape[0]), int(arr.shape[1])]
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config_to_entries(model.config),
        "blobs": shapes,
    }
    manifest_path = bundle_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def _check_orthonormal(name: str, matrix: np.ndarray) -> None:
    gram = matrix.T @ matrix
    drift = np.abs(gram - np.eye(matrix.shape[1])).max()
    if drift > ORTHO_TOL:
        raise DataError(f"blob {name} is not orthonormal (drift {drift:.3g})")


def load_model(bundle_dir: Path | str) -> PipelineModel:
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingBlobError(f"no {MANIFEST_NAME} under {bundle_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"bundle version {version!r} != {FORMAT_VERSION!r}")
    cfg = config_from_manifest(manifest.get("config", {})).validate()
    shapes = manifest.get("blobs", {})

    def blob(name: str) -> np.ndarray:
        path = bundle_dir / f"{name}.mat"
        if name not in shapes:
            raise MissingBlobError(f"manifest lists no blob {name!r}")
        if not path.is_file():
            raise MissingBlobError(f"missing blob file {path.name}")
        arr = load_matrix(path).astype(np.float64)
        expected = tuple(shapes[name])
        if arr.shape != expected:
            raise ShapeMismatchError(f"blob {name} has shape {arr.shape}, manifest says {expected}")
        return arr

    def vector(name: str) -> np.ndarray:
        return blob(name)[0]

    pca_basis = blob("pca_basis")
    if pca_basis.shape[1] != cfg.dim:
        raise ShapeMismatchError(
            f"pca_basis has {pca_basis.shape[1]} columns, config dim is {cfg.dim}"
        )
    _check_orthonormal("pca_basis", pca_basis)
    pca = PcaModel(vector("pca_mean"), pca_basis, vector("pca_eigenvalues"))

    codebook = None
    gmm = None
    if cfg.embed == "fv":
        means = blob("gmm_means")
        if means.shape != (cfg.codebook_size, cfg.dim):
            raise ShapeMismatchError(
                f"gmm_means shape {means.shape} != ({cfg.codebook_size}, {cfg.dim})"
            )
        gmm = DiagonalGmm(vector("gmm_weights"), means, blob("gmm_variances"))
    else:
        centroids = blob("codebook")
        if centroids.shape != (cfg.codebook_size, cfg.dim):
            raise ShapeMismatchError(
                f"codebook shape {centroids.shape} != ({cfg.codebook_size}, {cfg.dim})"
            )
        codebook = Codebook(centroids)

    temb = None
    if cfg.embed == "temb":
        raw_dim = cfg.dim * cfg.codebook_size
        drop_basis = blob("temb_drop_basis")
        keep_basis = blob("temb_keep_basis")
        if drop_basis.shape != (raw_dim, cfg.drop) or keep_basis.shape != (raw_dim, raw_dim - cfg.drop):
            raise ShapeMismatchError("triangulation projection blobs inconsistent with config")
        _check_orthonormal("temb_keep_basis", keep_basis)
        temb = TembProjection(vector("temb_mean"), drop_basis, keep_basis)

    rn_rotation = blob("rn_rotation")
    if rn_rotation.shape != (cfg.embedded_dim, cfg.final_dim):
        raise ShapeMismatchError(
            f"rn_rotation shape {rn_rotation.shape} != ({cfg.embedded_dim}, {cfg.final_dim})"
        )
    _check_orthonormal("rn_rotation", rn_rotation)
    rn = RnModel(vector("rn_mean"), rn_rotation, vector("rn_eigenvalues"), whiten=cfg.rn_whiten)

    itq = None
    if cfg.hash_enabled:
        rotation = blob("itq_rotation")
        if rotation.shape != (cfg.bits, cfg.bits):
            raise ShapeMismatchError(f"itq_rotation shape {rotation.shape} != ({cfg.bits}, {cfg.bits})")
        _check_orthonormal("itq_rotation", rotation)
        itq_pca = blob("itq_pca")
        if itq_pca.shape != (cfg.final_dim, cfg.bits):
            raise ShapeMismatchError(f"itq_pca shape {itq_pca.shape} != ({cfg.final_dim}, {cfg.bits})")
        itq = ItqModel(vector("itq_mean"), itq_pca, rotation)

    return PipelineModel(
        config=cfg, pca=pca, codebook=codebook, gmm=gmm, temb=temb, rn=rn, itq=itq
    )
