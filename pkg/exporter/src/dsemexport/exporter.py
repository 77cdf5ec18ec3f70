"""Compute deep patch features and write .dsem interchange files.

Preprocessing per patch, recorded in export_meta.json:
  1. crop patch_size x patch_size grayscale (engine-identical clamp rules)
  2. scale to [0, 1] float32
  3. bilinear-resize to input_size x input_size (align_corners False)
  4. replicate the single channel to three
  5. normalize per channel with the network's published ImageNet constants
  6. forward through the VGG-16 convolutional stack (five conv blocks with
     ReLU and max-pooling), giving 512 x 7 x 7 at input 224
  7. permute to height x width x channel and flatten row-major

Inference is single-threaded and gradient-free so that bit-identical
patches always produce bit-identical rows. Files are written to a
temporary name and renamed, one per scanpath.

Weight sources: a local state-dict path, 'imagenet' (torchvision's
published weights, which needs either a primed cache or network access),
or 'seeded:<n>' (deterministic random initialization; useful for
validating the interchange path, not for feature quality).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torchvision.models import vgg16

from .cropping import crop_patch
from .dataset import Manifest, load_gray_image, load_manifest, load_scanpaths

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

DSEM_MAGIC = b"DSEM"
DSEM_VERSION = 1


class WeightsUnavailable(Exception):
    pass


@dataclass(frozen=True)
class ExportConfig:
    manifest: Path
    out_dir: Path
    patch_size: int = 100
    input_size: int = 224
    weights: str = "imagenet"
    batch_size: int = 8


def load_network(weights: str) -> tuple[torch.nn.Module, str]:
    """Build the VGG-16 convolutional stack; returns (module, weights note)."""
    if weights == "imagenet":
        try:
            from torchvision.models import VGG16_Weights

            model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
            note = "torchvision VGG16_Weights.IMAGENET1K_V1"
        except Exception as exc:
            raise WeightsUnavailable(
                f"could not obtain ImageNet weights ({exc}); pass a local "
                "state-dict path or seeded:<n>"
            ) from None
    elif weights.startswith("seeded:"):
        seed = int(weights.partition(":")[2])
        torch.manual_seed(seed)
        model = vgg16(weights=None)
        note = f"random initialization, torch.manual_seed({seed})"
    else:
        path = Path(weights)
        if not path.is_file():
            raise WeightsUnavailable(f"weights file not found: {path}")
        state = torch.load(path, map_location="cpu", weights_only=True)
        model = vgg16(weights=None)
        try:
            model.load_state_dict(state)
        except RuntimeError:
            model.features.load_state_dict(state)
        note = f"local state dict {path.name}"
    features = model.features.eval()
    for p in features.parameters():
        p.requires_grad_(False)
    return features, note


def weights_checksum(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        h.update(name.encode())
        h.update(tensor.numpy().tobytes())
    return h.hexdigest()


def preprocess(patches: np.ndarray, input_size: int) -> torch.Tensor:
    """(n, S, S) uint8 patches -> (n, 3, input, input) normalized tensor."""
    x = torch.from_numpy(patches.astype(np.float32) / 255.0).unsqueeze(1)
    x = F.interpolate(x, size=(input_size, input_size), mode="bilinear",
                      align_corners=False)
    x = x.repeat(1, 3, 1, 1)
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (x - mean) / std


def embed_patches(features: torch.nn.Module, patches: np.ndarray,
                  input_size: int, batch_size: int) -> np.ndarray:
    rows = []
    with torch.no_grad():
        for start in range(0, len(patches), batch_size):
            batch = preprocess(patches[start : start + batch_size], input_size)
            out = features(batch)  # (b, C, H, W)
            out = out.permute(0, 2, 3, 1).reshape(out.shape[0], -1)
            rows.append(out.numpy().astype(np.float32))
    return np.concatenate(rows, axis=0)


def output_dim(features: torch.nn.Module, input_size: int) -> int:
    with torch.no_grad():
        out = features(torch.zeros(1, 3, input_size, input_size))
    return int(out.numel())


def write_dsem(path: Path, vectors: np.ndarray) -> None:
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    n, dim = arr.shape
    tmp = path.with_suffix(".dsem.tmp")
    with open(tmp, "wb") as fh:
        fh.write(DSEM_MAGIC)
        fh.write(struct.pack("<III", DSEM_VERSION, dim, n))
        fh.write(arr.astype("<f4").tobytes())
    tmp.replace(path)


def export_embeddings(cfg: ExportConfig) -> dict:
    """Run the export; returns the metadata written to export_meta.json."""
    torch.set_num_threads(1)  # bit-reproducible convolutions
    manifest: Manifest = load_manifest(cfg.manifest)
    features, weights_note = load_network(cfg.weights)
    dim = output_dim(features, cfg.input_size)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    images = {sid: load_gray_image(path) for sid, path in manifest.stimuli}
    n_files = 0
    for csv_path in manifest.scanpath_files:
        for sp in load_scanpaths(csv_path):
            image = images[sp.stimulus_id]
            patches = np.stack([
                crop_patch(image, f.x, f.y, cfg.patch_size) for f in sp.fixations
            ])
            vectors = embed_patches(features, patches, cfg.input_size, cfg.batch_size)
            assert vectors.shape == (len(sp.fixations), dim)
            write_dsem(cfg.out_dir / f"{sp.subject_id}_{sp.stimulus_id}.dsem", vectors)
            n_files += 1

    meta = {
        "network": "vgg16-convolutional-stack",
        "weights": weights_note,
        "weights_sha256": weights_checksum(features),
        "patch_size": cfg.patch_size,
        "input_size": cfg.input_size,
        "interpolation": "bilinear, align_corners=False",
        "channel_replication": "grayscale replicated to 3 channels before normalization",
        "normalization_mean": list(IMAGENET_MEAN),
        "normalization_std": list(IMAGENET_STD),
        "flatten_order": "height, width, channel (row-major)",
        "dim": dim,
        "files": n_files,
    }
    (cfg.out_dir / "export_meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    return meta
