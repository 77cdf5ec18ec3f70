"""Synthetic labeled datasets with controllable group structure.

Group membership is encoded in WHERE subjects look and in WHAT ORDER:
each group owns a set of texture prototypes (blob, ring, bar, or
checkerboard, with parameters drawn once per dataset) and a fixed
visiting order over them. Every stimulus renders all prototypes at
stimulus-specific anchor locations on a faint procedural background, so
a prototype looks alike across stimuli while different prototypes embed
differently. That cross-stimulus consistency is what lets classifiers
generalize to held-out images. Individual scanpaths cycle their group's
order, add Gaussian spatial jitter, and optionally swap adjacent
fixations.

All randomness flows through one Philox counter-based generator in a
fixed consumption order: dataset-level draws first (prototype parameters,
expert order, student order), then per stimulus (background, anchor
cells, anchor offsets), then per subject in id order and per stimulus
(length, jitter pairs, durations, saccade gaps, swap draws). Draws are
consumed even when a parameter disables their effect, so datasets with
the same seed differ only in the perturbed quantity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import (
    DatasetManifest,
    Fixation,
    Group,
    Scanpath,
    load_manifest,
    write_pgm,
    write_scanpaths,
)

_ANCHOR_MARGIN = 60


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1234
    n_experts: int = 12
    n_students: int = 24
    n_stimuli: int = 6
    image_size: tuple[int, int] = (960, 540)
    len_expert: tuple[int, int] = (8, 12)
    len_student: tuple[int, int] = (12, 18)
    n_prototypes: int = 4
    jitter_px: float = 4.0
    swap_prob: float = 0.1

    def __post_init__(self):
        for name in ("n_experts", "n_students", "n_stimuli", "n_prototypes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("len_expert", "len_student"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} must be a valid range of counts >= 1")
        if self.jitter_px < 0:
            raise ConfigError("jitter_px must be >= 0")
        if not 0.0 <= self.swap_prob <= 1.0:
            raise ConfigError("swap_prob must be in [0, 1]")
        w, h = self.image_size
        if w < 2 * _ANCHOR_MARGIN + 100 or h < 2 * _ANCHOR_MARGIN + 100:
            raise ConfigError("image_size too small for anchor placement")


def _draw_prototype_params(kind: int, rng) -> dict:
    params = {"kind": kind, "amp": float(rng.uniform(85.0, 130.0)),
              "sign": 1.0 if rng.random() < 0.5 else -1.0}
    if kind == 0:  # gaussian blob
        params["sigma"] = float(rng.uniform(16.0, 22.0))
    elif kind == 1:  # ring
        params["radius"] = float(rng.uniform(20.0, 30.0))
        params["width"] = float(rng.uniform(4.0, 7.0))
    elif kind == 2:  # oriented bar
        params["theta"] = float(rng.uniform(0.0, np.pi))
        params["across"] = float(rng.uniform(4.0, 7.0))
        params["along"] = float(rng.uniform(22.0, 32.0))
    else:  # checkerboard disc
        params["cell"] = int(rng.integers(5, 10))
        params["sigma"] = float(rng.uniform(18.0, 24.0))
    return params


def _render_prototype(img: np.ndarray, x: float, y: float, p: dict) -> None:
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx - x
    dy = yy - y
    r2 = dx * dx + dy * dy
    kind = p["kind"]
    amp = p["amp"] * p["sign"]
    if kind == 0:
        img += amp * np.exp(-r2 / (2.0 * p["sigma"] ** 2))
    elif kind == 1:
        ring = np.exp(-((np.sqrt(r2) - p["radius"]) ** 2) / (2.0 * p["width"] ** 2))
        img += amp * ring
    elif kind == 2:
        along = dx * np.cos(p["theta"]) + dy * np.sin(p["theta"])
        across = -dx * np.sin(p["theta"]) + dy * np.cos(p["theta"])
        img += amp * np.exp(
            -(across**2) / (2.0 * p["across"] ** 2) - (along**2) / (2.0 * p["along"] ** 2)
        )
    else:
        checker = ((xx // p["cell"] + yy // p["cell"]) % 2) * 2.0 - 1.0
        img += amp * checker * np.exp(-r2 / (2.0 * p["sigma"] ** 2))


def _anchor_grid(cfg: SynthConfig, n_anchors: int) -> tuple[int, int, int, int]:
    w, h = cfg.image_size
    inset_w = w - 2 * _ANCHOR_MARGIN
    inset_h = h - 2 * _ANCHOR_MARGIN
    cols = rows = 0
    for cell in (140, 120, 100):  # prefer widely spaced anchors
        cols = max(1, inset_w // cell)
        rows = max(1, inset_h // cell)
        if cols * rows >= n_anchors:
            break
    if cols * rows < n_anchors:
        raise ConfigError(
            f"{n_anchors} anchors do not fit a {cols}x{rows} grid; "
            "enlarge image_size or lower n_prototypes"
        )
    return cols, rows, inset_w, inset_h


def _make_stimulus(cfg: SynthConfig, prototypes: list[dict], rng) -> tuple[np.ndarray, np.ndarray]:
    """Render one stimulus; returns (pixels, anchor coordinates (2P, 2))."""
    w, h = cfg.image_size
    fx = float(rng.uniform(1.0, 3.0))
    fy = float(rng.uniform(1.0, 3.0))
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    yy, xx = np.mgrid[0:h, 0:w]
    img = 112.0 + 6.0 * np.sin(2.0 * np.pi * fx * xx / w + phase) * np.cos(
        2.0 * np.pi * fy * yy / h
    )

    n_anchors = len(prototypes)
    cols, rows, inset_w, inset_h = _anchor_grid(cfg, n_anchors)
    cells = rng.permutation(cols * rows)[:n_anchors]
    anchors = np.zeros((n_anchors, 2), dtype=np.float64)
    for a, cell in enumerate(cells):
        cy, cx = divmod(int(cell), cols)
        base_x = _ANCHOR_MARGIN + (cx + 0.5) * inset_w / cols
        base_y = _ANCHOR_MARGIN + (cy + 0.5) * inset_h / rows
        ax = base_x + float(rng.uniform(-12.0, 12.0))
        ay = base_y + float(rng.uniform(-12.0, 12.0))
        anchors[a] = (ax, ay)
        _render_prototype(img, ax, ay, prototypes[a])
    pixels = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return pixels, anchors


def _subject_scanpath(
    subject: str,
    group: Group,
    stimulus_id: str,
    anchors: np.ndarray,
    order: np.ndarray,
    length_range: tuple[int, int],
    cfg: SynthConfig,
    rng,
) -> Scanpath:
    w, h = cfg.image_size
    lo, hi = length_range
    length = int(rng.integers(lo, hi + 1))
    visit = [int(order[t % len(order)]) for t in range(length)]
    noise = rng.normal(0.0, 1.0, size=(length, 2))
    durations = rng.integers(150, 401, size=length)
    gaps = rng.integers(20, 81, size=length)
    swaps = rng.random(size=max(length - 1, 1))
    if length > 1:
        for t in range(length - 1):
            if swaps[t] < cfg.swap_prob:
                visit[t], visit[t + 1] = visit[t + 1], visit[t]

    fixations = []
    labels = []
    t_ms = 0
    for pos, a in enumerate(visit):
        x = float(np.clip(anchors[a, 0] + cfg.jitter_px * noise[pos, 0], 0, w - 1))
        y = float(np.clip(anchors[a, 1] + cfg.jitter_px * noise[pos, 1], 0, h - 1))
        t_ms += int(gaps[pos])
        fixations.append(
            Fixation(
                index=pos,
                x=round(x, 2),
                y=round(y, 2),
                start_ms=float(t_ms),
                duration_ms=float(durations[pos]),
            )
        )
        labels.append(f"A{a}")
        t_ms += int(durations[pos])
    return Scanpath(
        subject_id=subject,
        group=group,
        stimulus_id=stimulus_id,
        fixations=tuple(fixations),
        aoi_labels=tuple(labels),
    )


def generate(cfg: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Write stimuli, per-subject scanpath CSVs, and a manifest under out_dir."""
    out_dir = Path(out_dir)
    (out_dir / "stimuli").mkdir(parents=True, exist_ok=True)
    (out_dir / "scanpaths").mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))

    # dataset-level structure: experts own prototypes [0, p), students [p, 2p)
    p = cfg.n_prototypes
    prototypes = [_draw_prototype_params(k % 4, rng) for k in range(2 * p)]
    orders = {
        Group.EXPERT: rng.permutation(p),
        Group.STUDENT: p + rng.permutation(p),
    }

    stimulus_ids = [f"img{i + 1:02d}" for i in range(cfg.n_stimuli)]
    anchors_by_stim: dict[str, np.ndarray] = {}
    for sid in stimulus_ids:
        pixels, anchors = _make_stimulus(cfg, prototypes, rng)
        write_pgm(out_dir / "stimuli" / f"{sid}.pgm", pixels)
        anchors_by_stim[sid] = anchors

    subjects = [(f"e{i + 1:02d}", Group.EXPERT) for i in range(cfg.n_experts)]
    subjects += [(f"s{i + 1:02d}", Group.STUDENT) for i in range(cfg.n_students)]
    scanpath_files = []
    for subject, group in subjects:
        length_range = cfg.len_expert if group is Group.EXPERT else cfg.len_student
        paths = []
        for sid in stimulus_ids:
            paths.append(
                _subject_scanpath(
                    subject,
                    group,
                    sid,
                    anchors_by_stim[sid],
                    orders[group],
                    length_range=length_range,
                    cfg=cfg,
                    rng=rng,
                )
            )
        rel = f"scanpaths/{subject}.csv"
        write_scanpaths(out_dir / rel, paths)
        scanpath_files.append(rel)

    manifest = {
        "stimuli": [
            {"id": sid, "image": f"stimuli/{sid}.pgm"} for sid in stimulus_ids
        ],
        "scanpaths": scanpath_files,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return load_manifest(manifest_path)
