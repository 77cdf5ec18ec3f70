import numpy as np
import pytest

from gazealign.embed import EmbeddedScanpath
from gazealign.model import Fixation, Group, Scanpath, StimulusImage


def make_fixations(coords, start0=0.0, dur=200.0):
    fixes = []
    t = start0
    for i, (x, y) in enumerate(coords):
        fixes.append(Fixation(index=i, x=x, y=y, start_ms=t, duration_ms=dur))
        t += dur + 50.0
    return tuple(fixes)


def make_scanpath(subject="s1", group=Group.STUDENT, stimulus="img1", coords=((10, 10),), labels=None):
    return Scanpath(
        subject_id=subject,
        group=group,
        stimulus_id=stimulus,
        fixations=make_fixations(coords),
        aoi_labels=tuple(labels) if labels is not None else None,
    )


def make_image(stimulus="img1", width=300, height=200):
    yy, xx = np.mgrid[0:height, 0:width]
    pixels = ((xx * 7 + yy * 3) % 251).astype(np.uint8)
    return StimulusImage(stimulus_id=stimulus, width=width, height=height, pixels=pixels)


def make_embedded(subject, stimulus, vectors, group=Group.STUDENT):
    return EmbeddedScanpath(
        subject_id=subject,
        group=group,
        stimulus_id=stimulus,
        vectors=np.asarray(vectors, dtype=np.float32),
    )


@pytest.fixture
def grad_image():
    return make_image()
