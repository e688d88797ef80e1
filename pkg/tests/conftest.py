import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from biodedup import synth
from biodedup.template import SEGMENT_NAMES, assemble_template

settings.register_profile(
    "ci",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[
        HealthCheck.too_slow,
        HealthCheck.data_too_large,
        HealthCheck.filter_too_much,
    ],
)
settings.register_profile(
    "dev",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def make_template(seed: int, present=None, subject_id=None, quality=None):
    """Random valid template; `present` is an iterable of segment names."""
    rng = np.random.default_rng(seed)
    names = list(SEGMENT_NAMES) if present is None else list(present)
    segments = {
        name: rng.normal(size=192 if name.startswith("finger") else 512)
        for name in names
    }
    return assemble_template(segments, quality=quality, subject_id=subject_id)


@pytest.fixture(scope="session")
def default_config():
    return synth.default_config()


@pytest.fixture(scope="session")
def clean_config():
    """Config without degradation branches; mated scores are reliably high."""
    import dataclasses

    cfg = synth.default_config()
    return dataclasses.replace(
        cfg,
        finger=dataclasses.replace(
            cfg.finger, quality=dataclasses.replace(cfg.finger.quality, p_degraded=0.0)
        ),
        face=dataclasses.replace(
            cfg.face, quality=dataclasses.replace(cfg.face.quality, p_degraded=0.0)
        ),
        iris=dataclasses.replace(
            cfg.iris, quality=dataclasses.replace(cfg.iris.quality, p_degraded=0.0)
        ),
        hard_subject_rate=0.0,
    )
