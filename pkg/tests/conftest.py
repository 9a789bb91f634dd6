import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fogshield.config import load_config, resolve_preset
from fogshield.runner import run_scenario


@pytest.fixture(scope="session")
def preset_runs():
    """Session cache of full scenario runs keyed by (preset, serial, run#).

    Several test modules need the same preset outcomes; running each
    pipeline once keeps the suite fast without weakening any assertion.
    """
    cache = {}

    def get(name, serial=True, rerun=0):
        key = (name, serial, rerun)
        if key not in cache:
            config = load_config(resolve_preset(name))
            cache[key] = run_scenario(config, serial=serial,
                                      sample_resources=False)
        return cache[key]

    return get
