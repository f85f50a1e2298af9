"""Access to the bundled desk-scale fixtures.

The package ships a small 10-class network (frozen weights), enrollment,
probe and adversary image sets, and a ready-to-run harness config.  They
exist so the attack/verification pipeline can run end to end in seconds;
they are data, not something the package trains.  The generator script
lives in ``tools/gen_fixtures.py`` in the source repository.
"""

import os
from importlib.resources import files

from featmimic.harness import HarnessConfig, load_config
from featmimic.modelio import load_network
from featmimic.network import NetworkSpec


def data_dir() -> str:
    return os.fspath(files("featmimic") / "data")


def bundled_config_path() -> str:
    return os.path.join(data_dir(), "config.json")


def load_bundled_config() -> HarnessConfig:
    return load_config(bundled_config_path())


def bundled_network() -> NetworkSpec:
    base = data_dir()
    return load_network(os.path.join(base, "net.txt"), os.path.join(base, "net.weights"))
