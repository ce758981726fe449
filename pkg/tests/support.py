"""Shared fixtures for the test modules: cached profile sets and the slow-test gate."""
import os
import sys
import unittest
from functools import lru_cache
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from profile_service import build_profiles, profile_grid  # noqa: E402
from virial_service import make_virial_profile  # noqa: E402

TEST_PROFILE_N = 16384

slow = unittest.skipUnless(os.environ.get("BOLHAS_SLOW_TESTS") == "1", "BOLHAS_SLOW_TESTS=1 para correr")


@lru_cache(maxsize=None)
def cached_profiles(k: int = 4, n: int = TEST_PROFILE_N, with_coercivity: bool = False):
    return build_profiles(k, profile_grid(n), with_coercivity=with_coercivity)


@lru_cache(maxsize=None)
def cached_virial(c: float = 0.05, R: float = 10.0):
    return make_virial_profile(c, R)


def scenario_file(directory, text: str) -> str:
    path = os.path.join(str(directory), "scenario.ini")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path
