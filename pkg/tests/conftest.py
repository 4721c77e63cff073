import glob
import os
import shlex
import sys

import pytest

HERE = os.path.dirname(__file__)
CORPUS_DIR = os.path.join(HERE, "corpus")
LOOPBACK = [sys.executable, os.path.join(HERE, "solvers", "loopback_smt.py")]


def corpus_files():
    return sorted(glob.glob(os.path.join(CORPUS_DIR, "*.prg")))


def external_solver_cmd():
    """Configured external solver: INVGEN_SMT if set, else the loopback."""
    env = os.environ.get("INVGEN_SMT")
    if env:
        return shlex.split(env)
    return LOOPBACK


@pytest.fixture
def corpus_dir():
    return CORPUS_DIR
