import os
import subprocess
import sys

import pytest

from mgst import kernels


def _selected(env_value):
    env = dict(os.environ)
    env.pop("MGST_PURE_PYTHON", None)
    if env_value is not None:
        env["MGST_PURE_PYTHON"] = env_value
    proc = subprocess.run([sys.executable, "-c", "from mgst import kernels; print(kernels.get_backend())"],
                          capture_output=True, text=True, env=env, check=True)
    return proc.stdout.strip()


def test_env_forces_numpy():
    assert _selected("1") == "numpy"


def test_default_prefers_compiled():
    expected = "cython" if "cython" in kernels.available_backends() else "numpy"
    assert _selected(None) == expected
    assert _selected("0") == expected


def test_numpy_always_available():
    assert "numpy" in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError, match="fortran"):
        kernels.set_backend("fortran")


def test_using_backend_restores():
    before = kernels.get_backend()
    with kernels.using_backend("numpy"):
        assert kernels.get_backend() == "numpy"
    assert kernels.get_backend() == before
