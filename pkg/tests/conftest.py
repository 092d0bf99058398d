import os
import subprocess
import sys

import pytest


@pytest.fixture
def cli():
    """Run the command-line interface in a fresh interpreter.

    Returns (exit_code, stdout, stderr).  A fresh process per call keeps the
    determinism checks honest: nothing can leak between runs through module
    state.  Extra environment variables go in ``env``.
    """

    def run(*args: str, timeout: float = 600.0, env: dict | None = None):
        full_env = None
        if env:
            full_env = dict(os.environ)
            full_env.update(env)
        proc = subprocess.run(
            [sys.executable, "-m", "proxlmc.cli", *args],
            capture_output=True,
            text=True,
            timeout=timeout,
            env=full_env,
        )
        return proc.returncode, proc.stdout, proc.stderr

    return run
