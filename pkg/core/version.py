import subprocess

from .settings import PROJECT_ROOT

__version__ = "0.3.0"


def describe_version() -> str:
    """git-describe string when run from a checkout, package version otherwise"""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=PROJECT_ROOT,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        described = out.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"
