"""
Behave environment for the stablepath suites.
Puts the repository root on sys.path and configures logging once.
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "features"))

from stablepath.observability import configure_logging  # noqa: E402


def before_all(context):
    configure_logging(verbose=context.config.userdata.getbool("verbose", False))
    context.repo_root = ROOT


def before_scenario(context, scenario):
    context.workdir = Path(tempfile.mkdtemp(prefix="stablepath-"))


def after_scenario(context, scenario):
    shutil.rmtree(context.workdir, ignore_errors=True)
