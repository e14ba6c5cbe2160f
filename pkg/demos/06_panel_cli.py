"""Toy county panel through the command line: screen, diagnose, analyze.

Copies the bundled toy panel and config to a scratch directory and runs the
``mtpshift`` commands there.
"""

import shutil
import tempfile
from importlib import resources
from pathlib import Path

import pandas as pd

from mtpshift.cli import main

data = resources.files("mtpshift") / "data"
work = Path(tempfile.mkdtemp(prefix="mtpshift-demo-"))
for name in ("toy_panel.csv", "toy_config.yaml"):
    shutil.copy(str(data / name), work / name)
cfg = str(work / "toy_config.yaml")

print(pd.read_csv(work / "toy_panel.csv").head(), "\n")
for cmd in ("screen", "diagnose-shift", "analyze"):
    print(f"$ mtpshift {cmd} --config toy_config.yaml")
    code = main([cmd, "--config", cfg, "--jobs", "1"])
    print(f"exit code {code}\n")

print("outputs:", sorted(p.name for p in (work / "results").iterdir()))
