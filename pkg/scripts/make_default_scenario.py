#!/usr/bin/env python3
"""Regenerate the bundled reference scenario file."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from goaltensor.scenario import default_document, load_scenario, save_scenario

out = Path(__file__).resolve().parents[1] / "scenarios" / "default.json"
out.parent.mkdir(exist_ok=True)
save_scenario(default_document(), out)
load_scenario(out)  # round-trip check
print(f"wrote {out}")
