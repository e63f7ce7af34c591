from __future__ import annotations

import sys
from pathlib import Path

PROBE_SCRIPT = Path(__file__).resolve().parent.parent / "import_probe.py"

# the integration tests reuse the primary suite's fixture builders
sys.path.insert(0, str(PROBE_SCRIPT.parent.parent / "tests"))
