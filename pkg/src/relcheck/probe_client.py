"""Client side of the import-probe protocol for live-mode validation.

The probe is an external script executed by the target interpreter; the
contract is JSON over stdin/stdout: {"imports": [{"id": n, "statement-text":
"..."}]} in, {"results": [{"id", "ok", "error_type", "error_message"}],
"interpreter": "..."} out. One result per request id, in request order.
"""
from __future__ import annotations

import json
import os
import subprocess
from pathlib import Path

from .checker import ProbeOutcome


class ProbeError(RuntimeError):
    """The probe process failed or broke the protocol."""


class SubprocessProbe:
    """Runs a probe script in a chosen interpreter for each batch of imports."""

    def __init__(self, probe_script: str | Path, interpreter: str = "python3",
                 extra_sys_path: tuple[str, ...] = (), timeout: float = 300.0):
        self.probe_script = str(probe_script)
        self.interpreter = interpreter
        self.extra_sys_path = tuple(str(p) for p in extra_sys_path)
        self.timeout = timeout
        self.last_interpreter: str | None = None

    def __call__(self, statements) -> list[ProbeOutcome]:
        statements = list(statements)
        if not statements:
            return []
        request = {
            "imports": [
                {"id": i, "statement-text": stmt} for i, stmt in enumerate(statements)
            ]
        }
        env = dict(os.environ)
        if self.extra_sys_path:
            existing = env.get("PYTHONPATH")
            parts = list(self.extra_sys_path) + ([existing] if existing else [])
            env["PYTHONPATH"] = os.pathsep.join(parts)
        try:
            proc = subprocess.run(
                [self.interpreter, self.probe_script],
                input=json.dumps(request).encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
                env=env,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ProbeError(f"probe invocation failed: {exc}") from exc
        if proc.returncode != 0:
            raise ProbeError(
                f"probe exited with {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')}"
            )
        try:
            payload = json.loads(proc.stdout.decode("utf-8"))
            results = payload["results"]
        except (ValueError, KeyError) as exc:
            raise ProbeError(f"probe produced malformed output: {exc}") from exc
        self.last_interpreter = payload.get("interpreter")
        if len(results) != len(statements):
            raise ProbeError(
                f"probe returned {len(results)} results for {len(statements)} imports"
            )
        outcomes = []
        for i, obj in enumerate(results):
            if obj.get("id") != i:
                raise ProbeError(f"probe result {i} carries id {obj.get('id')!r}")
            outcomes.append(ProbeOutcome(
                ok=bool(obj.get("ok")),
                error_type=obj.get("error_type"),
                error_message=obj.get("error_message"),
            ))
        return outcomes
