#!/usr/bin/env python
"""Import probe: execute import statements one at a time, report JSON results.

Protocol (JSON over stdin/stdout):

  in:  {"imports": [{"id": <any>, "statement-text": "import foo"}, ...]}
  out: {"results": [{"id": <any>, "ok": true/false,
                     "error_type": null or exception class name,
                     "error_message": null or truncated message}, ...],
        "interpreter": "X.Y.Z"}

Each import runs in a fresh child process of the same interpreter, so a
failing or state-corrupting import can never mask the next one. Exactly one
result per request id, in request order. Exit code 2 on malformed input.

The source below sticks to syntax accepted by both Python 2.7 and 3.x,
because old releases need old interpreters.
"""
from __future__ import print_function

import json
import subprocess
import sys
import threading

MAX_MESSAGE_LEN = 2000
DEFAULT_TIMEOUT = 30.0

try:
    STRING_TYPES = (str, unicode)  # noqa: F821  (Python 2 JSON yields unicode)
except NameError:
    STRING_TYPES = (str,)

# Runs inside the child interpreter; argv[1] is the statement text.
CHILD_SOURCE = (
    "import json, sys\n"
    "try:\n"
    "    exec(sys.argv[1])\n"
    "    sys.stdout.write(json.dumps({'ok': True}))\n"
    "except BaseException:\n"
    "    err = sys.exc_info()[1]\n"
    "    sys.stdout.write(json.dumps({\n"
    "        'ok': False,\n"
    "        'error_type': err.__class__.__name__,\n"
    "        'error_message': str(err)[:%d],\n"
    "    }))\n" % MAX_MESSAGE_LEN
)


def run_one(statement, timeout):
    """Execute one statement in a fresh child interpreter."""
    proc = subprocess.Popen(
        [sys.executable, "-c", CHILD_SOURCE, statement],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    timed_out = [False]

    def kill():
        timed_out[0] = True
        try:
            proc.kill()
        except OSError:
            pass

    timer = threading.Timer(timeout, kill)
    timer.start()
    try:
        stdout, stderr = proc.communicate()
    finally:
        timer.cancel()
    if timed_out[0]:
        return {"ok": False, "error_type": "Timeout",
                "error_message": "import did not finish within %.0f seconds" % timeout}
    try:
        result = json.loads(stdout.decode("utf-8"))
    except ValueError:
        message = stderr.decode("utf-8", "replace")[:MAX_MESSAGE_LEN]
        return {"ok": False, "error_type": "ProbeError",
                "error_message": "child interpreter produced no result: " + message}
    if result.get("ok"):
        return {"ok": True, "error_type": None, "error_message": None}
    return {
        "ok": False,
        "error_type": result.get("error_type"),
        "error_message": result.get("error_message"),
    }


def parse_args(argv):
    timeout = DEFAULT_TIMEOUT
    i = 1
    while i < len(argv):
        if argv[i] == "--timeout" and i + 1 < len(argv):
            timeout = float(argv[i + 1])
            i += 2
        else:
            raise ValueError("unknown argument: %s" % argv[i])
    return timeout


def main(argv):
    try:
        timeout = parse_args(argv)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    raw = sys.stdin.read()
    try:
        request = json.loads(raw)
        imports = request["imports"]
        pairs = [(item["id"], item["statement-text"]) for item in imports]
    except (ValueError, KeyError, TypeError):
        print("error: malformed probe request; expected "
              '{"imports": [{"id": ..., "statement-text": ...}]}', file=sys.stderr)
        return 2
    results = []
    for item_id, statement in pairs:
        if not isinstance(statement, STRING_TYPES):
            print("error: statement-text must be a string", file=sys.stderr)
            return 2
        outcome = run_one(statement, timeout)
        outcome["id"] = item_id
        results.append(outcome)
    interpreter = "%d.%d.%d" % sys.version_info[:3]
    sys.stdout.write(json.dumps({"results": results, "interpreter": interpreter}))
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
