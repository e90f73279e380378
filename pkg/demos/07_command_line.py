"""Driving the package from the command line.

Each subcommand writes a CSV plus a JSON manifest (config, seed, versions,
timing) under ``$SCRAMBLE_SWAP_OUT`` or ``./out``.
"""
# %%
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

root = Path(tempfile.mkdtemp())
env = dict(os.environ, SCRAMBLE_SWAP_OUT=str(root))


def run(*args):
    cmd = [sys.executable, "-m", "scramble_swap.cli", *args]
    r = subprocess.run(cmd, env=env, capture_output=True, text=True)
    print("$ scramble-swap", " ".join(args), "->", r.returncode)
    if r.stderr:
        print(r.stderr.strip())
    return r.returncode


# %% Runs that succeed
run("haar-bench", "--da", "2", "--db", "8,32", "--draws", "200", "--seed", "1")
run("measproj", "--variant", "sinc", "--nmax", "5")
run("bounds", "--d", "2", "--m", "1", "--pairs", "5", "--states", "200")
for manifest in sorted(root.glob("*/*/manifest.json")):
    m = json.loads(manifest.read_text())
    print(manifest.parent.parent.name, "seed", m["seed"], "outputs", m["outputs"])
print((next(root.glob("haar-bench/*/data.csv"))).read_text())

# %% Runs that are refused: bad arguments exit with 2, oversized requests with 3
run("haar-bench", "--da", "2", "--db", "8", "--draws", "10")
run("measproj", "--variant", "cosine", "--eps", "1e-3", "--nmax", "1000000")
