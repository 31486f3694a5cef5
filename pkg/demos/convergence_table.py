"""Convergence table for linear advection, as written by ``estimate run``.

Runs N = 16 and 32 at eps = 0 and eps = 1e-2 and prints the CSV written by
the sweep.  Passing ``--full`` to the command line tool adds N = 64, 128.
"""
import sys
import tempfile

from dgsiac import RunConfig, run_sweep

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
config = RunConfig(problem="linadv", q=1, N=(16, 32), eps=(0.0, 1e-2), out=out)
result = run_sweep(config, progress=lambda msg: print("running", msg, file=sys.stderr))

print(open(result.paths["csv"]).read())
print("plot data:", result.paths["plot"])
if result.failures:
    sys.exit(1)
