"""Stop a run, write a checkpoint, and continue from it bit-for-bit.

    python demos/checkpoint_resume.py
"""

import tempfile
from pathlib import Path

import numpy as np

from viscolimit.checkpoint import load_checkpoint, save_checkpoint
from viscolimit.config import from_dict
from viscolimit.initial import initial_state
from viscolimit.solver import DtPolicy, run

cfg = from_dict({"grid": {"resolution": 32}, "params": {"epsilons": [1e-2]}})
params = cfg.params_for(1e-2)
policy = DtPolicy(fixed=1e-3)

straight = run(initial_state(cfg), params, 0.2, policy, 0.1, layer=False)

half = run(initial_state(cfg), params, 0.1, policy, 0.1, layer=False)
with tempfile.TemporaryDirectory() as tmp:
    path = save_checkpoint(half.final, params, Path(tmp) / "half.oldb")
    state, params_back = load_checkpoint(path)
    print(f"checkpoint: {path.stat().st_size} bytes at t={state.t:g}")
resumed = run(state, params_back, 0.1, policy, 0.1, layer=False)

same = np.array_equal(resumed.final.u_hat.coeffs, straight.final.u_hat.coeffs)
print(f"resumed velocity identical to the uninterrupted run: {same}")
