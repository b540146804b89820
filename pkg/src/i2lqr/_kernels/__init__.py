"""Backend selection for the trajectory-optimizer primitives.

A compiled Cython kernel handles the bicycle-model hot path when the
extension built; everything else (and the I2LQR_BACKEND=python override)
runs on the numpy backend. Both implement the same primitive set:
rollout, linearize_traj, cost, cost_derivs, backward, forward.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from .py_backend import BARRIER_EXP_CAP, PackedProblem, PyKernel, pack_problem

try:
    from . import _core
except ImportError:  # extension not built; numpy fallback
    _core = None

__all__ = [
    "BARRIER_EXP_CAP",
    "PackedProblem",
    "PyKernel",
    "pack_problem",
    "make_kernel",
    "active_backend",
    "compiled_available",
]


def compiled_available() -> bool:
    return _core is not None


def _mode() -> str:
    mode = os.environ.get("I2LQR_BACKEND", "auto")
    if mode not in ("auto", "python", "compiled"):
        raise ValueError(f"I2LQR_BACKEND must be auto|python|compiled, got {mode!r}")
    if mode == "compiled" and _core is None:
        raise RuntimeError("I2LQR_BACKEND=compiled but the extension is not built")
    return mode


def active_backend() -> str:
    """Name of the backend bicycle problems will run on."""
    return "compiled" if (_mode() != "python" and _core is not None) else "python"


def make_kernel(packed: PackedProblem, model):
    """Kernel for one solve. Compiled only for bicycle-model problems."""
    if _mode() != "python" and _core is not None and getattr(model, "compiled_eligible", False):
        p = model.params
        data = SimpleNamespace(
            x0=packed.x0, z=packed.z, P=packed.P, R=packed.R,
            q1=packed.q1, q2=packed.q2, a_max=packed.a_max, d_max=packed.d_max,
            obs=packed.obs, nobs=packed.nobs, N=packed.N,
            model_dt=p.dt, model_lf=p.lf, model_lr=p.lr,
        )
        return _core.CoreBicycleKernel(data)
    return PyKernel(packed, model)
