"""Benchmark functions, the SEIR reproduction number and Burgers' kinetic energy."""
from dataclasses import dataclass
from typing import Callable

from .analytic import f4_eval_grad, f5_eval_grad, linear_eval_grad
from .burgers import (
    KINETIC_BOX,
    KINETIC_GRID,
    BurgersGrid,
    CFLError,
    burgers_solve,
    kinetic_energy_and_grad,
    kinetic_energy_batch,
    kinetic_eval_grad,
    sensitivity_solve,
)
from .sampling import DomainBox, SampleSet, SamplingError, sample_uniform
from .seir import PARAM_NAMES as R0_PARAMS, r0_eval_grad


@dataclass(frozen=True)
class Problem:
    name: str
    box: DomainBox
    evaluate: Callable


def get_problem(name, box=None) -> Problem:
    """Look up a named problem. ``r0`` has no built-in box and needs ``box``."""
    if name == "f4":
        return Problem(name, box or DomainBox.cube(40), f4_eval_grad)
    if name == "f5":
        return Problem(name, box or DomainBox.cube(20), f5_eval_grad)
    if name == "burgers_K":
        return Problem(name, box or DomainBox.from_pairs(KINETIC_BOX), kinetic_eval_grad)
    if name == "r0":
        if box is None:
            raise ValueError("r0 needs user-supplied parameter ranges (8 intervals)")
        if box.dim != 8:
            raise ValueError("r0 ranges must cover 8 parameters")
        return Problem(name, box, r0_eval_grad)
    raise ValueError(f"unknown problem {name!r}")


PROBLEMS = ("f4", "f5", "r0", "burgers_K")
