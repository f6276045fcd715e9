"""Numerical defaults, collected in one place.

Every tolerance, grid size and box size used by the library has its default
here so that runs are reproducible from the manifest alone.
"""

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace


@dataclass(frozen=True)
class Tolerances:
    abs: float = 1e-10
    rel: float = 1e-8
    # final solution profiles are re-integrated at these tolerances
    profile_abs: float = 1e-12
    profile_rel: float = 1e-12
    profile_steps: int = 2000  # max step = T / profile_steps
    residual: float = 1e-6


@dataclass(frozen=True)
class Defaults:
    tol: Tolerances = field(default_factory=Tolerances)
    escape_factor: float = 1e6  # escape bound = escape_factor * (1 + box size)
    quad_abs: float = 1e-10
    sign_samples: int = 400
    # growth / oscillation probes
    probe_s_small: tuple = (1e-2, 1e-8)
    probe_s_large: float = 1e8
    ro_tolerance: float = 0.05
    derivative_inflation: float = 1.05
    # eigenvalue bisection
    eig_rtol: float = 1e-9
    eig_ode_tol: float = 1e-13
    eig_ceiling: float = 1e8
    # search boxes
    box_size: float = 32.0
    box_doublings: int = 4
    box_c_min: float = 1e-6
    grid_cells: int = 16
    max_depth: int = 6
    positivity_floor: float = 1e-8
    bc_tol: float = 1e-7
    newton_tol: float = 1e-11
    newton_max_iter: int = 40
    fd_step: float = 1e-6
    neumann_seeds: int = 240
    # degree computation
    winding_samples: int = 4
    winding_refine: int = 14
    perturb_fraction: float = 1e-3
    perturb_retries: int = 5
    # certificate margins
    alpha_margin: float = 0.01
    lienard_shrink: float = 0.05
    seed: int = 0

    def with_tolerances(self, abs_tol=None, rel_tol=None) -> "Defaults":
        tol = self.tol
        if abs_tol is not None:
            tol = replace(tol, abs=abs_tol)
        if rel_tol is not None:
            tol = replace(tol, rel=rel_tol)
        return replace(self, tol=tol)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULTS = Defaults()


@contextmanager
def override_tolerances(abs_tol=None, rel_tol=None):
    """Temporarily change the integration tolerances seen by every module."""
    saved = DEFAULTS.tol
    object.__setattr__(DEFAULTS, "tol", DEFAULTS.with_tolerances(abs_tol, rel_tol).tol)
    try:
        yield DEFAULTS
    finally:
        object.__setattr__(DEFAULTS, "tol", saved)
