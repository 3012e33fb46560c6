"""Fine-scale cleanup pass over reconstructed positions.

Reconstruction is purely local: each fine vertex follows one coarse
triangle.  Across coarse triangle borders that can leave small seams
or pinches.  Refinement runs a few local-global rounds on the fine
mesh with every vertex softly attracted to its reconstructed position
(screened deformation), which restores local rigidity while keeping
the reconstruction as the attractor.  Vertices listed in ``pin_ids``
(typically those riding on coarse handle regions) are hard-pinned so
the user's constraints cannot drift.
"""

from dataclasses import dataclass

import numpy as np

from .arap import ArapSystem, default_soft_weight
from .errors import InvalidParams, SizeMismatch


@dataclass
class RefineParams:
    """Knobs for the refinement pass.

    ``fit_weight`` defaults to 10x the largest weight-Laplacian
    diagonal of the fine mesh (scale-aware stiffness); ``pin_handles``
    controls whether ``pin_ids`` passed to :func:`refine` are honored.
    """

    iterations: int = 3
    fit_weight: float = None
    pin_handles: bool = True


def _system_for(mesh, fit_weight, pins):
    # parked on the mesh's own cache so it dies with the mesh
    key = ("refine", float(fit_weight), pins.tobytes())
    if key not in mesh._cache:
        n = mesh.n_vertices
        soft = np.setdiff1d(np.arange(n), pins)
        mesh._cache[key] = ArapSystem(
            mesh, hard_ids=pins, soft_ids=soft, soft_weight=fit_weight)
    return mesh._cache[key]


def refine(fine_rest, reconstructed, params=None, pin_ids=None,
           return_trace=False):
    """Screened deformation of ``reconstructed`` toward local rigidity.

    Parameters
    ----------
    fine_rest : Mesh
        Rest-state fine mesh (supplies connectivity and rest edges).
    reconstructed : (n, 3) array
        Target positions the result should stay close to; also the
        initial guess.
    params : RefineParams, optional
    pin_ids : (k,) int array, optional
        Vertices hard-pinned to their reconstructed positions (ignored
        when ``params.pin_handles`` is false).
    return_trace : bool
        Also return the combined objective (deformation energy plus
        fit penalty) after each iteration.

    Returns
    -------
    positions, or (positions, trace) with ``return_trace``.
    ``iterations == 0`` returns a bit-identical copy of the input.
    """
    if params is None:
        params = RefineParams()
    if params.iterations < 0:
        raise InvalidParams("iterations must be >= 0")
    rec = np.array(reconstructed, dtype=np.float64)
    if rec.shape != (fine_rest.n_vertices, 3):
        raise SizeMismatch(
            f"reconstructed must be ({fine_rest.n_vertices}, 3), got "
            f"{rec.shape}")
    if params.iterations == 0:
        return (rec, []) if return_trace else rec

    fit_weight = params.fit_weight
    if fit_weight is None:
        fit_weight = default_soft_weight(fine_rest)
    if not fit_weight > 0.0:
        raise InvalidParams("fit_weight must be positive")
    if pin_ids is None or not params.pin_handles:
        pins = np.zeros(0, dtype=np.int64)
    else:
        pins = np.unique(np.asarray(pin_ids, dtype=np.int64))
        if len(pins) and (pins[0] < 0 or pins[-1] >= fine_rest.n_vertices):
            raise InvalidParams("pin ids out of range")

    system = _system_for(fine_rest, fit_weight, pins)
    soft_targets = rec[system.soft_ids]
    hard_targets = rec[pins] if len(pins) else None
    positions = rec
    trace = []
    for _ in range(params.iterations):
        rotations = system.fit_rotations(positions)
        positions = system.global_step(rotations, hard_targets,
                                       soft_targets)
        trace.append(system.objective(positions, rotations, soft_targets))
    return (positions, trace) if return_trace else positions
