"""Lattice and torus geometry lab: counting lattice translates met by a
definable set, detecting closures of its image in the torus, and computing
stabilizers of finite unions of affine subtori."""

__version__ = "0.1.0"

from .lattice import Lattice, LatticeError, reduce_to_fundamental, enumerate_height_ball
from .subtorus import (AffineTranslate, RationalSubtorus, complement, intersection,
                       intersection_order, quotient_map, saturate, tangent_projection)
from .definable import (BoundedBlob, ExpSpiral, GraphCurve, LinearFlow, RayFlow, UnionSet,
                        family_from_record, sample_annulus, sample_in_ball)
from .counting import crossing_walk, counting_bound_report, sigma_census
from .closure import (detect_affine_subtorus, essential_closure_estimate,
                      weakly_special_witness)
from .special import (UnionOfTranslates, decompose, phi_injectivity_probe, phi_m, stabilizer)

__all__ = [
    "Lattice", "LatticeError", "reduce_to_fundamental", "enumerate_height_ball",
    "AffineTranslate", "RationalSubtorus", "complement", "intersection", "intersection_order",
    "quotient_map", "saturate", "tangent_projection",
    "BoundedBlob", "ExpSpiral", "GraphCurve", "LinearFlow", "RayFlow", "UnionSet",
    "family_from_record", "sample_annulus", "sample_in_ball",
    "crossing_walk", "counting_bound_report", "sigma_census",
    "detect_affine_subtorus", "essential_closure_estimate", "weakly_special_witness",
    "UnionOfTranslates", "decompose", "phi_injectivity_probe", "phi_m", "stabilizer",
]
