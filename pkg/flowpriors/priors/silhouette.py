"""Silhouette edge alignment: depth and flow edges should sit on the mask boundary."""

from typing import Optional

import numpy as np

from ..fields.dense import DepthField, FlowField, MaskField
from ..geometry import SignedDistanceField, mask_sdf, weighted_grad_norm
from .types import ConstraintResult, Tolerances


def c_silh(
    depth: DepthField,
    flow: FlowField,
    mask: MaskField,
    tol: Tolerances,
    sdf: Optional[SignedDistanceField] = None,
) -> ConstraintResult:
    """
    Mean over the grid of (|grad D| + |grad F|) weighted by the saturated
    distance to the mask boundary.

    The distance field is a constant weight; pass ``sdf`` to reuse one.

    Raises:
        DegenerateMaskError: if the mask has no boundary
    """
    if sdf is None:
        sdf = mask_sdf(mask, tol.tau_sat)
    weights = np.abs(sdf.values) / depth.grid.size
    depth_terms, grad_depth = weighted_grad_norm(depth.values, weights)
    flow_terms, grad_flow = weighted_grad_norm(flow.values, weights)
    terms = depth_terms + flow_terms
    return ConstraintResult(float(np.sum(terms)), grad_depth=grad_depth, grad_flow=grad_flow, terms=terms)
