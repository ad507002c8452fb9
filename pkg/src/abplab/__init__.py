"""Numerical checks of the Aleksandrov-Bakelman-Pucci estimate for plurisubharmonic functions."""
from .abp import ABPError, ABPReport, VerifyConfig, abp_constant, abp_constant_eps, verify_abp, verify_entry
from .envelope import (ContactSet, EnvelopeError, GridEnvelope, PLConvexFunction, contact_set,
                       convex_envelope_exact, convex_envelope_iterative, convex_envelope_legendre, tilde_extend)
from .gallery import GALLERY, GalleryEntry, GalleryError, get_entry
from .grid import Domain, Grid, GridError, ScalarField, make_grid, sample
from .hessian import cma_density, complex_hessian, hessian_comparison_check, real_hessian
from .measure import MeasureError, MeasureReport, brute_force_gradient_image, gradient_image_volume
from .radial import RadialError, solve_radial_dirichlet, verify_lemma_convexf

__version__ = "0.1.0"

__all__ = [
    "ABPError", "ABPReport", "VerifyConfig", "abp_constant", "abp_constant_eps", "verify_abp", "verify_entry",
    "ContactSet", "EnvelopeError", "GridEnvelope", "PLConvexFunction", "contact_set", "convex_envelope_exact",
    "convex_envelope_iterative", "convex_envelope_legendre", "tilde_extend",
    "GALLERY", "GalleryEntry", "GalleryError", "get_entry",
    "Domain", "Grid", "GridError", "ScalarField", "make_grid", "sample",
    "cma_density", "complex_hessian", "hessian_comparison_check", "real_hessian",
    "MeasureError", "MeasureReport", "brute_force_gradient_image", "gradient_image_volume",
    "RadialError", "solve_radial_dirichlet", "verify_lemma_convexf",
]
