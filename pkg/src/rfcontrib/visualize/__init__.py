"""Plot bundles, colour gradients and SVG rendering for contribution plots."""

from .colors import ColorGradient, class_gradient, feature_gradient, pca, pca_gradient, ramp
from .export import write_plot, write_plot_manifest, write_plot_set
from .plots import (
    PlotBundle,
    aligned_class_plot,
    curve_plot,
    effective_prior,
    feature_simplex,
    interaction_plot,
    main_effect_plot,
    main_effect_plots,
    prediction_simplex,
    simplex_pair,
)
from .render import count_point_elements, render_svg
from .simplex import clip_to_simplex, simplex_coords

__all__ = [
    "ColorGradient", "class_gradient", "feature_gradient", "pca", "pca_gradient", "ramp",
    "write_plot", "write_plot_manifest", "write_plot_set",
    "PlotBundle", "aligned_class_plot", "curve_plot", "effective_prior", "feature_simplex",
    "interaction_plot", "main_effect_plot", "main_effect_plots", "prediction_simplex", "simplex_pair",
    "count_point_elements", "render_svg", "clip_to_simplex", "simplex_coords",
]
