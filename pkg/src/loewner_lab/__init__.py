"""Loewner evolutions driven by measure-valued paths, with free-probability transforms."""

__version__ = "0.1.0"

from .measures import (  # noqa: E402
    CircleMeasure, DensityPart, MeasureError, MeasurePath, MomentSeries, RealMeasure, Segment,
    arcsine, circle_moments, circle_point, constant_path, family_path, haar, law_catalog, mixture,
    moment_distance, point, poisson_law, real_moments, semicircle, semicircle_path,
)
