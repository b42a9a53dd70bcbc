//! Distances between points of a finite 3D point set measured along fitted
//! polynomial surfaces.
//!
//! For a pair `(x, y)` of a point set `X`, a degree-`n` surface
//! `z = f(x, y)` is fitted that passes exactly through both points and fits
//! the remaining points of `X` in the least-squares sense; the distance is
//! the length of the shortest geodesic between `x` and `y` on that surface.
//! The resulting distance is symmetric but in general violates the triangle
//! inequality.

pub mod distance;
pub mod error;
pub mod fit;
pub mod geodesic;
pub mod geometry;
pub mod io;
pub mod linalg;
mod par;
pub use par::PARALLEL_AVAILABLE;
pub mod routing;

pub use distance::{
    distance_dn, distance_hat, distance_matrix, metric_audit, projected_baseline_distance, BaselineDistance,
    DistanceConfig, DistanceMatrix, MetricAuditReport, PairProvenance, TriangleViolation, AUDIT_RTOL,
};
pub use error::{Error, Result};
pub use fit::{
    build_constrained_system, build_unconstrained_system, fit_constrained, fit_unconstrained, minimum_norm_fit,
    perturbation_resolve, FitReport, FitSystem, PerturbationMode, PerturbationSchedule, ResolvedDistance, Resolver,
};
pub use geodesic::{
    geodesic_distance, geodesic_residual, initial_path, minimize_path, path_length, GeodesicConfig, GeodesicPath,
};
pub use geometry::{monomial_basis, MonomialBasis, Point3, PolynomialSurface, Scaling, ScalingMode};
pub use io::{load_points_csv, PointSet};
pub use routing::{nn_tour, two_opt, Tour};

/// The ten-point reference set used throughout the tests and examples.
pub fn reference_points() -> Vec<Point3> {
    const XS: [f64; 10] = [3.0, -3.0, -1.0, -2.0, 0.0, 34.0, 12.0, 5.0, 2.0, 10.0];
    const YS: [f64; 10] = [0.0, 0.0, 1.0, 1.0, 0.0, 3.0, 9.0, 12.0, 5.0, -4.0];
    const ZS: [f64; 10] = [0.0, 7.0, 6.0, 2.0, 4.0, 12.0, 12.0, 18.0, -3.0, -5.0];
    (0..10).map(|k| Point3::new(XS[k], YS[k], ZS[k])).collect()
}
