//! Conformal surface morphing.
//!
//! Simply connected surfaces are mapped conformally onto the unit disk,
//! matched through landmark-driven Möbius and thin-plate deformations,
//! represented by their mean curvature and conformal factor, interpolated in
//! time with cubic splines and rebuilt by a Laplace–Beltrami fixed point.

pub mod conformal;
pub mod geodesic;
pub mod homotopy;
pub mod linalg;
pub mod matching;
pub mod mesh;
pub mod pipeline;
pub mod reconstruction;
pub mod registration;
pub mod shapes;
