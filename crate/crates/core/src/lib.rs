//! Weak inverse mean curvature flow on rotationally symmetric model
//! 3-manifolds, with auditing of the monotonicity and systolic gap
//! inequalities it implies.

pub mod audit;
pub mod geometry;
pub mod imcf;
pub mod models;
pub mod neck;
pub mod textfmt;
pub mod trace;
pub mod tree;
