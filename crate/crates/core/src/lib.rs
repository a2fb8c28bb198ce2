//! Numerical laboratory for free boundary minimal and constant-mean-curvature
//! surfaces in strictly convex bodies: discrete surface geometry, Robin and
//! Steklov spectra with Morse index counting, harmonic disk maps with
//! Hersch-style balancing, and machine-checkable certificates for the sharp
//! boundary-length, area, and stability inequalities these surfaces satisfy.

pub mod body;
pub mod config;
pub mod diskmap;
pub mod driver;
pub mod fbms;
pub mod linalg;
pub mod mesh;
pub mod shapes;
pub mod verify;
pub mod spectral;
