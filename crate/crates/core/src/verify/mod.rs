//! Slow, independent reference implementations used to check the production
//! paths: random rigid motions, least-squares Wigner-D matrices, central
//! differences, exhaustive neighbor search, and null-space Clebsch–Gordan
//! coefficients with a direct tensor-product summation, plus whole-model
//! symmetry and gradient checks built on them.

mod cg_oracle;
mod fd;
mod model_checks;
mod neighbors;
mod rotation;
mod suite;
mod wigner;

pub use cg_oracle::{direct_tensor_product, null_space_cg};
pub use neighbors::{brute_force_neighbors, BruteEdge};
pub use fd::{finite_diff_grad, rel_err};
pub use model_checks::{apply_motion, model_gradcheck, random_structure, rigid_motion_errors};
pub use rotation::{
    det, mat_mul, mat_vec, random_rotation, rotation_from_quaternion, rotation_z, transpose, Mat3, RigidMotion,
};
pub use suite::{
    check_bench, check_bessel, check_equivariance, check_gradcheck, check_learning_curve, check_md, check_oracles,
    check_overfit, check_persistence, random_frame, run_suite, CheckReport, SuiteScale,
};
pub use wigner::{wigner_d, WignerSet};
