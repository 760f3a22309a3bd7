//! Irreducible-representation layouts and the equivariant building blocks:
//! spherical harmonics, Clebsch–Gordan tensor products, block-diagonal
//! linear maps, and the gate nonlinearity.

pub mod cg;
mod gate;
mod linear;
mod sh;
mod spec;
mod tp;

pub use cg::{CGBlock, CGTable, CG_L_MAX};
pub use gate::Gate;
pub use linear::EquivariantLinear;
pub use sh::{spherical_harmonics, spherical_harmonics_of};
pub use spec::{Irrep, IrrepsEntry, IrrepsSpec, Parity};
pub use tp::{PathFilter, TensorProduct, TpPath};

use crate::tensor::Var;

/// A tape value whose columns follow `spec`.
#[derive(Clone, Debug)]
pub struct IrrepsTensor {
    pub spec: IrrepsSpec,
    pub var: Var,
}

impl IrrepsTensor {
    pub fn new(spec: IrrepsSpec, var: Var) -> Self {
        IrrepsTensor { spec, var }
    }
}
