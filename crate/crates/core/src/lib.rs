//! Cartesian stiffness of 3-d.o.f. translational parallel manipulators with
//! the lumped virtual-joint method.
//!
//! Each kinematic chain is a serial product of rigid transforms, an actuated
//! joint with its actuator spring, 6-d.o.f. link springs and passive joints
//! ([`chain`]). Its Jacobians feed a per-chain kinetostatic solve that
//! tolerates redundant springs and singular passive postures
//! ([`kinetostatics`]); the chain stiffnesses add up to the manipulator
//! stiffness. Link spring parameters come from beam models ([`compliance`])
//! and the case-study architectures are built in [`architectures`].

pub mod architectures;
pub mod chain;
pub mod compliance;
pub mod error;
pub mod kinetostatics;
pub mod transforms;

pub use error::{Error, Result};
