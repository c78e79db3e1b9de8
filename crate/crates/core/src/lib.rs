//! Convex-MPC quadruped locomotion.
//!
//! The crate covers the whole control stack of a small electric quadruped,
//! bottom to top:
//!
//! * [`dynamics`]: single-rigid-body model and an SO(3)-preserving RK4 integrator.
//! * [`linearization`]: yaw-parameterized linear model and its exact
//!   zero-order-hold discretization.
//! * [`mpc`]: finite-horizon MPC condensed into a dense QP.
//! * [`qp`]: ADMM solver for `min ½UᵀHU + Uᵀg  s.t.  l ≤ CU ≤ u`.
//! * [`locomotion`]: gait scheduling, Raibert foot placement, Bezier swing
//!   trajectories, impedance and ground-force control.
//! * [`hopper`]: planar Raibert hopper on a spring-loaded leg.
//! * [`foc`]: DQ0 transforms and the PI current loop of a motor drive.
//! * [`sim`]: closed-loop scenario runner with CSV logs and summary metrics.
//!
//! The guide under `book/` walks through each layer; its code listings are
//! compiled as doctests of this crate.

pub mod dynamics;
pub mod error;
pub mod foc;
pub mod hopper;
pub mod linearization;
pub mod locomotion;
pub mod mpc;
pub mod qp;
pub mod sim;

pub use dynamics::{BodyParams, ContactSet, Leg, RobotState};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/rigid_body.md")]
    mod rigid_body {}
    #[doc = include_str!("../../../book/src/linear_model.md")]
    mod linear_model {}
    #[doc = include_str!("../../../book/src/mpc_qp.md")]
    mod mpc_qp {}
    #[doc = include_str!("../../../book/src/admm.md")]
    mod admm {}
    #[doc = include_str!("../../../book/src/gaits_and_swing.md")]
    mod gaits_and_swing {}
    #[doc = include_str!("../../../book/src/hopper.md")]
    mod hopper {}
    #[doc = include_str!("../../../book/src/foc.md")]
    mod foc {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
