//! Simulation and analysis toolkit for differential magnetic sensing with a
//! cold-atom cloud in a magnetic quadrupole trap.
//!
//! Reversing the quadrupole polarity moves the field zero, and the trapped
//! cloud with it, to mirror-image positions whenever a homogeneous external
//! field is present. Imaging the cloud for both polarities therefore measures
//! the two field components transverse to the imaging axis.
//!
//! * [`magnetostatics`] evaluates coil fields exactly.
//! * [`trap`] holds the quadrupole model and zero-finding.
//! * [`imaging`] synthesizes and fits absorption images.
//! * [`protocol`] runs the polarity-reversal measurement and compensation fit.
//! * [`stats`] covers Allan deviation and field-uncertainty conversion.

// NaN-rejecting `!(x > 0.0)` guards and index loops over image grids are
// intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod magnetostatics;
pub mod imaging;
pub mod protocol;
pub mod stats;
pub mod trap;
