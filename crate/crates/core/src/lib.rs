pub mod geometry;
pub mod transform;
pub mod fem;
pub mod kinetics;
pub mod cell;
pub mod micro;
pub mod scenario;
pub mod stepper;
pub mod unfolding;
pub mod verify;
pub mod manufactured;
pub mod config;
pub mod io;
pub mod cli;
