pub mod eval;
pub mod interpolate;
pub mod sample;
pub mod train;
pub mod verify;
