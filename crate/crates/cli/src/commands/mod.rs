//! Each command returns `Ok(false)` when it ran but the check it performs failed.

pub mod evaluate;
pub mod gradcheck;
pub mod predict;
pub mod train;
