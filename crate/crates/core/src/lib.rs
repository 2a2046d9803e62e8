//! Robust vector polynomial optimization through joint+marginal
//! approximations and Lasserre moment relaxations.

pub mod jm;
pub mod lasserre;
pub mod moment;
pub mod pipeline;
pub mod poly;
pub mod sdp;
pub mod semialg;
