//! Concrete models and their data simulators.

pub mod dgp8;
pub mod entry_game;
pub mod linear;

pub use entry_game::{simulate_entry_game, EntryGame, EntryGameTheta, Selection};
pub use linear::{simulate_box, LinearModel, LinearMoment};
