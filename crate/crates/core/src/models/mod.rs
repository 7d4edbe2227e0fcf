//! Built-in case studies and model-file I/O.

pub mod gridworld;
pub mod io;
pub mod medical;

pub use gridworld::{builtin_gridworld, GridLayout};
pub use io::{load_model, load_problem, save_model, save_problem, LoadedModel};
pub use medical::{builtin_medical, medical_safe_states, ThresholdSet};
