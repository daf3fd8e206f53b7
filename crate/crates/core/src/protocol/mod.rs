//! The Byzantine-resilient coordinate descent engine.
//!
//! Each round cycles over the `P` coordinates; each coordinate runs `T`
//! inner iterations of broadcast, screening and update. Honest node `j`
//! sets its coordinate to the average of its own value and the values
//! surviving screening, minus `rho(r + t - 1)` times its local coordinate
//! gradient.

mod attack;
mod engine;
mod schedule;
mod screen;

pub use attack::{AttackBehavior, AttackSpec};
pub use engine::{
    run_byrdie, CoordinateOrder, Hooks, Init, IterIndex, NoHooks, ProtocolConfig, RunOutcome,
    Snapshot,
};
pub(crate) use engine::layout;
pub use schedule::StepSchedule;
pub use screen::{screen, update_coordinate, Screened};
