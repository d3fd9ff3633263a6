//! Gain schedules and their synthesis.

pub mod apollo;
pub mod chance;
pub mod design;
pub mod lqg;
pub mod schedule;
pub mod synthesis;

pub use chance::chance_bound;
pub use lqg::{lq_cost, lqg_gains, riccati, LqWeights};
pub use schedule::{GainSchedule, ScheduleIndex, ScheduleLookup, ScheduleRow, SynthesisMethod};
