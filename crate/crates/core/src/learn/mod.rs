//! Networks, optimizers and the two-level learner.

pub mod adam;
pub mod checkpoint;
pub mod dqn;
pub mod maddpg;
pub mod mlp;
pub mod replay;
pub mod schedule;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use maddpg::{CriticMode, Maddpg, MaddpgConfig};
pub use mlp::{soft_update, Head, Mlp};
pub use replay::ReplayBuffer;
pub use schedule::LinearSchedule;
pub use train::{
    run_static_frame, BaselineBandwidth, EpisodeStats, FrameReport, Learner, Method, StepObserver, StepView,
    TrainSchedule,
};
