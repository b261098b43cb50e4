//! Simulation lab for personalized bidding on customers whose conversions
//! respond to ad exposure with delay.

pub mod agent;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod planning;
pub mod rng;

pub use agent::{Agent, AgentConfig, BaselinePolicy, PlannerMode};
pub use environment::{BidMode, BidRule, EpisodeLog, InstanceSpec, RoundRecord};
pub use error::{Error, Result};
pub use model::{
    AuctionModel, Bounds, Context, ExposureState, HobDistribution, ThetaIndex, TrueModel,
};
pub use parallel::Execution;
pub use rng::{Purpose, RandomSource};
