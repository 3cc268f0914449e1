//! Agent-based pandemic simulator where every resident is a reward-driven
//! learning agent, plus the training machinery that keeps million-agent
//! Q-learning tractable and an experiment harness for government policies.

pub mod approximator;
pub mod environment;
pub mod epidemic;
pub mod government;
pub mod harness;
pub mod population;
pub mod rng;
pub mod smadqn;
