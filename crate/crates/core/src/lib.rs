//! Teacher/student dialogue tasks over a synthetic movie knowledge base,
//! memory-network learners trained offline (reward-based imitation, forward
//! prediction) and online (REINFORCE with an ask-question cost), plus the
//! evaluation harness tying it all together.

pub mod cli;
pub mod eval;
pub mod kb;
pub mod memnet;
pub mod numerics;
pub mod simulator;
pub mod train_offline;
pub mod train_rl;
