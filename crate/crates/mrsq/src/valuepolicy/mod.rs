//! Value ensemble, deterministic policy, prioritized replay, and the TD
//! updates tying them together. Values are always reduced with a minimum
//! across ensemble members unless an ablation asks for the mean.

pub mod networks;
pub mod replay;
pub mod update;

pub use networks::{PolicyNet, QEnsemble, ONLINE_VALUE_PREFIX, POLICY_PREFIX, TARGET_VALUE_PREFIX};
pub use replay::{LapReplay, Transition, ValueSegmentRow, MIN_PRIORITY};
pub use update::{
    bootstrap_values, policy_update, td_target, value_loss, value_update, TdConfig,
    ValueUpdateOutput,
};
