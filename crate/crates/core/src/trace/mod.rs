//! Topic identity across timesteps.

mod matching;
mod registry;
mod uot;

pub use matching::{
    cosine_cost, dot_merge, dot_merge_sources, epsilon_neighbor_match, match_threshold, stacked_top_eigenvalue,
    trace_step, Match, TopicAssignment, TraceConfig,
};
pub use registry::{update_registry, GlobalTopic, RegistryStep, TopicRegistry};
pub use uot::{kl_generalized, uniform_masses, uot_mm, uot_objective, TransportPlan, UotOptions};
