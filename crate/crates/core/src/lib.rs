//! Information-gain guided debiasing for instruction-tuning datasets.
//!
//! The pipeline measures how much a surface feature `B` of each sample
//! tells about its answer `Y`, plans the fewest rewrites that balance the
//! answer classes within every feature value, has a backend perform them,
//! and re-checks each rewrite locally.
//!
//! ```
//! use igdebias::infogain::{information_gain, ContingencyTable};
//!
//! let t = ContingencyTable::from_counts(vec![vec![10, 30], vec![30, 10]]).unwrap();
//! let ig = information_gain(&t).unwrap();
//! assert!((ig - 0.1887).abs() < 1e-4);
//! ```

pub mod backends;
pub mod cli;
pub mod corpus;
pub mod features;
pub mod infogain;
pub mod intervene;
pub mod planner;

pub use backends::{Backend, BackendConfig, BackendError, MockBackend};
pub use corpus::{Dataset, Sample, Task};
pub use features::{FeatureConfig, FeatureSpec, NegationLexicon};
pub use infogain::{goal_check, information_gain, tabulate, BiasReport, ContingencyTable};
pub use intervene::{debias_pipeline, execute_plan, PipelineOptions, RewriteContext};
pub use planner::{plan, replan_residual, verify_plan, InterventionPlan};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/information-gain.md")]
    struct InformationGain;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/planning.md")]
    struct Planning;
    #[doc = include_str!("../../../book/src/rewriting.md")]
    struct Rewriting;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
