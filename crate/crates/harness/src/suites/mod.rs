//! Property suites that check the learning-theory claims numerically.
//!
//! Every check reports a signed `margin`: how far the measured statistic sits
//! on the passing side of its `threshold`. A check passes iff `margin >= 0`.

mod bounds;
mod chain;
mod equivalence;
mod gradient;
mod identities;

pub use bounds::{theorem2_bound, BoundTrial};
pub use chain::{chain_center_preference, coach_counterexample, ChainLearner};
pub use equivalence::{indicator_mismatches, policy_feedback_equivalence, terminating_goal_mismatches};
pub use gradient::{gradient_draw, gradient_identity, GradientDraw, McEstimate};
pub use identities::advantage_identities;

use std::fmt;
use std::str::FromStr;

use ecoach_core::solvers::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}` (expected one of: {names})", names = Suite::ALL.map(Suite::name).join(", "))]
    Unknown(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    GradientIdentity,
    Theorem2Bound,
    PolicyFeedbackEquivalence,
    AdvantageIdentities,
    CoachCounterexample,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Self::GradientIdentity,
        Self::Theorem2Bound,
        Self::PolicyFeedbackEquivalence,
        Self::AdvantageIdentities,
        Self::CoachCounterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GradientIdentity => "gradient-identity",
            Self::Theorem2Bound => "theorem2-bound",
            Self::PolicyFeedbackEquivalence => "policy-feedback-equivalence",
            Self::AdvantageIdentities => "advantage-identities",
            Self::CoachCounterexample => "coach-counterexample",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Self::GradientIdentity => 10,
            Self::Theorem2Bound => 100,
            Self::PolicyFeedbackEquivalence => 50,
            Self::AdvantageIdentities => 100,
            Self::CoachCounterexample => 5,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SuiteError::Unknown(s.to_owned()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub margin: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(check: impl Into<String>, margin: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            margin,
            threshold,
            pass: margin >= 0.0,
        }
    }

    /// Passing when `value <= limit`.
    pub fn at_most(check: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(check, limit - value, limit)
    }

    /// Passing when `value >= limit`.
    pub fn at_least(check: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(check, value - limit, limit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check,margin,threshold,pass")?;
        for r in &self.rows {
            writeln!(f, "{},{:.6e},{:.6e},{}", r.check, r.margin, r.threshold, r.pass)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub trials: usize,
    pub seed: u64,
    /// Monte-Carlo episodes per draw (gradient-identity) or training episodes
    /// per run (coach-counterexample); `None` takes the suite default.
    pub episodes: Option<usize>,
}

impl SuiteOptions {
    pub fn defaults(suite: Suite) -> Self {
        Self {
            trials: suite.default_trials(),
            seed: 0,
            episodes: None,
        }
    }
}

pub fn run_theorem_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    if opts.trials == 0 {
        return Err(SuiteError::NoTrials);
    }
    let rows = match suite {
        Suite::GradientIdentity => gradient_identity(opts)?,
        Suite::Theorem2Bound => theorem2_bound(opts)?,
        Suite::PolicyFeedbackEquivalence => policy_feedback_equivalence(opts)?,
        Suite::AdvantageIdentities => advantage_identities(opts)?,
        Suite::CoachCounterexample => coach_counterexample(opts)?,
    };
    Ok(SuiteReport { suite, rows })
}

/// Counts of a per-trial predicate, formatted into a check name.
pub(crate) fn tally(name: &str, ok: usize, total: usize) -> String {
    format!("{name} [{ok}/{total}]")
}
