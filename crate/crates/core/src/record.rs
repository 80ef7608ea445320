//! Run artifacts: per-iteration trajectory rows, dense error curves and the
//! terminal summary. Records are plain data (always f64 on disk) so that a
//! persisted run can be compared bit-for-bit against its replay regardless of
//! the scalar type the run used internally.

use serde::{Deserialize, Serialize};

/// One logged iteration. `t` counts completed updates, so `mu`/`lambda` are
/// the state *after* update t while `x`/`payoffs`/`g` are the sample and
/// observations that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
    pub payoffs: Vec<f64>,
    pub g: Vec<f64>,
    pub rel_err: Option<f64>,
}

/// Terminal statistics of a run. Wall time is informational only and is
/// excluded from equality so that replays compare clean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: u64,
    pub final_mu: Vec<f64>,
    pub final_lambda: Vec<f64>,
    pub final_rel_err: Option<f64>,
    /// max_j g_j(μ(T)), positive part; None when the game has no coupling.
    pub max_constraint_violation: Option<f64>,
    pub wall_secs: f64,
}

impl PartialEq for RunSummary {
    fn eq(&self, other: &Self) -> bool {
        self.iterations == other.iterations
            && self.final_mu == other.final_mu
            && self.final_lambda == other.final_lambda
            && self.final_rel_err == other.final_rel_err
            && self.max_constraint_violation == other.max_constraint_violation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Hash of the originating configuration; empty when the run was driven
    /// directly through the library.
    pub config_hash: String,
    pub seed: u64,
    /// Row-logging stride used for `rows` (0 = rows disabled).
    pub log_every: u64,
    pub rows: Vec<TrajectoryRow>,
    /// Dense per-iteration distance ‖μ(t) − a*‖ when a reference equilibrium
    /// was attached; empty otherwise.
    pub errors: Vec<f64>,
    pub summary: RunSummary,
}

impl RunRecord {
    /// Relative-error curve, errors[t]/‖a*‖; requires the reference norm the
    /// caller tracked the run against.
    pub fn relative_errors(&self, reference_norm: f64) -> Vec<f64> {
        self.errors.iter().map(|e| e / reference_norm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary() -> RunSummary {
        RunSummary {
            iterations: 10,
            final_mu: vec![1.0, 2.0],
            final_lambda: vec![0.5],
            final_rel_err: Some(0.25),
            max_constraint_violation: Some(0.0),
            wall_secs: 1.25,
        }
    }

    #[test]
    fn wall_time_does_not_enter_equality() {
        let a = summary();
        let mut b = summary();
        b.wall_secs = 99.0;
        assert_eq!(a, b);
        let mut c = summary();
        c.final_mu[0] += 1e-12;
        assert_ne!(a, c);
    }

    #[test]
    fn roundtrips_through_json() {
        let rec = RunRecord {
            config_hash: "abc".into(),
            seed: 7,
            log_every: 1,
            rows: vec![TrajectoryRow {
                t: 1,
                mu: vec![0.5],
                lambda: vec![],
                x: vec![0.25],
                payoffs: vec![-1.0],
                g: vec![],
                rel_err: None,
            }],
            errors: vec![0.5],
            summary: summary(),
        };
        let s = serde_json::to_string(&rec).unwrap();
        let back: RunRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(rec, back);
    }
}
