//! Greedy core-set construction over a rubric pool.
//!
//! Each step adds the candidate with the highest marginal coding-rate gain
//! (ties broken by lowest rubric id) until the size cap is hit, the pool is
//! exhausted, or the gain saturates below `tau_min`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding_rate::{
    coding_rate, CodingRateError, CodingRateParams, EmbeddingMatrix, GainScanner,
};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("duplicate rubric id {0} in candidate pool")]
    DuplicateId(String),
    #[error("mixed embedding dimensions: {0} vs {1}")]
    MixedDimensions(usize, usize),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    CodingRate(#[from] CodingRateError),
}

/// Size cap, stopping rule and rate parameters for one selection run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionConfig {
    /// Desired core-set size cap; `None` means unbounded.
    pub max_size: Option<usize>,
    /// Minimum marginal gain below which selection is considered saturated.
    pub tau_min: f64,
    /// Consecutive sub-threshold steps required before stopping.
    pub patience: usize,
    /// Coding-rate parameters shared by every gain evaluation.
    pub params: CodingRateParams,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_size: Some(64),
            tau_min: 0.002,
            patience: 2,
            params: CodingRateParams::default(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if let Some(m) = self.max_size {
            if m < 1 {
                return Err(SelectionError::InvalidConfig(
                    "max_size must be at least 1 when bounded".into(),
                ));
            }
        }
        if self.tau_min.is_nan() || self.tau_min <= 0.0 {
            return Err(SelectionError::InvalidConfig(format!(
                "tau_min must be strictly positive, got {}",
                self.tau_min
            )));
        }
        if self.patience < 1 {
            return Err(SelectionError::InvalidConfig(
                "patience must be at least 1".into(),
            ));
        }
        CodingRateParams::new(self.params.epsilon, self.params.jitter)?;
        Ok(())
    }
}

/// One rubric offered to the selector: stable id plus unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub embedding: Vec<f64>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            embedding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SizeCap,
    EarlyStop,
    PoolExhausted,
}

/// One accepted greedy step.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionPick {
    pub rubric_id: String,
    pub marginal_gain: f64,
    pub coding_rate_after: f64,
}

/// Ordered record of every accepted step plus the reason selection ended.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionTrace {
    pub picks: Vec<SelectionPick>,
    pub stop_reason: StopReason,
}

/// The distilled core set: pick order, trace, and the ε it was built under.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoreSet {
    pub rubric_ids: Vec<String>,
    pub trace: SelectionTrace,
    pub epsilon_used: f64,
}

impl CoreSet {
    pub fn len(&self) -> usize {
        self.rubric_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rubric_ids.is_empty()
    }
}

/// True iff the last `patience` entries exist and every one is `< tau_min`.
///
/// A gain exactly equal to `tau_min` is not below threshold and does not
/// trigger a stop.
pub fn early_stop_check(gain_history: &[f64], tau_min: f64, patience: usize) -> bool {
    if patience == 0 || gain_history.len() < patience {
        return false;
    }
    gain_history[gain_history.len() - patience..]
        .iter()
        .all(|g| *g < tau_min)
}

fn validate_pool(pool: &[Candidate]) -> Result<usize, SelectionError> {
    let first = pool.first().ok_or(SelectionError::EmptyPool)?;
    let dim = first.embedding.len();
    let mut seen = std::collections::BTreeSet::new();
    for c in pool {
        if c.embedding.len() != dim {
            return Err(SelectionError::MixedDimensions(dim, c.embedding.len()));
        }
        if !seen.insert(c.id.as_str()) {
            return Err(SelectionError::DuplicateId(c.id.clone()));
        }
    }
    Ok(dim)
}

/// Greedy coding-rate maximization over `pool`.
///
/// Stops at the first of: size cap reached, marginal gain saturated below
/// `tau_min` (the pool cannot change between scans, so one sub-threshold
/// argmax would repeat for the whole patience window), pool exhausted.
pub fn greedy_select(pool: &[Candidate], config: &SelectionConfig) -> Result<CoreSet, SelectionError> {
    config.validate()?;
    let dim = validate_pool(pool)?;

    let mut base = EmbeddingMatrix::new(dim);
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut picks: Vec<SelectionPick> = Vec::new();

    let stop_reason = loop {
        if let Some(cap) = config.max_size {
            if picks.len() >= cap {
                break StopReason::SizeCap;
            }
        }
        if remaining.is_empty() {
            break StopReason::PoolExhausted;
        }

        let scanner = GainScanner::new(&base, &config.params)?;
        let mut best: Option<(f64, usize)> = None;
        for (pos, &ci) in remaining.iter().enumerate() {
            let gain = scanner.gain(&pool[ci].embedding)?;
            let better = match best {
                None => true,
                Some((bg, bpos)) => {
                    gain > bg || (gain == bg && pool[ci].id < pool[remaining[bpos]].id)
                }
            };
            if better {
                best = Some((gain, pos));
            }
        }
        let (gain, pos) = best.expect("remaining is non-empty");
        if gain < config.tau_min {
            break StopReason::EarlyStop;
        }

        let rate_after = scanner.base_rate() + gain;
        drop(scanner);
        let ci = remaining.remove(pos);
        base.push_column(&pool[ci].embedding)?;
        picks.push(SelectionPick {
            rubric_id: pool[ci].id.clone(),
            marginal_gain: gain,
            coding_rate_after: rate_after,
        });
    };

    Ok(CoreSet {
        rubric_ids: picks.iter().map(|p| p.rubric_id.clone()).collect(),
        trace: SelectionTrace {
            picks,
            stop_reason,
        },
        epsilon_used: config.params.epsilon,
    })
}

/// Reselect a core from the union of the current core and newly validated
/// rubrics. Runs [`greedy_select`] from scratch on the pooled union, so
/// previously selected rubrics may be dropped.
pub fn update_core(
    current_core: &[Candidate],
    new_rubrics: &[Candidate],
    config: &SelectionConfig,
) -> Result<CoreSet, SelectionError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut union: Vec<Candidate> = Vec::with_capacity(current_core.len() + new_rubrics.len());
    for c in current_core.iter().chain(new_rubrics) {
        if seen.insert(c.id.clone()) {
            union.push(c.clone());
        }
    }
    greedy_select(&union, config)
}

/// Coding rate of a candidate list, used for batch-level gain bookkeeping.
pub fn pool_coding_rate(
    candidates: &[Candidate],
    params: &CodingRateParams,
) -> Result<f64, SelectionError> {
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let dim = candidates[0].embedding.len();
    let m = EmbeddingMatrix::from_columns(dim, candidates.iter().map(|c| &c.embedding))?;
    Ok(coding_rate(&m, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(max_size: Option<usize>, tau_min: f64, patience: usize, eps: f64) -> SelectionConfig {
        SelectionConfig {
            max_size,
            tau_min,
            patience,
            params: CodingRateParams::with_epsilon(eps).unwrap(),
        }
    }

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn picks_orthogonal_over_duplicate() {
        let pool = vec![
            Candidate::new("r1", e(0, 2)),
            Candidate::new("r2", e(0, 2)),
            Candidate::new("r3", e(1, 2)),
        ];
        let core = greedy_select(&pool, &cfg(Some(2), 1e-6, 2, 1.0)).unwrap();
        assert_eq!(core.rubric_ids, vec!["r1", "r3"]);
        assert_eq!(core.trace.stop_reason, StopReason::SizeCap);
        let gains: Vec<f64> = core.trace.picks.iter().map(|p| p.marginal_gain).collect();
        assert!((gains[0] - 0.5 * 2.0_f64.ln()).abs() < 1e-12);
        assert!((gains[1] - (1.5_f64.ln() - 0.5 * 2.0_f64.ln())).abs() < 1e-12);
        // Brute force over all size-2 subsets: {e1, e2} must be optimal.
        let p = CodingRateParams::with_epsilon(1.0).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut best_pair = (0, 0);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let m = EmbeddingMatrix::from_columns(
                    2,
                    [&pool[i].embedding, &pool[j].embedding],
                )
                .unwrap();
                let c = coding_rate(&m, &p).unwrap();
                if c > best {
                    best = c;
                    best_pair = (i, j);
                }
            }
        }
        assert_eq!(best_pair, (0, 2));
    }

    #[test]
    fn single_candidate_pool_exhausts() {
        let pool = vec![Candidate::new("only", e(0, 3))];
        let core = greedy_select(&pool, &SelectionConfig::default()).unwrap();
        assert_eq!(core.rubric_ids, vec!["only"]);
        assert_eq!(core.trace.stop_reason, StopReason::PoolExhausted);
    }

    #[test]
    fn all_duplicates_stop_early_after_first_pick() {
        let pool = vec![
            Candidate::new("r1", e(0, 2)),
            Candidate::new("r2", e(0, 2)),
            Candidate::new("r3", e(0, 2)),
        ];
        let core = greedy_select(&pool, &cfg(Some(64), 0.002, 2, 1.0)).unwrap();
        assert_eq!(core.rubric_ids, vec!["r1"]);
        assert_eq!(core.trace.stop_reason, StopReason::EarlyStop);
    }

    #[test]
    fn empty_pool_is_an_input_error() {
        assert!(matches!(
            greedy_select(&[], &SelectionConfig::default()),
            Err(SelectionError::EmptyPool)
        ));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let pool = vec![Candidate::new("a", e(0, 2)), Candidate::new("b", e(0, 3))];
        assert!(matches!(
            greedy_select(&pool, &SelectionConfig::default()),
            Err(SelectionError::MixedDimensions(2, 3))
        ));
    }

    #[test]
    fn early_stop_check_table() {
        assert!(early_stop_check(&[0.5, 0.3, 0.001, 0.0015], 0.002, 2));
        assert!(!early_stop_check(&[0.5, 0.001, 0.3], 0.002, 2));
        assert!(!early_stop_check(&[], 0.002, 2));
        // Boundary: a gain exactly at tau_min is not below threshold.
        assert!(!early_stop_check(&[0.002, 0.002], 0.002, 2));
        assert!(early_stop_check(&[0.0019, 0.0019], 0.002, 2));
        assert!(!early_stop_check(&[0.001], 0.002, 2));
        assert!(early_stop_check(&[0.001], 0.002, 1));
    }

    #[test]
    fn update_core_is_idempotent_without_new_data() {
        let core_cands = vec![Candidate::new("a", e(0, 2))];
        let core = update_core(&core_cands, &[], &SelectionConfig::default()).unwrap();
        assert_eq!(core.rubric_ids, vec!["a"]);
    }

    #[test]
    fn update_core_adds_orthogonal_direction() {
        let core_cands = vec![Candidate::new("a", e(0, 2))];
        let new = vec![Candidate::new("b", e(1, 2))];
        let core = update_core(&core_cands, &new, &cfg(Some(2), 1e-6, 2, 1.0)).unwrap();
        let mut ids = core.rubric_ids.clone();
        ids.sort();
        assert_eq!(ids, vec!["a", "b"]);
        assert!(core.trace.picks[1].marginal_gain > 0.0);
    }

    #[test]
    fn update_core_keeps_one_of_near_duplicates() {
        // v and v' nearly collinear, w orthogonal.
        let v = e(0, 3);
        let vp = crate::coding_rate::normalize(&[1.0, 0.02, 0.0]).unwrap();
        let w = e(1, 3);
        let core_cands = vec![Candidate::new("v", v.clone())];
        let new = vec![Candidate::new("vp", vp.clone()), Candidate::new("w", w.clone())];
        let core = update_core(&core_cands, &new, &cfg(Some(2), 1e-6, 2, 1.0)).unwrap();
        assert_eq!(core.len(), 2);
        let has_w = core.rubric_ids.iter().any(|i| i == "w");
        let dup_count = core
            .rubric_ids
            .iter()
            .filter(|i| *i == "v" || *i == "vp")
            .count();
        assert!(has_w && dup_count == 1, "got {:?}", core.rubric_ids);

        // Brute force over the three size-2 subsets confirms {v or vp, w}.
        let p = CodingRateParams::with_epsilon(1.0).unwrap();
        let all = [("v", &v), ("vp", &vp), ("w", &w)];
        let mut best_ids = vec![];
        let mut best = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in (i + 1)..3 {
                let m =
                    EmbeddingMatrix::from_columns(3, [all[i].1.as_slice(), all[j].1.as_slice()])
                        .unwrap();
                let c = coding_rate(&m, &p).unwrap();
                if c > best {
                    best = c;
                    best_ids = vec![all[i].0, all[j].0];
                }
            }
        }
        assert!(best_ids.contains(&"w"));
    }

    #[test]
    fn traces_are_deterministic() {
        let pool: Vec<Candidate> = (0..6)
            .map(|i| {
                let raw: Vec<f64> = (0..4)
                    .map(|j| ((i * 7 + j * 13 + 5) % 11) as f64 - 5.0)
                    .collect();
                Candidate::new(format!("r{i}"), crate::coding_rate::normalize(&raw).unwrap())
            })
            .collect();
        let cfg = SelectionConfig::default();
        let a = greedy_select(&pool, &cfg).unwrap();
        let b = greedy_select(&pool, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.trace).unwrap(),
            serde_json::to_string(&b.trace).unwrap()
        );
    }

    #[test]
    fn every_pick_is_the_exhaustive_argmax() {
        use crate::coding_rate::marginal_gain;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for round in 0..20 {
            let d = 2 + round % 5;
            let n = 2 + (round * 3) % 9;
            let pool: Vec<Candidate> = (0..n)
                .map(|i| {
                    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    Candidate::new(
                        format!("c{i:02}"),
                        crate::coding_rate::normalize(&raw).unwrap(),
                    )
                })
                .collect();
            let cfg = cfg(Some(4), 1e-9, 2, 0.5);
            let core = greedy_select(&pool, &cfg).unwrap();

            // Replay with naive recomputation: no remaining candidate may
            // strictly beat the recorded pick, and the recorded gain must
            // match its naive recomputation.
            let mut base = EmbeddingMatrix::new(d);
            let mut remaining: Vec<usize> = (0..pool.len()).collect();
            for pick in &core.trace.picks {
                let picked = remaining
                    .iter()
                    .position(|&ci| pool[ci].id == pick.rubric_id)
                    .expect("pick still in remaining");
                let picked_ci = remaining[picked];
                let picked_gain =
                    marginal_gain(&base, &pool[picked_ci].embedding, &cfg.params).unwrap();
                assert!(
                    (picked_gain - pick.marginal_gain).abs() < 1e-9,
                    "round {round}: recorded {} vs naive {picked_gain}",
                    pick.marginal_gain
                );
                for &ci in &remaining {
                    let g = marginal_gain(&base, &pool[ci].embedding, &cfg.params).unwrap();
                    assert!(
                        g <= pick.marginal_gain + 1e-9,
                        "round {round}: candidate {} beats pick {}",
                        pool[ci].id,
                        pick.rubric_id
                    );
                }
                remaining.remove(picked);
                base.push_column(&pool[picked_ci].embedding).unwrap();
            }
        }
    }

    #[test]
    fn cluster_coverage_first_picks_are_diverse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let d = 6;
        let clusters = 4;
        let per_cluster = 5;
        let mut pool = Vec::new();
        for c in 0..clusters {
            for k in 0..per_cluster {
                let mut raw = vec![0.0; d];
                raw[c] = 1.0;
                for x in raw.iter_mut() {
                    *x += rng.gen_range(-0.05..0.05);
                }
                pool.push(Candidate::new(
                    format!("c{c}_{k}"),
                    crate::coding_rate::normalize(&raw).unwrap(),
                ));
            }
        }
        let core = greedy_select(&pool, &cfg(Some(clusters), 1e-9, 2, 0.5)).unwrap();
        let covered: std::collections::BTreeSet<char> = core
            .rubric_ids
            .iter()
            .take(clusters)
            .map(|id| id.chars().nth(1).unwrap())
            .collect();
        assert_eq!(covered.len(), clusters, "picks {:?}", core.rubric_ids);
    }

    #[test]
    fn trace_rate_bookkeeping_is_consistent() {
        let pool: Vec<Candidate> = (0..5)
            .map(|i| Candidate::new(format!("r{i}"), e(i, 5)))
            .collect();
        let core = greedy_select(&pool, &SelectionConfig::default()).unwrap();
        let mut prev = 0.0;
        for p in &core.trace.picks {
            assert!((p.coding_rate_after - (prev + p.marginal_gain)).abs() < 1e-9);
            prev = p.coding_rate_after;
        }
    }
}
