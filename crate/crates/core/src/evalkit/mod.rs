//! Splits, ranking metrics and the evaluation driver.

pub mod metrics;
pub mod scorers;
pub mod split;

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recsys::top_k_among;
use crate::sparse::{CsrMatrix, InteractionMatrix};

pub use metrics::{bootstrap_se, ndcg_at_k, recall_at_k, RecallDenominator};
pub use scorers::{
    CbfScorer, ElsaScorer, ItemKnnScorer, OracleScorer, PopularityScorer, RandomScorer, Scorer,
};
pub use split::{split_items, split_time, ItemSplit, TimeSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ZeroShot,
    ColdStart,
    Supervised,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ZeroShot => "zero-shot",
            Scenario::ColdStart => "cold-start",
            Scenario::Supervised => "supervised",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-shot" => Ok(Scenario::ZeroShot),
            "cold-start" => Ok(Scenario::ColdStart),
            "supervised" => Ok(Scenario::Supervised),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ItemSplit,
    TimeSplit,
}

/// Evaluation users with their inputs, held-out targets and candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub kind: TaskKind,
    /// Original user indices of the evaluated users.
    pub users: Vec<usize>,
    /// One row per evaluated user over the full catalog.
    pub inputs: CsrMatrix,
    /// Sorted held-out items per evaluated user.
    pub targets: Vec<Vec<usize>>,
    /// `None` means every item not in the user's inputs.
    pub candidates: Option<Vec<usize>>,
}

impl EvalTask {
    /// Inputs are interactions with train items, targets interactions with
    /// test items, candidates the test items. Items in neither set are ignored.
    pub fn item_split(x: &InteractionMatrix, split: &ItemSplit) -> Result<Self> {
        #[derive(Clone, Copy, PartialEq)]
        enum Side {
            Neither,
            Train,
            Test,
        }
        let mut side = vec![Side::Neither; x.n_items()];
        for (items, s) in [(&split.train_items, Side::Train), (&split.test_items, Side::Test)] {
            for &i in items {
                *side.get_mut(i).ok_or(Error::IndexOutOfRange {
                    what: "items",
                    index: i,
                    len: x.n_items(),
                })? = s;
            }
        }
        let (mut users, mut inputs, mut targets) = (Vec::new(), Vec::new(), Vec::new());
        for u in 0..x.n_users() {
            let pick = |s| -> Vec<usize> {
                x.user_items(u).iter().copied().filter(|&i| side[i] == s).collect()
            };
            let (i, t) = (pick(Side::Train), pick(Side::Test));
            if !t.is_empty() && !i.is_empty() {
                users.push(u);
                inputs.push(i);
                targets.push(t);
            }
        }
        Ok(Self {
            kind: TaskKind::ItemSplit,
            users,
            inputs: CsrMatrix::from_binary_rows(x.n_items(), &inputs)?,
            targets,
            candidates: Some(split.test_items.clone()),
        })
    }

    /// Inputs are train-period interactions, targets test-period ones.
    pub fn time_split(x: &InteractionMatrix, split: &TimeSplit) -> Result<Self> {
        let train = split.train_matrix(x)?;
        let test = split.test_matrix(x)?;
        let (mut users, mut inputs, mut targets) = (Vec::new(), Vec::new(), Vec::new());
        for u in 0..x.n_users() {
            if !train.user_items(u).is_empty() && !test.user_items(u).is_empty() {
                users.push(u);
                inputs.push(train.user_items(u).to_vec());
                targets.push(test.user_items(u).to_vec());
            }
        }
        Ok(Self {
            kind: TaskKind::TimeSplit,
            users,
            inputs: CsrMatrix::from_binary_rows(x.n_items(), &inputs)?,
            targets,
            candidates: None,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Result<CsrMatrix> {
        let rows: Vec<Vec<usize>> = range.map(|r| self.inputs.row_indices(r).to_vec()).collect();
        CsrMatrix::from_binary_rows(self.inputs.n_cols(), &rows)
    }

    fn n_candidates(&self, r: usize) -> usize {
        match &self.candidates {
            Some(c) => c
                .iter()
                .filter(|i| self.inputs.row_indices(r).binary_search(i).is_err())
                .count(),
            None => self.inputs.n_cols() - self.inputs.row_nnz(r),
        }
    }

    /// Expected Recall@`k` of a uniformly random ranking, averaged over users.
    pub fn random_recall(&self, k: usize, denominator: RecallDenominator) -> f64 {
        if self.users.is_empty() {
            return 0.0;
        }
        let total: f64 = (0..self.n_users())
            .map(|r| {
                let c = self.n_candidates(r) as f64;
                let rel = self.targets[r].len();
                let hits = (k as f64).min(c) * rel as f64 / c;
                let denom = match denominator {
                    RecallDenominator::Calibrated => k.min(rel),
                    RecallDenominator::Full => rel,
                };
                hits / denom as f64
            })
            .sum();
        total / self.n_users() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub recall_denominator: RecallDenominator,
    pub bootstrap: usize,
    pub seed: u64,
    pub user_block: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![20, 50, 100],
            recall_denominator: RecallDenominator::Calibrated,
            bootstrap: 1000,
            seed: 0,
            user_block: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: String,
    pub value: f64,
    pub se: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub scenario: Scenario,
    pub metrics: Vec<MetricValue>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn get(&self, metric: &str) -> Option<&MetricValue> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.metrics.iter().map(|m| m.metric.len()).max().unwrap_or(6).max(6);
        let mut out = format!("model: {}  scenario: {}\n", self.model, self.scenario);
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>7}", "metric", "value", "se", "users");
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>8.4}  {:>7}",
                m.metric, m.value, m.se, m.n_users
            );
        }
        out
    }
}

fn check_scenario(scenario: Scenario, kind: TaskKind) -> Result<()> {
    match (scenario, kind) {
        (Scenario::ZeroShot | Scenario::ColdStart, TaskKind::ItemSplit)
        | (Scenario::Supervised, TaskKind::TimeSplit) => Ok(()),
        _ => Err(Error::Config(format!(
            "scenario {scenario} does not apply to a {kind:?} split"
        ))),
    }
}

/// Ranks candidates for every evaluated user and reports Recall@K and
/// NDCG@K with bootstrap standard errors over users.
pub fn evaluate(
    scorer: &dyn Scorer,
    task: &EvalTask,
    scenario: Scenario,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    check_scenario(scenario, task.kind)?;
    if opts.ks.is_empty() || opts.ks.contains(&0) {
        return Err(Error::Config("K values must be at least 1".into()));
    }
    if opts.user_block == 0 {
        return Err(Error::Config("user block must be at least 1".into()));
    }
    if task.n_users() < 2 {
        return Err(Error::Data(format!(
            "evaluation needs at least 2 users with inputs and targets, found {}",
            task.n_users()
        )));
    }
    let k_max = *opts.ks.iter().max().expect("nonempty");
    let blocks: Vec<std::ops::Range<usize>> = (0..task.n_users())
        .step_by(opts.user_block)
        .map(|s| s..(s + opts.user_block).min(task.n_users()))
        .collect();
    let per_block = blocks
        .into_par_iter()
        .map(|range| -> Result<Vec<Vec<f64>>> {
            let inputs = task.rows(range.clone())?;
            let users = &task.users[range.clone()];
            let scores = scorer.score(users, &inputs, task.candidates.as_deref())?;
            let ranked = top_k_among(&scores, task.candidates.as_deref(), &inputs, k_max, true)?;
            Ok(ranked
                .iter()
                .zip(&task.targets[range])
                .map(|(list, target)| {
                    let items = list.item_indices();
                    let mut row = Vec::with_capacity(2 * opts.ks.len());
                    for &k in &opts.ks {
                        row.push(recall_at_k(&items, target, k, opts.recall_denominator));
                    }
                    for &k in &opts.ks {
                        row.push(ndcg_at_k(&items, target, k));
                    }
                    row
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let per_user: Vec<Vec<f64>> = per_block.into_iter().flatten().collect();

    let names = opts
        .ks
        .iter()
        .map(|k| format!("recall@{k}"))
        .chain(opts.ks.iter().map(|k| format!("ndcg@{k}")));
    let metrics = names
        .enumerate()
        .map(|(c, metric)| {
            let values: Vec<f64> = per_user.iter().map(|r| r[c]).collect();
            Ok(MetricValue {
                metric,
                value: values.iter().sum::<f64>() / values.len() as f64,
                se: bootstrap_se(&values, opts.bootstrap, opts.seed)?,
                n_users: values.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        model: scorer.name(),
        scenario,
        metrics,
        config: serde_json::to_value(opts).expect("options serialize"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Interaction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(seed: u64, users: usize, items: usize, p: f64) -> InteractionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<usize>> = (0..users)
            .map(|_| (0..items).filter(|_| rng.gen_bool(p)).collect())
            .collect();
        InteractionMatrix::from_user_rows(items, &rows).unwrap()
    }

    fn opts(ks: Vec<usize>) -> EvalOptions {
        EvalOptions {
            ks,
            bootstrap: 50,
            ..EvalOptions::default()
        }
    }

    #[test]
    fn oracle_scores_perfect_recall() {
        let x = random_matrix(1, 60, 40, 0.15);
        let split = split_items(&x, 10, 2).unwrap();
        let task = EvalTask::item_split(&x, &split).unwrap();
        let oracle = OracleScorer::new(&task.users, &task.targets);
        let r = evaluate(&oracle, &task, Scenario::ColdStart, &opts(vec![10, 20])).unwrap();
        assert_eq!(r.get("recall@10").unwrap().value, 1.0);
        assert_eq!(r.get("ndcg@20").unwrap().value, 1.0);
        assert_eq!(r.get("recall@10").unwrap().se, 0.0);
    }

    #[test]
    fn item_split_never_ranks_train_items() {
        let x = random_matrix(3, 40, 30, 0.2);
        let split = split_items(&x, 8, 0).unwrap();
        let task = EvalTask::item_split(&x, &split).unwrap();
        let scores = PopularityScorer::from_matrix(&x)
            .score(&task.users, &task.inputs, task.candidates.as_deref())
            .unwrap();
        let ranked = top_k_among(&scores, task.candidates.as_deref(), &task.inputs, 30, true).unwrap();
        for list in ranked {
            assert!(list.items.iter().all(|(i, _)| split.test_items.contains(i)));
        }
    }

    #[test]
    fn random_scorer_matches_expectation() {
        let x = random_matrix(5, 3000, 200, 0.1);
        let split = split_items(&x, 100, 1).unwrap();
        let task = EvalTask::item_split(&x, &split).unwrap();
        let r = evaluate(&RandomScorer { seed: 4 }, &task, Scenario::ZeroShot, &opts(vec![20])).unwrap();
        let expected = task.random_recall(20, RecallDenominator::Calibrated);
        let got = r.get("recall@20").unwrap();
        assert!((got.value - expected).abs() < 4.0 * got.se + 1e-3, "{} vs {expected}", got.value);
    }

    #[test]
    fn users_without_targets_are_excluded() {
        let interactions = vec![
            Interaction { user: 0, item: 0, timestamp: Some(1) },
            Interaction { user: 0, item: 1, timestamp: Some(9) },
            Interaction { user: 1, item: 1, timestamp: Some(2) },
            Interaction { user: 1, item: 2, timestamp: Some(8) },
            Interaction { user: 2, item: 0, timestamp: Some(3) },
            Interaction { user: 2, item: 2, timestamp: Some(5) },
        ];
        let x = InteractionMatrix::from_interactions(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into(), "z".into()],
            &interactions,
        )
        .unwrap();
        let split = split_time(&x, 0.2).unwrap();
        let task = EvalTask::time_split(&x, &split).unwrap();
        assert_eq!(task.users, vec![0, 1]);
        let r = evaluate(&PopularityScorer::from_matrix(&x), &task, Scenario::Supervised, &opts(vec![1])).unwrap();
        assert_eq!(r.get("recall@1").unwrap().n_users, 2);
        assert!(evaluate(&RandomScorer { seed: 0 }, &task, Scenario::ColdStart, &opts(vec![1])).is_err());
    }

    #[test]
    fn evaluation_is_deterministic_and_block_independent() {
        let x = random_matrix(7, 120, 50, 0.1);
        let split = split_items(&x, 15, 3).unwrap();
        let task = EvalTask::item_split(&x, &split).unwrap();
        let s = RandomScorer { seed: 1 };
        let full = EvalOptions {
            recall_denominator: RecallDenominator::Full,
            ..opts(vec![5, 10])
        };
        let a = evaluate(&s, &task, Scenario::ColdStart, &full).unwrap();
        let b = evaluate(&s, &task, Scenario::ColdStart, &EvalOptions { user_block: 7, ..full.clone() }).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert!(a.to_table().contains("recall@5"));
        let r5 = a.get("recall@5").unwrap().value;
        let r10 = a.get("recall@10").unwrap().value;
        assert!((0.0..=1.0).contains(&r5) && r5 <= r10 + 1e-12);
    }
}
