//! Deterministic Gini decision tree and the baseline-vs-enriched comparison.
//!
//! Split search is exhaustive over midpoints of consecutive distinct values;
//! ties go to the lower feature index, then the lower threshold, so two runs
//! on identical data build structurally identical trees. Attack is the
//! positive class throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::BinaryLabel;
use crate::select::FeatureTable;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("all rows carry the same label; training needs both classes")]
    SingleClass,
    #[error("need at least {required} rows, got {found}")]
    TooFewRows { found: usize, required: usize },
    #[error("{labels} labels do not line up with {rows} table rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("table columns do not match the training columns: {0}")]
    SchemaMismatch(String),
    #[error("reports cover different test splits: {left} vs {right} rows")]
    SplitMismatch { left: u64, right: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct TreeConfig {
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        prediction: BinaryLabel,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    root: TreeNode,
    feature_names: Vec<String>,
}

impl DecisionTree {
    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    pub fn node_count(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => 1 + walk(left) + walk(right),
            }
        }
        walk(&self.root)
    }

    pub fn predict_row(&self, row: &[f64]) -> BinaryLabel {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { prediction } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

fn gini(attack: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = attack as f64 / total as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

fn majority(attack: usize, total: usize) -> BinaryLabel {
    // Tie goes to attack.
    if attack * 2 >= total {
        BinaryLabel::Attack
    } else {
        BinaryLabel::Normal
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn find_best_split(
    table: &FeatureTable,
    labels: &[BinaryLabel],
    rows: &[u32],
) -> Option<BestSplit> {
    let total = rows.len();
    let attack_total = rows
        .iter()
        .filter(|&&r| labels[r as usize].is_attack())
        .count();
    let parent_impurity = gini(attack_total, total);
    if parent_impurity == 0.0 {
        return None;
    }
    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(total);
    for feature in 0..table.feature_count() {
        let column = table.column(feature);
        sorted.clear();
        sorted.extend(
            rows.iter()
                .map(|&r| (column[r as usize], labels[r as usize].is_attack())),
        );
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_attack = 0usize;
        for i in 0..total - 1 {
            if sorted[i].1 {
                left_attack += 1;
            }
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            if a == b {
                continue;
            }
            let threshold = a + (b - a) / 2.0;
            // Guard against midpoints that round onto b and stop separating.
            if threshold >= b {
                continue;
            }
            let left_total = i + 1;
            let right_total = total - left_total;
            let right_attack = attack_total - left_attack;
            let weighted = (left_total as f64 * gini(left_attack, left_total)
                + right_total as f64 * gini(right_attack, right_total))
                / total as f64;
            let decrease = parent_impurity - weighted;
            // Strict improvement keeps the first (lowest feature index,
            // lowest threshold) candidate on ties.
            if decrease > 0.0 && best.as_ref().map_or(true, |b| decrease > b.decrease) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

fn build_node(
    table: &FeatureTable,
    labels: &[BinaryLabel],
    rows: &[u32],
    depth: usize,
    config: &TreeConfig,
) -> TreeNode {
    let attack = rows
        .iter()
        .filter(|&&r| labels[r as usize].is_attack())
        .count();
    if depth >= config.max_depth {
        return TreeNode::Leaf {
            prediction: majority(attack, rows.len()),
        };
    }
    let Some(split) = find_best_split(table, labels, rows) else {
        return TreeNode::Leaf {
            prediction: majority(attack, rows.len()),
        };
    };
    let column = table.column(split.feature);
    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
        .iter()
        .partition(|&&r| column[r as usize] <= split.threshold);
    if left_rows.is_empty() || right_rows.is_empty() {
        return TreeNode::Leaf {
            prediction: majority(attack, rows.len()),
        };
    }
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build_node(table, labels, &left_rows, depth + 1, config)),
        right: Box::new(build_node(table, labels, &right_rows, depth + 1, config)),
    }
}

/// Train a binary Gini tree. Fully deterministic given the inputs.
pub fn train_tree(
    table: &FeatureTable,
    labels: &[BinaryLabel],
    config: &TreeConfig,
) -> Result<DecisionTree, EvalError> {
    if labels.len() != table.row_count() {
        return Err(EvalError::LabelMismatch {
            labels: labels.len(),
            rows: table.row_count(),
        });
    }
    if table.row_count() < 2 {
        return Err(EvalError::TooFewRows {
            found: table.row_count(),
            required: 2,
        });
    }
    let attacks = labels.iter().filter(|l| l.is_attack()).count();
    if attacks == 0 || attacks == labels.len() {
        return Err(EvalError::SingleClass);
    }
    let rows: Vec<u32> = (0..table.row_count() as u32).collect();
    Ok(DecisionTree {
        root: build_node(table, labels, &rows, 0, config),
        feature_names: table.names().to_vec(),
    })
}

/// Accuracy, precision, recall, F1 plus the confusion counts, with attack as
/// the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub feature_set: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl EvalReport {
    pub fn from_confusion(feature_set: &str, tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let total = (tp + fp + tn + fn_) as f64;
        let accuracy = if total > 0.0 {
            (tp + tn) as f64 / total
        } else {
            0.0
        };
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            feature_set: feature_set.to_string(),
            accuracy,
            precision,
            recall,
            f1,
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn test_size(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Flat key=value block.
    pub fn to_kv_block(&self) -> String {
        format!(
            "feature_set={}\naccuracy={:.6}\nprecision={:.6}\nrecall={:.6}\nf1={:.6}\n\
             tp={}\nfp={}\ntn={}\nfn={}\n",
            self.feature_set,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }

    /// Machine-readable single line.
    pub fn to_summary_line(&self) -> String {
        format!(
            "eval feature_set={} accuracy={:.6} precision={:.6} recall={:.6} f1={:.6} \
             tp={} fp={} tn={} fn={}",
            self.feature_set,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.tp,
            self.fp,
            self.tn,
            self.fn_
        )
    }
}

/// Score a trained tree on a table with matching columns.
pub fn evaluate(
    model: &DecisionTree,
    table: &FeatureTable,
    labels: &[BinaryLabel],
    feature_set: &str,
) -> Result<EvalReport, EvalError> {
    if model.feature_names != table.names() {
        return Err(EvalError::SchemaMismatch(format!(
            "model trained on {} columns, table has {}",
            model.feature_names.len(),
            table.names().len()
        )));
    }
    if labels.len() != table.row_count() {
        return Err(EvalError::LabelMismatch {
            labels: labels.len(),
            rows: table.row_count(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for row in 0..table.row_count() {
        let predicted = model.predict_row(&table.row(row));
        match (predicted.is_attack(), labels[row].is_attack()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(EvalReport::from_confusion(feature_set, tp, fp, tn, fn_))
}

/// Per-metric differences (enriched - baseline) plus the non-degradation
/// verdict: enriched accuracy must not fall more than epsilon below baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub accuracy_delta: f64,
    pub precision_delta: f64,
    pub recall_delta: f64,
    pub f1_delta: f64,
    pub epsilon: f64,
    pub passed: bool,
}

impl Comparison {
    pub fn to_kv_block(&self) -> String {
        format!(
            "accuracy_delta={:.6}\nprecision_delta={:.6}\nrecall_delta={:.6}\n\
             f1_delta={:.6}\nepsilon={:.6}\npass={}\n",
            self.accuracy_delta,
            self.precision_delta,
            self.recall_delta,
            self.f1_delta,
            self.epsilon,
            self.passed
        )
    }

    pub fn to_summary_line(&self) -> String {
        format!(
            "compare accuracy_delta={:.6} precision_delta={:.6} recall_delta={:.6} \
             f1_delta={:.6} epsilon={:.6} pass={}",
            self.accuracy_delta,
            self.precision_delta,
            self.recall_delta,
            self.f1_delta,
            self.epsilon,
            self.passed
        )
    }
}

pub fn compare(
    baseline: &EvalReport,
    enriched: &EvalReport,
    epsilon: f64,
) -> Result<Comparison, EvalError> {
    if baseline.test_size() != enriched.test_size() {
        return Err(EvalError::SplitMismatch {
            left: baseline.test_size(),
            right: enriched.test_size(),
        });
    }
    let accuracy_delta = enriched.accuracy - baseline.accuracy;
    Ok(Comparison {
        accuracy_delta,
        precision_delta: enriched.precision - baseline.precision,
        recall_delta: enriched.recall - baseline.recall,
        f1_delta: enriched.f1 - baseline.f1,
        epsilon,
        passed: enriched.accuracy >= baseline.accuracy - epsilon,
    })
}

/// Seeded stratified split: per class, a shuffled `train_fraction` share
/// goes to training. Index lists come back sorted ascending.
pub fn stratified_split(
    labels: &[BinaryLabel],
    train_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [BinaryLabel::Normal, BinaryLabel::Attack] {
        let mut indices: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| i)
            .collect();
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut take = (indices.len() as f64 * train_fraction).round() as usize;
        if indices.len() >= 2 {
            take = take.clamp(1, indices.len() - 1);
        }
        train.extend(&indices[..take]);
        test.extend(&indices[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pattern: &[u8]) -> Vec<BinaryLabel> {
        pattern
            .iter()
            .map(|b| {
                if *b == 0 {
                    BinaryLabel::Normal
                } else {
                    BinaryLabel::Attack
                }
            })
            .collect()
    }

    #[test]
    fn separable_feature_needs_one_split() {
        let table = FeatureTable::new(
            vec!["x".to_string()],
            vec![vec![1.0, 2.0, 3.0, 7.0, 8.0, 9.0]],
        );
        let l = labels(&[0, 0, 0, 1, 1, 1]);
        let tree = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        let report = evaluate(&tree, &table, &l, "train").unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn identical_rows_collapse_to_majority_leaf() {
        let table = FeatureTable::new(vec!["x".to_string()], vec![vec![5.0; 5]]);
        let l = labels(&[1, 1, 1, 0, 0]);
        let tree = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.predict_row(&[5.0]), BinaryLabel::Attack);
    }

    #[test]
    fn exact_tie_predicts_attack() {
        let table = FeatureTable::new(vec!["x".to_string()], vec![vec![5.0; 4]]);
        let l = labels(&[1, 1, 0, 0]);
        let tree = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        assert_eq!(tree.predict_row(&[5.0]), BinaryLabel::Attack);
    }

    #[test]
    fn two_feature_function_is_learnable() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut l = Vec::new();
        for _ in 0..200 {
            let x: f64 = rng.gen_range(0.0..10.0);
            let y: f64 = rng.gen_range(0.0..10.0);
            xs.push(x);
            ys.push(y);
            // label = (x > 6) xor (y > 4)
            l.push(if (x > 6.0) != (y > 4.0) {
                BinaryLabel::Attack
            } else {
                BinaryLabel::Normal
            });
        }
        let table = FeatureTable::new(vec!["x".into(), "y".into()], vec![xs, ys]);
        let tree = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        let report = evaluate(&tree, &table, &l, "train").unwrap();
        assert!(
            report.accuracy >= 0.95,
            "training accuracy {} below 0.95",
            report.accuracy
        );
    }

    #[test]
    fn training_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let columns: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..100).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let names = (0..5).map(|i| format!("f{i}")).collect();
        let table = FeatureTable::new(names, columns);
        let label_row: Vec<u8> = (0..100).map(|i| u8::from(i % 3 == 0)).collect();
        let l = labels(&label_row);
        let t1 = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        let t2 = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn single_class_is_rejected() {
        let table = FeatureTable::new(vec!["x".into()], vec![vec![1.0, 2.0]]);
        assert!(matches!(
            train_tree(&table, &labels(&[0, 0]), &TreeConfig::default()),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let report = EvalReport::from_confusion("t", 10, 0, 10, 0);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn always_attack_on_even_split() {
        let report = EvalReport::from_confusion("t", 10, 10, 0, 0);
        assert_eq!(report.accuracy, 0.5);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.precision, 0.5);
    }

    #[test]
    fn hand_computed_confusion_metrics() {
        let report = EvalReport::from_confusion("t", 8, 2, 7, 3);
        assert!((report.accuracy - 0.75).abs() < 1e-12);
        assert!((report.precision - 0.8).abs() < 1e-12);
        assert!((report.recall - 8.0 / 11.0).abs() < 1e-12);
        assert!((report.f1 - 0.7619047619047619).abs() < 1e-9);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let table = FeatureTable::new(
            vec!["x".to_string()],
            vec![vec![1.0, 2.0, 7.0, 8.0]],
        );
        let l = labels(&[0, 0, 1, 1]);
        let tree = train_tree(&table, &l, &TreeConfig::default()).unwrap();
        let other = FeatureTable::new(
            vec!["y".to_string()],
            vec![vec![1.0, 2.0, 7.0, 8.0]],
        );
        assert!(matches!(
            evaluate(&tree, &other, &l, "t"),
            Err(EvalError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn comparison_deltas_and_verdict() {
        let base = EvalReport::from_confusion("baseline", 90, 5, 95, 10);
        let same = compare(&base, &base, 0.01).unwrap();
        assert_eq!(same.accuracy_delta, 0.0);
        assert!(same.passed);

        let better = EvalReport::from_confusion("enriched", 94, 5, 95, 6);
        let up = compare(&base, &better, 0.01).unwrap();
        assert!(up.accuracy_delta > 0.0);
        assert!(up.passed);

        let worse = EvalReport::from_confusion("enriched", 60, 5, 95, 40);
        let down = compare(&base, &worse, 0.01).unwrap();
        assert!(down.accuracy_delta < -0.01);
        assert!(!down.passed);
    }

    #[test]
    fn split_mismatch_is_rejected() {
        let a = EvalReport::from_confusion("a", 10, 0, 10, 0);
        let b = EvalReport::from_confusion("b", 10, 0, 9, 0);
        assert!(matches!(
            compare(&a, &b, 0.01),
            Err(EvalError::SplitMismatch { .. })
        ));
    }

    #[test]
    fn stratified_split_preserves_proportions() {
        let mut pattern = vec![0u8; 80];
        pattern.extend(vec![1u8; 20]);
        let l = labels(&pattern);
        let (train, test) = stratified_split(&l, 0.8, 42);
        assert_eq!(train.len() + test.len(), 100);
        let train_attacks = train.iter().filter(|&&i| l[i].is_attack()).count();
        let test_attacks = test.iter().filter(|&&i| l[i].is_attack()).count();
        // 80/20 of each class, within one record.
        assert!((train_attacks as i64 - 16).abs() <= 1);
        assert!((test_attacks as i64 - 4).abs() <= 1);
        assert!((train.len() as i64 - 80).abs() <= 2);
        // No overlap, no loss.
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let pattern: Vec<u8> = (0..50).map(|i| u8::from(i % 4 == 0)).collect();
        let l = labels(&pattern);
        assert_eq!(stratified_split(&l, 0.8, 7), stratified_split(&l, 0.8, 7));
        assert_ne!(stratified_split(&l, 0.8, 7), stratified_split(&l, 0.8, 8));
    }
}
