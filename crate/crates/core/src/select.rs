//! Univariate feature ranking over the enriched dataset.
//!
//! The default scorer is the one-way ANOVA F-statistic between the two label
//! groups; a chi-squared scorer for non-negative features sits behind a
//! flag. Categorical columns are ordinal-encoded in order of first
//! appearance in the fitting data; unseen categories map to a reserved code
//! one past the fitted range. src_ip/dst_ip never enter the table
//! (identifier leakage) and neither does the difficulty column.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::dataset::{BinaryLabel, ColumnKind, DatasetSchema};
use crate::enrich::{EnrichedRecord, ENRICHED_COLUMNS};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("all rows carry the same label; scoring needs both classes")]
    SingleClass,
    #[error("need at least {required} rows, got {found}")]
    TooFewRows { found: usize, required: usize },
    #[error("{labels} labels do not line up with {rows} table rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("feature {feature:?} has negative values; chi2 needs non-negative input")]
    NegativeValue { feature: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which columns a table draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    /// The 41 original features only.
    Baseline,
    /// Original features plus the 14 metric columns (ips excluded).
    Enriched,
}

/// Ordinal codes for one categorical column, in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct CategoricalEncoder {
    codes: HashMap<String, usize>,
}

impl CategoricalEncoder {
    fn fit(&mut self, value: &str) {
        let next = self.codes.len();
        self.codes.entry(value.to_string()).or_insert(next);
    }

    /// Unseen categories map to the reserved code just past the fitted range.
    fn encode(&self, value: &str) -> f64 {
        self.codes
            .get(value)
            .copied()
            .unwrap_or(self.codes.len()) as f64
    }
}

/// Encoders and layout fitted on one record set; apply to any other set with
/// the same schema.
#[derive(Debug, Clone)]
pub struct TableSpec {
    feature_set: FeatureSet,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    encoders: Vec<Option<CategoricalEncoder>>,
}

impl TableSpec {
    pub fn fit(records: &[EnrichedRecord], schema: &DatasetSchema, set: FeatureSet) -> Self {
        let rows: Vec<usize> = (0..records.len()).collect();
        TableSpec::fit_rows(records, &rows, schema, set)
    }

    /// Fit the categorical encoders on the given row subset only (e.g. the
    /// training split); other rows hit the reserved unseen code later.
    pub fn fit_rows(
        records: &[EnrichedRecord],
        rows: &[usize],
        schema: &DatasetSchema,
        set: FeatureSet,
    ) -> Self {
        let names: Vec<String> = schema
            .feature_names()
            .into_iter()
            .map(str::to_string)
            .collect();
        let kinds = schema.feature_kinds();
        let mut encoders: Vec<Option<CategoricalEncoder>> = kinds
            .iter()
            .map(|kind| match kind {
                ColumnKind::Categorical => Some(CategoricalEncoder::default()),
                _ => None,
            })
            .collect();
        for &row in rows {
            let record = &records[row];
            for (i, encoder) in encoders.iter_mut().enumerate() {
                if let Some(encoder) = encoder {
                    encoder.fit(record.base.categorical(i).unwrap_or(""));
                }
            }
        }
        TableSpec {
            feature_set: set,
            names,
            kinds,
            encoders,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.names.clone();
        if self.feature_set == FeatureSet::Enriched {
            names.extend(
                ENRICHED_COLUMNS
                    .iter()
                    .filter(|c| !matches!(**c, "src_ip" | "dst_ip"))
                    .map(|c| c.to_string()),
            );
        }
        names
    }

    pub fn build(&self, records: &[EnrichedRecord]) -> FeatureTable {
        let names = self.feature_names();
        let mut columns = vec![Vec::with_capacity(records.len()); names.len()];
        for record in records {
            let mut col = 0;
            for (i, kind) in self.kinds.iter().enumerate() {
                let value = match kind {
                    ColumnKind::Categorical => self.encoders[i]
                        .as_ref()
                        .expect("encoder fitted for categorical column")
                        .encode(record.base.categorical(i).unwrap_or("")),
                    _ => record.base.numeric(i).unwrap_or(0.0),
                };
                columns[col].push(value);
                col += 1;
            }
            if self.feature_set == FeatureSet::Enriched {
                for value in record.metric_values() {
                    columns[col].push(value);
                    col += 1;
                }
            }
        }
        FeatureTable { names, columns }
    }
}

/// Column-major numeric table.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        if let Some(first) = columns.first() {
            assert!(
                columns.iter().all(|c| c.len() == first.len()),
                "ragged columns"
            );
        }
        FeatureTable { names, columns }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn feature_count(&self) -> usize {
        self.names.len()
    }

    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    /// Restrict to a row subset, preserving `rows` order.
    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        FeatureTable {
            names: self.names.clone(),
            columns,
        }
    }
}

fn check_classes(labels: &[BinaryLabel], rows: usize) -> Result<(), SelectError> {
    if labels.len() != rows {
        return Err(SelectError::LabelMismatch {
            labels: labels.len(),
            rows,
        });
    }
    if rows < 2 {
        return Err(SelectError::TooFewRows {
            found: rows,
            required: 2,
        });
    }
    let attacks = labels.iter().filter(|l| l.is_attack()).count();
    if attacks == 0 || attacks == labels.len() {
        return Err(SelectError::SingleClass);
    }
    Ok(())
}

fn anova_f_for_column(values: &[f64], labels: &[BinaryLabel]) -> f64 {
    let n = values.len() as f64;
    let (mut sum_a, mut count_a) = (0.0f64, 0.0f64);
    let (mut sum_n, mut count_n) = (0.0f64, 0.0f64);
    for (value, label) in values.iter().zip(labels) {
        if label.is_attack() {
            sum_a += value;
            count_a += 1.0;
        } else {
            sum_n += value;
            count_n += 1.0;
        }
    }
    let mean_a = sum_a / count_a;
    let mean_n = sum_n / count_n;
    let grand = (sum_a + sum_n) / n;
    let ss_between =
        count_a * (mean_a - grand).powi(2) + count_n * (mean_n - grand).powi(2);
    let mut ss_within = 0.0;
    for (value, label) in values.iter().zip(labels) {
        let mean = if label.is_attack() { mean_a } else { mean_n };
        ss_within += (value - mean).powi(2);
    }
    // df_between = 1 (two groups), df_within = n - 2.
    if ss_between == 0.0 && ss_within == 0.0 {
        return 0.0; // constant feature
    }
    if ss_within == 0.0 {
        return f64::INFINITY; // perfectly separated: sentinel, ranked first
    }
    let f = ss_between / (ss_within / (n - 2.0));
    if f.is_nan() {
        0.0
    } else {
        f
    }
}

/// One-way ANOVA F-statistic per feature, serial path.
pub fn anova_f_scores_serial(
    table: &FeatureTable,
    labels: &[BinaryLabel],
) -> Result<Vec<f64>, SelectError> {
    check_classes(labels, table.row_count())?;
    Ok((0..table.feature_count())
        .map(|i| anova_f_for_column(table.column(i), labels))
        .collect())
}

/// One-way ANOVA F-statistic per feature; columns scored in parallel when
/// the `parallel` feature is enabled. Results are collected in column order,
/// so the output is identical to the serial path.
#[cfg(feature = "parallel")]
pub fn anova_f_scores(
    table: &FeatureTable,
    labels: &[BinaryLabel],
) -> Result<Vec<f64>, SelectError> {
    use rayon::prelude::*;
    check_classes(labels, table.row_count())?;
    Ok((0..table.feature_count())
        .into_par_iter()
        .map(|i| anova_f_for_column(table.column(i), labels))
        .collect())
}

#[cfg(not(feature = "parallel"))]
pub fn anova_f_scores(
    table: &FeatureTable,
    labels: &[BinaryLabel],
) -> Result<Vec<f64>, SelectError> {
    anova_f_scores_serial(table, labels)
}

/// sklearn-style chi2 for non-negative features: per class, observed = sum
/// of the feature over the class rows, expected = class share of the feature
/// total.
pub fn chi2_scores(
    table: &FeatureTable,
    labels: &[BinaryLabel],
) -> Result<Vec<f64>, SelectError> {
    check_classes(labels, table.row_count())?;
    let n = labels.len() as f64;
    let attack_share = labels.iter().filter(|l| l.is_attack()).count() as f64 / n;
    let shares = [1.0 - attack_share, attack_share];
    let mut scores = Vec::with_capacity(table.feature_count());
    for i in 0..table.feature_count() {
        let values = table.column(i);
        if values.iter().any(|v| *v < 0.0) {
            return Err(SelectError::NegativeValue {
                feature: table.names()[i].clone(),
            });
        }
        let mut observed = [0.0f64; 2];
        for (value, label) in values.iter().zip(labels) {
            observed[usize::from(label.is_attack())] += value;
        }
        let total = observed[0] + observed[1];
        let mut chi2 = 0.0;
        for class in 0..2 {
            let expected = shares[class] * total;
            if expected > 0.0 {
                chi2 += (observed[class] - expected).powi(2) / expected;
            }
        }
        scores.push(chi2);
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    AnovaF,
    Chi2,
}

/// One ranked feature.
#[derive(Debug, Clone)]
pub struct RankEntry {
    pub name: String,
    pub score: f64,
    /// 1-based, consecutive.
    pub rank: usize,
    pub in_top_k: bool,
}

/// Features sorted by score descending, ties broken by name ascending.
#[derive(Debug, Clone)]
pub struct FeatureRanking {
    entries: Vec<RankEntry>,
    pub k: usize,
}

impl FeatureRanking {
    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.rank)
    }

    /// `rank<TAB>feature<TAB>score` lines in rank order.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<(), SelectError> {
        for entry in &self.entries {
            let score = if entry.score.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.6}", entry.score)
            };
            writeln!(writer, "{}\t{}\t{}", entry.rank, entry.name, score)?;
        }
        Ok(())
    }
}

/// Score and rank every feature; the top-k get flagged.
pub fn rank_features_with(
    table: &FeatureTable,
    labels: &[BinaryLabel],
    k: usize,
    scorer: Scorer,
) -> Result<FeatureRanking, SelectError> {
    let scores = match scorer {
        Scorer::AnovaF => anova_f_scores(table, labels)?,
        Scorer::Chi2 => chi2_scores(table, labels)?,
    };
    let mut ranked: Vec<(String, f64)> = table
        .names()
        .iter()
        .cloned()
        .zip(scores)
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let entries = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (name, score))| RankEntry {
            name,
            score,
            rank: i + 1,
            in_top_k: i < k,
        })
        .collect();
    Ok(FeatureRanking { entries, k })
}

/// ANOVA-F ranking with the top 50 flagged by default.
pub fn rank_features(
    table: &FeatureTable,
    labels: &[BinaryLabel],
    k: usize,
) -> Result<FeatureRanking, SelectError> {
    rank_features_with(table, labels, k, Scorer::AnovaF)
}

/// The centrality-derived columns (ips excluded) whose rank is at most k,
/// in rank order.
pub fn centralities_in_topk(ranking: &FeatureRanking, k: usize) -> Vec<String> {
    ranking
        .entries()
        .iter()
        .filter(|e| {
            e.rank <= k
                && ENRICHED_COLUMNS.contains(&e.name.as_str())
                && !matches!(e.name.as_str(), "src_ip" | "dst_ip")
        })
        .map(|e| e.name.clone())
        .collect()
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
    fn hand_computed_f_statistic() {
        // Groups (1, 2 | 3, 4): SSB = 4, SSW = 1, F = (4/1)/(1/2) = 8.
        let table = FeatureTable::new(
            vec!["x".to_string()],
            vec![vec![1.0, 2.0, 3.0, 4.0]],
        );
        let scores = anova_f_scores_serial(&table, &labels(&[0, 0, 1, 1])).unwrap();
        assert!((scores[0] - 8.0).abs() < 1e-12, "{}", scores[0]);
    }

    #[test]
    fn constant_feature_scores_zero_and_ranks_last() {
        let table = FeatureTable::new(
            vec!["signal".to_string(), "flat".to_string()],
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![7.0, 7.0, 7.0, 7.0]],
        );
        let ranking = rank_features(&table, &labels(&[0, 0, 1, 1]), 50).unwrap();
        assert_eq!(ranking.entries()[0].name, "signal");
        let flat = ranking.entries().last().unwrap();
        assert_eq!(flat.name, "flat");
        assert_eq!(flat.score, 0.0);
    }

    #[test]
    fn label_identical_feature_gets_infinity_sentinel() {
        let table = FeatureTable::new(
            vec!["leak".to_string(), "noise".to_string()],
            vec![vec![0.0, 0.0, 1.0, 1.0], vec![3.0, 1.0, 2.0, 4.0]],
        );
        let ranking = rank_features(&table, &labels(&[0, 0, 1, 1]), 50).unwrap();
        let leak = &ranking.entries()[0];
        assert_eq!(leak.name, "leak");
        assert!(leak.score.is_infinite());
        assert_eq!(leak.rank, 1);
    }

    #[test]
    fn f_scores_are_affine_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = rng.gen_range(4..40usize);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let label_row: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let a = loop {
                let a: f64 = rng.gen_range(-3.0..3.0);
                if a.abs() > 0.1 {
                    break a;
                }
            };
            let b = rng.gen_range(-10.0..10.0);
            let transformed: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let t1 = FeatureTable::new(vec!["x".into()], vec![values]);
            let t2 = FeatureTable::new(vec!["x".into()], vec![transformed]);
            let l = labels(&label_row);
            let s1 = anova_f_scores_serial(&t1, &l).unwrap()[0];
            let s2 = anova_f_scores_serial(&t2, &l).unwrap()[0];
            let tolerance = 1e-9 * s1.abs().max(1.0);
            assert!(
                (s1 - s2).abs() <= tolerance,
                "affine transform changed F: {s1} vs {s2} (a={a}, b={b})"
            );
        }
    }

    #[test]
    fn ties_break_by_name() {
        let table = FeatureTable::new(
            vec!["zeta".to_string(), "alpha".to_string()],
            vec![vec![1.0, 1.0, 2.0, 2.0], vec![1.0, 1.0, 2.0, 2.0]],
        );
        let ranking = rank_features(&table, &labels(&[0, 0, 1, 1]), 1).unwrap();
        assert_eq!(ranking.entries()[0].name, "alpha");
        assert_eq!(ranking.entries()[1].name, "zeta");
        assert!(ranking.entries()[0].in_top_k);
        assert!(!ranking.entries()[1].in_top_k);
    }

    #[test]
    fn single_class_and_short_tables_are_rejected() {
        let table = FeatureTable::new(vec!["x".into()], vec![vec![1.0, 2.0]]);
        assert!(matches!(
            rank_features(&table, &labels(&[1, 1]), 5),
            Err(SelectError::SingleClass)
        ));
        let tiny = FeatureTable::new(vec!["x".into()], vec![vec![1.0]]);
        assert!(matches!(
            rank_features(&tiny, &labels(&[1]), 5),
            Err(SelectError::TooFewRows { .. })
        ));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_scores_equal_serial() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let columns: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..200).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let names = (0..30).map(|i| format!("f{i}")).collect();
        let table = FeatureTable::new(names, columns);
        let label_row: Vec<u8> = (0..200).map(|i| u8::from(i % 3 == 0)).collect();
        let l = labels(&label_row);
        assert_eq!(
            anova_f_scores_serial(&table, &l).unwrap(),
            anova_f_scores(&table, &l).unwrap()
        );
    }

    #[test]
    fn chi2_rejects_negative_values_and_scores_signal() {
        let table = FeatureTable::new(
            vec!["x".to_string()],
            vec![vec![0.0, 0.0, 5.0, 5.0]],
        );
        let l = labels(&[0, 0, 1, 1]);
        let scores = chi2_scores(&table, &l).unwrap();
        assert!(scores[0] > 0.0);
        let bad = FeatureTable::new(vec!["x".into()], vec![vec![-1.0, 0.0, 1.0, 2.0]]);
        assert!(matches!(
            chi2_scores(&bad, &l),
            Err(SelectError::NegativeValue { .. })
        ));
    }

    #[test]
    fn centralities_in_topk_filters_by_rank() {
        let mut entries = Vec::new();
        for (i, name) in ["src_betweenness", "duration", "src_ip", "dst_pagerank"]
            .iter()
            .enumerate()
        {
            entries.push(RankEntry {
                name: name.to_string(),
                score: 10.0 - i as f64,
                rank: i + 1,
                in_top_k: true,
            });
        }
        let ranking = FeatureRanking { entries, k: 50 };
        let hits = centralities_in_topk(&ranking, 50);
        assert_eq!(hits, vec!["src_betweenness", "dst_pagerank"]);
        assert!(centralities_in_topk(&ranking, 0).is_empty());
        assert!(centralities_in_topk(&ranking, 1) == vec!["src_betweenness"]);
    }

    #[test]
    fn ranking_is_deterministic() {
        let table = FeatureTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![1.0, 2.0, 3.0, 4.0],
                vec![4.0, 3.0, 2.0, 1.0],
                vec![1.0, 1.0, 1.0, 1.0],
            ],
        );
        let l = labels(&[0, 1, 0, 1]);
        let r1 = rank_features(&table, &l, 2).unwrap();
        let r2 = rank_features(&table, &l, 2).unwrap();
        let order1: Vec<&str> = r1.entries().iter().map(|e| e.name.as_str()).collect();
        let order2: Vec<&str> = r2.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(order1, order2);
        for pair in r1.entries().windows(2) {
            assert_eq!(pair[1].rank, pair[0].rank + 1);
        }
    }
}
