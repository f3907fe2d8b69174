//! Parsing and serialization of NSL-KDD-format flow records.
//!
//! Input files are comma-separated with no header: 41 feature columns, the
//! class label, and the difficulty score (43 columns total). The enriched
//! output adds 16 graph-feature columns and carries a header row.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::enrich::{EnrichedRecord, GraphFeatures, ENRICHED_COLUMNS};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnCountMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {token:?} as a number")]
    NumericParseError {
        row: usize,
        column: String,
        token: String,
    },
    #[error("row {row}, column {column}: invalid value {token:?} ({reason})")]
    InvalidFieldValue {
        row: usize,
        column: String,
        token: String,
        reason: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("records do not share a column layout: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a column holds. Exactly one `Label` and one `Difficulty` per schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Difficulty,
}

impl ColumnKind {
    fn parse(token: &str) -> Result<Self, DatasetError> {
        match token {
            "numeric" => Ok(ColumnKind::Numeric),
            "categorical" => Ok(ColumnKind::Categorical),
            "label" => Ok(ColumnKind::Label),
            "difficulty" => Ok(ColumnKind::Difficulty),
            other => Err(DatasetError::Schema(format!(
                "unknown column kind {other:?} (expected numeric, categorical, label or difficulty)"
            ))),
        }
    }
}

/// Ordered column layout of a flow-record file.
#[derive(Debug, Clone)]
pub struct DatasetSchema {
    columns: Vec<(String, ColumnKind)>,
    feature_count: usize,
}

impl DatasetSchema {
    pub fn new(columns: Vec<(String, ColumnKind)>) -> Result<Self, DatasetError> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::Schema(format!("duplicate column {name:?}")));
            }
        }
        let labels = columns
            .iter()
            .filter(|(_, k)| *k == ColumnKind::Label)
            .count();
        let difficulties = columns
            .iter()
            .filter(|(_, k)| *k == ColumnKind::Difficulty)
            .count();
        if labels != 1 {
            return Err(DatasetError::Schema(format!(
                "expected exactly one label column, found {labels}"
            )));
        }
        if difficulties != 1 {
            return Err(DatasetError::Schema(format!(
                "expected exactly one difficulty column, found {difficulties}"
            )));
        }
        let feature_count = columns.len() - 2;
        Ok(DatasetSchema {
            columns,
            feature_count,
        })
    }

    /// The standard 41-feature NSL-KDD layout plus class label and difficulty.
    pub fn nsl_kdd() -> Self {
        let numeric = ColumnKind::Numeric;
        let categorical = ColumnKind::Categorical;
        let columns = vec![
            ("duration", numeric),
            ("protocol_type", categorical),
            ("service", categorical),
            ("flag", categorical),
            ("src_bytes", numeric),
            ("dst_bytes", numeric),
            ("land", numeric),
            ("wrong_fragment", numeric),
            ("urgent", numeric),
            ("hot", numeric),
            ("num_failed_logins", numeric),
            ("logged_in", numeric),
            ("num_compromised", numeric),
            ("root_shell", numeric),
            ("su_attempted", numeric),
            ("num_root", numeric),
            ("num_file_creations", numeric),
            ("num_shells", numeric),
            ("num_access_files", numeric),
            ("num_outbound_cmds", numeric),
            ("is_host_login", numeric),
            ("is_guest_login", numeric),
            ("count", numeric),
            ("srv_count", numeric),
            ("serror_rate", numeric),
            ("srv_serror_rate", numeric),
            ("rerror_rate", numeric),
            ("srv_rerror_rate", numeric),
            ("same_srv_rate", numeric),
            ("diff_srv_rate", numeric),
            ("srv_diff_host_rate", numeric),
            ("dst_host_count", numeric),
            ("dst_host_srv_count", numeric),
            ("dst_host_same_srv_rate", numeric),
            ("dst_host_diff_srv_rate", numeric),
            ("dst_host_same_src_port_rate", numeric),
            ("dst_host_srv_diff_host_rate", numeric),
            ("dst_host_serror_rate", numeric),
            ("dst_host_srv_serror_rate", numeric),
            ("dst_host_rerror_rate", numeric),
            ("dst_host_srv_rerror_rate", numeric),
            ("class", ColumnKind::Label),
            ("difficulty", ColumnKind::Difficulty),
        ];
        let columns = columns
            .into_iter()
            .map(|(n, k)| (n.to_string(), k))
            .collect();
        DatasetSchema::new(columns).expect("built-in schema is valid")
    }

    /// Parse an override schema: one `name,kind` pair per line, `#` comments
    /// allowed, kind one of numeric/categorical/label/difficulty.
    pub fn from_spec_text(text: &str) -> Result<Self, DatasetError> {
        let mut columns = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, kind) = line.split_once(',').ok_or_else(|| {
                DatasetError::Schema(format!("expected \"name,kind\", got {line:?}"))
            })?;
            columns.push((name.trim().to_string(), ColumnKind::parse(kind.trim())?));
        }
        DatasetSchema::new(columns)
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn columns(&self) -> &[(String, ColumnKind)] {
        &self.columns
    }

    /// Position of `name` among the feature columns (label/difficulty excluded),
    /// i.e. an index into `FlowRecord::fields`.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        let mut idx = 0;
        for (col, kind) in &self.columns {
            match kind {
                ColumnKind::Label | ColumnKind::Difficulty => continue,
                _ => {
                    if col == name {
                        return Some(idx);
                    }
                    idx += 1;
                }
            }
        }
        None
    }

    /// Feature column names in order (label/difficulty excluded).
    pub fn feature_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|(_, k)| !matches!(k, ColumnKind::Label | ColumnKind::Difficulty))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Feature column kinds in order (label/difficulty excluded).
    pub fn feature_kinds(&self) -> Vec<ColumnKind> {
        self.columns
            .iter()
            .map(|(_, k)| *k)
            .filter(|k| !matches!(k, ColumnKind::Label | ColumnKind::Difficulty))
            .collect()
    }

    fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// One feature value of a flow record.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Numeric(f64),
    Categorical(String),
}

impl FieldValue {
    pub fn render(&self) -> String {
        match self {
            FieldValue::Numeric(v) => render_numeric(*v),
            FieldValue::Categorical(s) => s.clone(),
        }
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FieldValue::Numeric(v) => Some(*v),
            FieldValue::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&str> {
        match self {
            FieldValue::Numeric(_) => None,
            FieldValue::Categorical(s) => Some(s),
        }
    }
}

/// Integral values print without a decimal point, everything else with six
/// decimal places. Keeps integer columns byte-identical across a round trip.
pub fn render_numeric(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 9.0e15 {
        format!("{}", value as i64)
    } else {
        format!("{value:.6}")
    }
}

/// One parsed NSL-KDD row: the feature values in schema order, the class
/// label, and the difficulty score.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub fields: Vec<FieldValue>,
    pub class_label: String,
    pub difficulty: i64,
}

impl FlowRecord {
    pub fn numeric(&self, feature_index: usize) -> Option<f64> {
        self.fields.get(feature_index).and_then(FieldValue::as_numeric)
    }

    pub fn categorical(&self, feature_index: usize) -> Option<&str> {
        self.fields
            .get(feature_index)
            .and_then(FieldValue::as_categorical)
    }
}

/// Binary classification target: `normal` stays normal, every other class
/// label counts as an attack. Matching is case-sensitive; the raw dataset
/// files use lowercase labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryLabel {
    Normal,
    Attack,
}

impl BinaryLabel {
    pub fn from_class_label(label: &str) -> Self {
        if label == "normal" {
            BinaryLabel::Normal
        } else {
            BinaryLabel::Attack
        }
    }

    pub fn is_attack(self) -> bool {
        self == BinaryLabel::Attack
    }
}

pub fn binarize_label(record: &FlowRecord) -> BinaryLabel {
    BinaryLabel::from_class_label(&record.class_label)
}

fn parse_numeric_token(
    token: &str,
    row: usize,
    column: &str,
) -> Result<f64, DatasetError> {
    token.trim().parse::<f64>().map_err(|_| DatasetError::NumericParseError {
        row,
        column: column.to_string(),
        token: token.to_string(),
    })
}

fn validate_field(
    name: &str,
    value: &FieldValue,
    row: usize,
) -> Result<(), DatasetError> {
    match (name, value) {
        ("protocol_type", FieldValue::Categorical(v)) => {
            if !matches!(v.as_str(), "tcp" | "udp" | "icmp") {
                return Err(DatasetError::InvalidFieldValue {
                    row,
                    column: name.to_string(),
                    token: v.clone(),
                    reason: "protocol_type must be tcp, udp or icmp".to_string(),
                });
            }
        }
        ("duration" | "src_bytes" | "dst_bytes", FieldValue::Numeric(v)) => {
            if *v < 0.0 {
                return Err(DatasetError::InvalidFieldValue {
                    row,
                    column: name.to_string(),
                    token: render_numeric(*v),
                    reason: "must be non-negative".to_string(),
                });
            }
        }
        _ => {}
    }
    Ok(())
}

fn parse_row(tokens: &[&str], schema: &DatasetSchema, row: usize) -> Result<FlowRecord, DatasetError> {
    if tokens.len() != schema.column_count() {
        return Err(DatasetError::ColumnCountMismatch {
            row,
            expected: schema.column_count(),
            found: tokens.len(),
        });
    }
    let mut fields = Vec::with_capacity(schema.feature_count());
    let mut class_label = String::new();
    let mut difficulty = 0i64;
    for (token, (name, kind)) in tokens.iter().zip(schema.columns()) {
        match kind {
            ColumnKind::Numeric => {
                let value = FieldValue::Numeric(parse_numeric_token(token, row, name)?);
                validate_field(name, &value, row)?;
                fields.push(value);
            }
            ColumnKind::Categorical => {
                let value = FieldValue::Categorical(token.to_string());
                validate_field(name, &value, row)?;
                fields.push(value);
            }
            ColumnKind::Label => class_label = token.to_string(),
            ColumnKind::Difficulty => {
                difficulty = token.trim().parse::<i64>().map_err(|_| {
                    DatasetError::NumericParseError {
                        row,
                        column: name.clone(),
                        token: token.to_string(),
                    }
                })?;
            }
        }
    }
    Ok(FlowRecord {
        fields,
        class_label,
        difficulty,
    })
}

/// Parse a headerless comma-separated flow-record stream. Empty lines are
/// skipped; LF and CRLF endings both accepted. Row numbers in errors are
/// 1-based physical line numbers.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<Vec<FlowRecord>, DatasetError> {
    let mut records = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        records.push(parse_row(&tokens, schema, line_no + 1)?);
    }
    Ok(records)
}

fn render_base_row(record: &FlowRecord, schema: &DatasetSchema) -> String {
    let mut out = Vec::with_capacity(schema.column_count());
    let mut field_iter = record.fields.iter();
    for (_, kind) in schema.columns() {
        match kind {
            ColumnKind::Numeric | ColumnKind::Categorical => {
                let field = field_iter.next().expect("field count checked by caller");
                out.push(field.render());
            }
            ColumnKind::Label => out.push(record.class_label.clone()),
            ColumnKind::Difficulty => out.push(record.difficulty.to_string()),
        }
    }
    out.join(",")
}

/// Serialize plain flow records back into the headerless input layout.
pub fn write_flow_records<W: Write>(
    records: &[FlowRecord],
    schema: &DatasetSchema,
    mut writer: W,
) -> Result<(), DatasetError> {
    for record in records {
        if record.fields.len() != schema.feature_count() {
            return Err(DatasetError::SchemaMismatch(format!(
                "record has {} feature fields, schema expects {}",
                record.fields.len(),
                schema.feature_count()
            )));
        }
        writeln!(writer, "{}", render_base_row(record, schema))?;
    }
    Ok(())
}

/// Write the enriched dataset: one header row (original columns followed by
/// the 16 enrichment columns), then one row per record. Graph-feature floats
/// are rendered with six decimal places.
pub fn write_enriched<W: Write>(
    records: &[EnrichedRecord],
    schema: &DatasetSchema,
    mut writer: W,
) -> Result<(), DatasetError> {
    let mut header = schema.header();
    header.extend_from_slice(&ENRICHED_COLUMNS);
    writeln!(writer, "{}", header.join(","))?;
    for record in records {
        if record.base.fields.len() != schema.feature_count() {
            return Err(DatasetError::SchemaMismatch(format!(
                "record has {} feature fields, schema expects {}",
                record.base.fields.len(),
                schema.feature_count()
            )));
        }
        writeln!(
            writer,
            "{},{}",
            render_base_row(&record.base, schema),
            record.render_enrichment()
        )?;
    }
    Ok(())
}

/// Read an enriched CSV written by [`write_enriched`] back into memory.
/// The header must match the schema columns followed by the enrichment
/// columns exactly.
pub fn parse_enriched<R: BufRead>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<Vec<EnrichedRecord>, DatasetError> {
    let mut expected_header: Vec<String> =
        schema.header().iter().map(|s| s.to_string()).collect();
    expected_header.extend(ENRICHED_COLUMNS.iter().map(|s| s.to_string()));

    let mut lines = reader.lines();
    let header_line = match lines.next() {
        Some(line) => line?,
        None => {
            return Err(DatasetError::SchemaMismatch(
                "enriched file is empty (missing header)".to_string(),
            ))
        }
    };
    let header: Vec<&str> = header_line.trim_end_matches('\r').split(',').collect();
    if header != expected_header.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(DatasetError::SchemaMismatch(
            "enriched header does not match the expected column layout".to_string(),
        ));
    }

    let total_columns = schema.column_count() + ENRICHED_COLUMNS.len();
    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let row = line_no + 2; // 1-based, after the header
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != total_columns {
            return Err(DatasetError::ColumnCountMismatch {
                row,
                expected: total_columns,
                found: tokens.len(),
            });
        }
        let base = parse_row(&tokens[..schema.column_count()], schema, row)?;
        let ext = &tokens[schema.column_count()..];
        let ip = |i: usize| -> Result<std::net::Ipv4Addr, DatasetError> {
            ext[i].parse().map_err(|_| DatasetError::InvalidFieldValue {
                row,
                column: ENRICHED_COLUMNS[i].to_string(),
                token: ext[i].to_string(),
                reason: "not an IPv4 address".to_string(),
            })
        };
        let num = |i: usize| parse_numeric_token(ext[i], row, ENRICHED_COLUMNS[i]);
        let community = |i: usize| -> Result<u32, DatasetError> {
            ext[i].trim().parse::<u32>().map_err(|_| DatasetError::NumericParseError {
                row,
                column: ENRICHED_COLUMNS[i].to_string(),
                token: ext[i].to_string(),
            })
        };
        records.push(EnrichedRecord {
            base,
            src_ip: ip(0)?,
            dst_ip: ip(1)?,
            src: GraphFeatures {
                degree_centrality: num(2)?,
                in_degree_centrality: num(3)?,
                out_degree_centrality: num(4)?,
                betweenness: num(5)?,
                closeness: num(6)?,
                pagerank: num(7)?,
                community: community(8)?,
            },
            dst: GraphFeatures {
                degree_centrality: num(9)?,
                in_degree_centrality: num(10)?,
                out_degree_centrality: num(11)?,
                betweenness: num(12)?,
                closeness: num(13)?,
                pagerank: num(14)?,
                community: community(15)?,
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_row() -> String {
        // 41 features + label + difficulty, modeled on a KDDTrain+ line.
        let mut fields = vec![
            "0".to_string(),
            "tcp".to_string(),
            "http".to_string(),
            "SF".to_string(),
            "491".to_string(),
            "0".to_string(),
        ];
        fields.extend(std::iter::repeat("0".to_string()).take(16));
        fields.push("2".to_string()); // count
        fields.push("2".to_string()); // srv_count
        fields.extend(std::iter::repeat("0.00".to_string()).take(7));
        fields.push("150".to_string()); // dst_host_count
        fields.push("25".to_string()); // dst_host_srv_count
        fields.extend(std::iter::repeat("0.17".to_string()).take(8));
        assert_eq!(fields.len(), 41);
        fields.push("normal".to_string());
        fields.push("20".to_string());
        fields.join(",")
    }

    #[test]
    fn empty_stream_yields_no_records() {
        let schema = DatasetSchema::nsl_kdd();
        let records = parse_dataset(Cursor::new(""), &schema).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn parses_hand_written_row_field_by_field() {
        let schema = DatasetSchema::nsl_kdd();
        let records = parse_dataset(Cursor::new(sample_row()), &schema).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.fields.len(), 41);
        assert_eq!(r.categorical(schema.feature_index("protocol_type").unwrap()), Some("tcp"));
        assert_eq!(r.categorical(schema.feature_index("service").unwrap()), Some("http"));
        assert_eq!(r.numeric(schema.feature_index("src_bytes").unwrap()), Some(491.0));
        assert_eq!(r.numeric(schema.feature_index("dst_bytes").unwrap()), Some(0.0));
        assert_eq!(r.class_label, "normal");
        assert_eq!(r.difficulty, 20);
    }

    #[test]
    fn short_row_reports_column_count_mismatch() {
        let schema = DatasetSchema::nsl_kdd();
        let row = sample_row();
        let short = row.rsplit_once(',').unwrap().0; // drop difficulty -> 42 columns
        let err = parse_dataset(Cursor::new(short), &schema).unwrap_err();
        match err {
            DatasetError::ColumnCountMismatch { row, expected, found } => {
                assert_eq!(row, 1);
                assert_eq!(expected, 43);
                assert_eq!(found, 42);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn numeric_parse_error_reports_row_and_column() {
        let schema = DatasetSchema::nsl_kdd();
        let bad = sample_row().replacen("491", "many", 1);
        let err = parse_dataset(Cursor::new(bad), &schema).unwrap_err();
        match err {
            DatasetError::NumericParseError { row, column, token } => {
                assert_eq!(row, 1);
                assert_eq!(column, "src_bytes");
                assert_eq!(token, "many");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_unknown_protocol() {
        let schema = DatasetSchema::nsl_kdd();
        let bad = sample_row().replacen("tcp", "gre", 1);
        let err = parse_dataset(Cursor::new(bad), &schema).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidFieldValue { .. }), "{err}");
    }

    #[test]
    fn crlf_lines_parse_like_lf() {
        let schema = DatasetSchema::nsl_kdd();
        let text = format!("{}\r\n{}\r\n", sample_row(), sample_row());
        let records = parse_dataset(Cursor::new(text), &schema).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].class_label, "normal");
    }

    #[test]
    fn binarize_is_case_sensitive_lowercase() {
        let schema = DatasetSchema::nsl_kdd();
        let mut records = parse_dataset(Cursor::new(sample_row()), &schema).unwrap();
        assert_eq!(binarize_label(&records[0]), BinaryLabel::Normal);
        records[0].class_label = "neptune".to_string();
        assert_eq!(binarize_label(&records[0]), BinaryLabel::Attack);
        // Raw dataset files use lowercase; anything else is not "normal".
        records[0].class_label = "NORMAL".to_string();
        assert_eq!(binarize_label(&records[0]), BinaryLabel::Attack);
    }

    #[test]
    fn round_trip_preserves_values() {
        let schema = DatasetSchema::nsl_kdd();
        let input = format!("{}\n{}\n", sample_row(), sample_row().replacen("normal", "neptune", 1));
        let records = parse_dataset(Cursor::new(input.clone()), &schema).unwrap();
        let mut out = Vec::new();
        write_flow_records(&records, &schema, &mut out).unwrap();
        let reparsed = parse_dataset(Cursor::new(out), &schema).unwrap();
        assert_eq!(records, reparsed);
    }

    #[test]
    fn schema_rejects_duplicate_and_missing_label() {
        let dup = DatasetSchema::new(vec![
            ("a".into(), ColumnKind::Numeric),
            ("a".into(), ColumnKind::Label),
            ("d".into(), ColumnKind::Difficulty),
        ]);
        assert!(dup.is_err());
        let no_label = DatasetSchema::new(vec![
            ("a".into(), ColumnKind::Numeric),
            ("d".into(), ColumnKind::Difficulty),
        ]);
        assert!(no_label.is_err());
    }

    #[test]
    fn schema_override_text_round_trips() {
        let text = "# toy layout\nx,numeric\nproto,categorical\nclass,label\ndiff,difficulty\n";
        let schema = DatasetSchema::from_spec_text(text).unwrap();
        assert_eq!(schema.column_count(), 4);
        assert_eq!(schema.feature_count(), 2);
        let records = parse_dataset(Cursor::new("1.5,udp,normal,3\n"), &schema).unwrap();
        assert_eq!(records[0].numeric(0), Some(1.5));
        assert_eq!(records[0].categorical(1), Some("udp"));
    }

    #[test]
    fn render_numeric_formats() {
        assert_eq!(render_numeric(491.0), "491");
        assert_eq!(render_numeric(0.0), "0");
        assert_eq!(render_numeric(0.17), "0.170000");
        assert_eq!(render_numeric(-2.5), "-2.500000");
    }
}
