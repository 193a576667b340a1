//! Tabular classification data: CSV and LIBSVM loaders, categorical
//! encoding, and train/test splitting.
//!
//! Every loader produces a dense [`Dataset`] with labels re-indexed to
//! `0..n_classes`. The [`Schema`] records how source columns and labels were
//! encoded so that a second file (a test split, say) can be parsed with the
//! same codes.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Csv,
    Libsvm,
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceFormat::Csv => f.write_str("csv"),
            SourceFormat::Libsvm => f.write_str("libsvm"),
        }
    }
}

/// How a string-valued CSV column becomes numeric features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// One feature holding the level's first-appearance code.
    #[default]
    Ordinal,
    /// One 0/1 feature per level.
    OneHot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Levels in first-appearance order; a level's code is its position.
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Encoding metadata shared by every file of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Feature columns of the source file, label column excluded.
    pub columns: Vec<SourceColumn>,
    pub encoding: CategoricalEncoding,
    /// Original label spelling for each class index.
    pub class_names: Vec<String>,
}

impl Schema {
    /// Schema for purely numeric data with generated names.
    pub fn numeric(n_features: usize, class_names: Vec<String>) -> Self {
        Schema {
            columns: (0..n_features)
                .map(|j| SourceColumn {
                    name: format!("f{j}"),
                    kind: ColumnKind::Numeric,
                })
                .collect(),
            encoding: CategoricalEncoding::Ordinal,
            class_names,
        }
    }

    /// Names of the encoded feature columns.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for col in &self.columns {
            match (&col.kind, self.encoding) {
                (ColumnKind::Categorical { levels }, CategoricalEncoding::OneHot) => {
                    names.extend(levels.iter().map(|l| format!("{}={}", col.name, l)));
                }
                _ => names.push(col.name.clone()),
            }
        }
        names
    }

    pub fn n_features(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match (&c.kind, self.encoding) {
                (ColumnKind::Categorical { levels }, CategoricalEncoding::OneHot) => levels.len(),
                _ => 1,
            })
            .sum()
    }
}

/// Dense feature matrix with dense class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    source_format: SourceFormat,
    schema: Schema,
}

impl Dataset {
    /// Builds a dataset from in-memory parts, checking every invariant.
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        let schema = Schema::numeric(features.cols(), class_names);
        Self::with_schema(features, labels, schema, SourceFormat::Csv)
    }

    fn with_schema(features: Matrix, labels: Vec<usize>, schema: Schema, source_format: SourceFormat) -> Result<Self> {
        let n_classes = schema.class_names.len();
        if n_classes < 2 {
            return Err(Error::Data(format!("need at least 2 classes, found {n_classes}")));
        }
        if features.rows() == 0 {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Data(format!("label {bad} out of range for {n_classes} classes")));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature at row {}, column {}",
                pos / features.cols(),
                pos % features.cols()
            )));
        }
        let feature_names = Some(schema.feature_names()).filter(|n| n.len() == features.cols());
        Ok(Dataset {
            features,
            labels,
            n_classes,
            feature_names,
            source_format,
            schema,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn source_format(&self) -> SourceFormat {
        self.source_format
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, keeping the label space and schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            source_format: self.source_format,
            schema: self.schema.clone(),
        }
    }

    /// Writes the encoded features plus a trailing `label` column.
    ///
    /// Values are printed in shortest round-trip form, so parsing the file
    /// back yields the same matrix.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let names = self
            .feature_names
            .clone()
            .unwrap_or_else(|| (0..self.n_features()).map(|j| format!("f{j}")).collect());
        let io_err = |e: csv::Error| Error::Runtime(format!("writing {}: {e}", path.display()));
        w.write_record(names.iter().map(String::as_str).chain(["label"]))
            .map_err(io_err)?;
        for (row, &y) in self.features.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.schema.class_names[y].clone());
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Which CSV column holds the class label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    #[default]
    Last,
}

impl LabelColumn {
    /// Integers select by position, `last` the final column, anything else by header name.
    pub fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse::<usize>() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        }
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub delimiter: u8,
    pub encoding: CategoricalEncoding,
    /// Reuse encodings from an earlier file instead of inferring them.
    pub schema: Option<Schema>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: LabelColumn::Last,
            has_header: true,
            delimiter: b',',
            encoding: CategoricalEncoding::Ordinal,
            schema: None,
        }
    }
}

/// Parses a CSV file with the default options except for the label column and header flag.
pub fn parse_csv(path: impl AsRef<Path>, label_column: LabelColumn, has_header: bool) -> Result<Dataset> {
    parse_csv_with(
        path,
        &CsvOptions {
            label_column,
            has_header,
            ..CsvOptions::default()
        },
    )
}

pub fn parse_csv_with(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut width = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::RaggedRow {
                    path: path.into(),
                    line,
                    expected: w,
                    found: cells.len(),
                })
            }
            _ => {}
        }
        if opts.has_header && header.is_none() {
            header = Some(cells);
        } else {
            rows.push((line, cells));
        }
    }
    let width = width.ok_or_else(|| Error::Data(format!("{} is empty", path.display())))?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    if width < 2 {
        return Err(Error::Data(format!(
            "{} needs at least one feature column and a label column",
            path.display()
        )));
    }

    let label_idx = match &opts.label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::Data(format!("label column {i} out of range ({width} columns)"))),
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Data(format!("label column {name:?} not found in header")))?,
    };
    let feature_cols: Vec<usize> = (0..width).filter(|&j| j != label_idx).collect();

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };

    let columns: Vec<SourceColumn> = match &opts.schema {
        Some(schema) => {
            if schema.columns.len() != feature_cols.len() {
                return Err(Error::DimensionMismatch {
                    expected: schema.columns.len(),
                    got: feature_cols.len(),
                });
            }
            schema.columns.clone()
        }
        None => {
            let mut cols = Vec::with_capacity(feature_cols.len());
            for (k, &j) in feature_cols.iter().enumerate() {
                let name = header.as_ref().map_or_else(|| format!("f{k}"), |h| h[j].clone());
                let numeric = rows.iter().filter(|(_, r)| r[j].parse::<f64>().is_ok()).count();
                let kind = if numeric == 0 {
                    let mut levels: Vec<String> = Vec::new();
                    for (line, r) in &rows {
                        let v = &r[j];
                        if v.is_empty() {
                            return Err(parse_err(*line, format!("missing value in column {name:?}")));
                        }
                        if !levels.contains(v) {
                            levels.push(v.clone());
                        }
                    }
                    ColumnKind::Categorical { levels }
                } else {
                    ColumnKind::Numeric
                };
                cols.push(SourceColumn { name, kind });
            }
            cols
        }
    };

    let class_names: Vec<String> = match &opts.schema {
        Some(schema) => schema.class_names.clone(),
        None => {
            let mut names: Vec<String> = Vec::new();
            for (_, r) in &rows {
                if !names.contains(&r[label_idx]) {
                    names.push(r[label_idx].clone());
                }
            }
            names
        }
    };
    let class_index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let schema = Schema {
        columns,
        encoding: opts.schema.as_ref().map_or(opts.encoding, |s| s.encoding),
        class_names: class_names.clone(),
    };
    let level_index: Vec<Option<HashMap<&str, usize>>> = schema
        .columns
        .iter()
        .map(|c| match &c.kind {
            ColumnKind::Categorical { levels } => {
                Some(levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect())
            }
            ColumnKind::Numeric => None,
        })
        .collect();

    let n_features = schema.n_features();
    let mut data = Vec::with_capacity(rows.len() * n_features);
    let mut labels = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        for ((col, &j), levels) in schema.columns.iter().zip(&feature_cols).zip(&level_index) {
            let cell = &r[j];
            if cell.is_empty() {
                return Err(parse_err(*line, format!("missing value in column {:?}", col.name)));
            }
            match (levels, &col.kind) {
                (None, _) => {
                    let v: f64 = cell.parse().map_err(|_| {
                        parse_err(
                            *line,
                            format!("unparseable numeric cell {cell:?} in column {:?}", col.name),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(parse_err(
                            *line,
                            format!("non-finite value {cell:?} in column {:?}", col.name),
                        ));
                    }
                    data.push(v);
                }
                (Some(index), ColumnKind::Categorical { levels }) => {
                    // Levels unseen when the schema was built share the code one past the last level.
                    let code = index.get(cell.as_str()).copied();
                    match schema.encoding {
                        CategoricalEncoding::Ordinal => data.push(code.unwrap_or(levels.len()) as f64),
                        CategoricalEncoding::OneHot => {
                            data.extend((0..levels.len()).map(|l| f64::from(u8::from(code == Some(l)))))
                        }
                    }
                }
                (Some(_), ColumnKind::Numeric) => unreachable!(),
            }
        }
        let y = class_index
            .get(r[label_idx].as_str())
            .copied()
            .ok_or_else(|| parse_err(*line, format!("label {:?} not among known classes", r[label_idx])))?;
        labels.push(y);
    }

    if class_names.len() < 2 {
        return Err(Error::Data(format!(
            "{} contains a single class ({:?})",
            path.display(),
            class_names.first().map(String::as_str).unwrap_or("")
        )));
    }
    let features = Matrix::from_vec(rows.len(), n_features, data);
    Dataset::with_schema(features, labels, schema, SourceFormat::Csv)
}

/// Parses a LIBSVM-format file (`label idx:val ...`, 1-based indices).
///
/// Absent indices are zero. Labels are mapped to dense indices in ascending
/// numeric order, so `{-1, +1}` becomes `{0, 1}`.
pub fn parse_libsvm(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<Dataset> {
    parse_libsvm_with(path, n_features, None)
}

/// Like [`parse_libsvm`], but labels are mapped through an existing schema.
pub fn parse_libsvm_with(
    path: impl AsRef<Path>,
    n_features: Option<usize>,
    schema: Option<&Schema>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };

    let mut raw_labels: Vec<f64> = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(lineno, format!("bad label {label_tok:?}")))?;
        let mut row = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature index 0 (indices are 1-based)".into()));
            }
            if idx <= last {
                return Err(parse_err(
                    lineno,
                    format!("feature index {idx} does not increase (previous {last})"),
                ));
            }
            let v: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("bad numeric token {val:?}")))?;
            last = idx;
            row.push((idx - 1, v));
        }
        max_index = max_index.max(last);
        raw_labels.push(label);
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let n = match (n_features, schema) {
        (Some(n), _) => n,
        (None, Some(s)) => s.n_features(),
        (None, None) => max_index,
    };
    if max_index > n {
        return Err(Error::Data(format!(
            "feature index {max_index} exceeds declared feature count {n}"
        )));
    }

    let class_values: Vec<f64> = match schema {
        Some(s) => s
            .class_names
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::Data(format!("class name {c:?} is not numeric")))
            })
            .collect::<Result<_>>()?,
        None => {
            let mut v = raw_labels.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        }
    };
    if class_values.len() < 2 {
        return Err(Error::Data(format!("{} contains a single class", path.display())));
    }

    let mut data = vec![0.0; entries.len() * n];
    for (i, row) in entries.iter().enumerate() {
        for &(j, v) in row {
            data[i * n + j] = v;
        }
    }
    let labels = raw_labels
        .iter()
        .map(|l| {
            class_values
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::Data(format!("label {l} not among known classes")))
        })
        .collect::<Result<Vec<_>>>()?;

    let schema = match schema {
        Some(s) => s.clone(),
        None => Schema::numeric(n, class_values.iter().map(|v| v.to_string()).collect()),
    };
    Dataset::with_schema(
        Matrix::from_vec(entries.len(), n, data),
        labels,
        schema,
        SourceFormat::Libsvm,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Train and test come from separate files; nothing to split.
    PresplitFiles,
    Holdout {
        fraction: f64,
    },
    StratifiedHoldout {
        fraction: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

/// Splits into `(train, test)`, test taking `fraction` of the samples.
///
/// Both parts keep ascending original order. The stratified variant rounds
/// each class's test share separately, so per-class proportions hold to
/// within one sample.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.labels(), data.n_classes(), spec)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Index form of [`split`].
pub fn split_indices(labels: &[usize], n_classes: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let m = labels.len();
    let mut rng = rng::seeded(spec.seed);
    let check = |f: f64| {
        if f > 0.0 && f < 1.0 {
            Ok(f)
        } else {
            Err(Error::Config(format!("holdout fraction {f} must lie in (0, 1)")))
        }
    };
    let mut test = match spec.kind {
        SplitKind::PresplitFiles => {
            return Err(Error::Config(
                "presplit data is split by supplying separate train and test files".into(),
            ))
        }
        SplitKind::Holdout { fraction } => {
            let fraction = check(fraction)?;
            if m < 2 {
                return Err(Error::Data("need at least 2 samples to split".into()));
            }
            let mut idx: Vec<usize> = (0..m).collect();
            idx.shuffle(&mut rng);
            let n_test = ((m as f64 * fraction).round() as usize).clamp(1, m - 1);
            idx.truncate(n_test);
            idx
        }
        SplitKind::StratifiedHoldout { fraction } => {
            let fraction = check(fraction)?;
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for (i, &y) in labels.iter().enumerate() {
                by_class[y].push(i);
            }
            let mut test = Vec::new();
            for (c, mut idx) in by_class.into_iter().enumerate() {
                if idx.is_empty() {
                    continue;
                }
                if idx.len() < 2 {
                    return Err(Error::Data(format!(
                        "class {c} has {} sample(s); stratified holdout needs at least 2",
                        idx.len()
                    )));
                }
                idx.shuffle(&mut rng);
                let n_test = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1);
                test.extend_from_slice(&idx[..n_test]);
            }
            test
        }
    };
    test.sort_unstable();
    let mut in_test = vec![false; m];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..m).filter(|&i| !in_test[i]).collect();
    Ok((train, test))
}
