//! CSV ingestion, label mapping, splitting and standardization.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use smkl_core::linalg::Matrix;
use smkl_core::rng::SeededRng;

use crate::error::{Error, Result};

/// Columns with a standard deviation below this pass through unscaled.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// How to read a CSV file.
///
/// With an empty `column` list every non-label column is numeric.
/// Otherwise every header column must be listed.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub label: String,
    /// Label values mapped to `+1`. Defaults to the lexicographically
    /// first value.
    #[serde(default)]
    pub positive: Option<Vec<String>>,
    #[serde(default)]
    pub column: Vec<ColumnSpec>,
}

fn default_delimiter() -> char {
    ','
}

impl Schema {
    pub fn with_label(label: &str) -> Self {
        Schema { delimiter: ',', label: label.into(), positive: None, column: Vec::new() }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let s: Schema = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        if !s.delimiter.is_ascii() {
            return Err(Error::format(origin, "delimiter must be a single ASCII character"));
        }
        let labels = s.column.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if !s.column.is_empty() && (labels != 1 || !s.column.iter().any(|c| c.kind == ColumnKind::Label && c.name == s.label)) {
            return Err(Error::format(origin, format!("exactly one column must be the label \"{}\"", s.label)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn kinds(&self, header: &[String], origin: &Path) -> Result<Vec<ColumnKind>> {
        if !header.contains(&self.label) {
            return Err(Error::format(origin, format!("label column \"{}\" not found in header", self.label)));
        }
        if self.column.is_empty() {
            return Ok(header
                .iter()
                .map(|h| if *h == self.label { ColumnKind::Label } else { ColumnKind::Numeric })
                .collect());
        }
        let map: BTreeMap<&str, ColumnKind> = self.column.iter().map(|c| (c.name.as_str(), c.kind)).collect();
        for c in &self.column {
            if !header.contains(&c.name) {
                return Err(Error::format(origin, format!("schema column \"{}\" not found in header", c.name)));
            }
        }
        header
            .iter()
            .map(|h| {
                map.get(h.as_str())
                    .copied()
                    .ok_or_else(|| Error::format(origin, format!("column \"{h}\" is not described by the schema")))
            })
            .collect()
    }
}

/// One-hot levels of the categorical columns, fitted on a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    kinds: Vec<ColumnKind>,
    /// Sorted levels per categorical column; the first is omitted.
    levels: BTreeMap<usize, Vec<String>>,
    feature_names: Vec<String>,
}

impl Encoder {
    fn fit(header: &[String], kinds: &[ColumnKind], rows: &[(u64, Vec<String>)]) -> Self {
        let mut levels = BTreeMap::new();
        let mut feature_names = Vec::new();
        for (j, k) in kinds.iter().enumerate() {
            match k {
                ColumnKind::Numeric => feature_names.push(header[j].clone()),
                ColumnKind::Categorical => {
                    let set: BTreeSet<&str> = rows.iter().map(|(_, r)| r[j].as_str()).collect();
                    let lv: Vec<String> = set.into_iter().map(String::from).collect();
                    feature_names.extend(lv.iter().skip(1).map(|l| format!("{}={l}", header[j])));
                    levels.insert(j, lv);
                }
                _ => {}
            }
        }
        Encoder { kinds: kinds.to_vec(), levels, feature_names }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Encodes one record; `line` and `header` feed error messages.
    fn transform_row(&self, line: u64, header: &[String], rec: &[String], origin: &Path) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.feature_names.len());
        for (j, k) in self.kinds.iter().enumerate() {
            let cell = rec[j].as_str();
            match k {
                ColumnKind::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::format(origin, format!("line {line}, column \"{}\": cannot parse \"{cell}\" as a number", header[j]))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::format(origin, format!("line {line}, column \"{}\": value is not finite", header[j])));
                    }
                    out.push(v);
                }
                ColumnKind::Categorical => {
                    let lv = &self.levels[&j];
                    let pos = lv.iter().position(|l| l == cell).ok_or_else(|| {
                        Error::format(origin, format!("line {line}, column \"{}\": unknown category \"{cell}\"", header[j]))
                    })?;
                    out.extend((1..lv.len()).map(|i| if i == pos { 1.0 } else { 0.0 }));
                }
                _ => {}
            }
        }
        Ok(out)
    }
}

/// Features and `±1` labels read from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Raw label strings, one per row.
    pub labels: Vec<String>,
    /// Label values mapped to `+1`.
    pub positive: Vec<String>,
    pub encoder: Encoder,
    /// Rows dropped for missing values.
    pub warnings: Vec<String>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Reads `text` as CSV. `origin` names the source in error messages.
pub fn parse_csv(text: &str, schema: &Schema, origin: &Path) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::format(origin, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let kinds = schema.kinds(&header, origin)?;
    let label_col = kinds.iter().position(|k| *k == ColumnKind::Label).unwrap();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::format(origin, format!("line {line}: expected {} fields, found {}", header.len(), rec.len())));
        }
        let cells: Vec<String> = rec.iter().map(String::from).collect();
        let missing = cells.iter().zip(&kinds).position(|(c, k)| c.is_empty() && *k != ColumnKind::Ignore);
        if let Some(j) = missing {
            warnings.push(format!("line {line}: missing value in column \"{}\", row dropped", header[j]));
            continue;
        }
        rows.push((line, cells));
    }
    if rows.len() < 2 {
        return Err(Error::format(origin, format!("need at least 2 usable rows, found {}", rows.len())));
    }

    let encoder = Encoder::fit(&header, &kinds, &rows);
    let d = encoder.feature_names.len();
    if d == 0 {
        return Err(Error::format(origin, "no feature columns"));
    }
    let mut data = Vec::with_capacity(rows.len() * d);
    for (line, cells) in &rows {
        data.extend(encoder.transform_row(*line, &header, cells, origin)?);
    }
    let labels: Vec<String> = rows.iter().map(|(_, c)| c[label_col].clone()).collect();
    let positive = match &schema.positive {
        Some(p) if !p.is_empty() => p.clone(),
        Some(_) => return Err(Error::format(origin, "positive label list is empty")),
        None => vec![labels.iter().min().unwrap().clone()],
    };
    let y = labels.iter().map(|l| if positive.contains(l) { 1.0 } else { -1.0 }).collect();
    Ok(RawDataset {
        feature_names: encoder.feature_names.clone(),
        x: Matrix::from_vec(rows.len(), d, data),
        y,
        labels,
        positive,
        encoder,
        warnings,
    })
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema, path)
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population mean and standard deviation per column. Constant columns
    /// get mean 0 and scale 1, so they pass through unchanged.
    pub fn fit(x: &Matrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        for j in 0..d {
            let m = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
            let v = (0..n).map(|i| (x[(i, j)] - m).powi(2)).sum::<f64>() / n as f64;
            if v.sqrt() >= STD_FLOOR {
                mean[j] = m;
                std[j] = v.sqrt();
            }
        }
        Scaler { mean, std }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub x: Matrix,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: TrainingSet,
    pub test: TrainingSet,
    pub scaler: Scaler,
    pub seed: u64,
    /// Row indices of the raw dataset, in split order.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded shuffle, then the first `round(train_frac·n)` rows train.
/// The scaler is fitted on the training rows only.
pub fn split_standardize(raw: &RawDataset, seed: u64, train_frac: f64) -> Result<SplitDataset> {
    let n = raw.len();
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Usage(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    if !raw.y.contains(&1.0) || !raw.y.contains(&-1.0) {
        return Err(Error::Data("dataset has a single class".into()));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let (tr, te) = order.split_at(n_train);
    let ytr: Vec<f64> = tr.iter().map(|&i| raw.y[i]).collect();
    if !ytr.contains(&1.0) || !ytr.contains(&-1.0) {
        return Err(Error::Data(format!("training split for seed {seed} has a single class; try another seed")));
    }
    let xtr = raw.x.select_rows(tr);
    let scaler = Scaler::fit(&xtr);
    Ok(SplitDataset {
        train: TrainingSet { x: scaler.transform(&xtr), y: ytr },
        test: TrainingSet { x: scaler.transform(&raw.x.select_rows(te)), y: te.iter().map(|&i| raw.y[i]).collect() },
        scaler,
        seed,
        train_rows: tr.to_vec(),
        test_rows: te.to_vec(),
    })
}
