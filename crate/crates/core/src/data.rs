//! Trial data model, validation, column transforms, and CSV ingestion.
//!
//! A [`TrialDataset`] holds one row per participant: a binary treatment
//! indicator, baseline covariates, candidate negative control outcomes (NCOs),
//! and the primary outcome. Column roles are always declared by the caller;
//! nothing is inferred from header names. Missing cells are rejected.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of participants accepted by [`TrialDataset::new`].
pub const MIN_ROWS: usize = 4;

/// Named real-valued columns of equal length, stored column-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedColumns {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl NamedColumns {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidParameter(format!("duplicate column `{name}`")));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.position(name).map(|j| self.columns[j].as_slice())
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Observed data from a two-arm randomized trial.
///
/// Invariants (checked at construction): at least [`MIN_ROWS`] rows, every
/// column of length `n`, both arms non-empty, finite values only, and a
/// design randomization probability strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    treatment_name: String,
    outcome_name: String,
    treatment: Vec<u8>,
    covariates: NamedColumns,
    ncos: NamedColumns,
    outcome: Vec<f64>,
    design_pi: f64,
}

impl TrialDataset {
    pub fn new(
        treatment: Vec<u8>,
        covariates: NamedColumns,
        ncos: NamedColumns,
        outcome: Vec<f64>,
        design_pi: f64,
    ) -> Result<Self> {
        Self::with_names("A", "Y", treatment, covariates, ncos, outcome, design_pi)
    }

    pub fn with_names(
        treatment_name: impl Into<String>,
        outcome_name: impl Into<String>,
        treatment: Vec<u8>,
        covariates: NamedColumns,
        ncos: NamedColumns,
        outcome: Vec<f64>,
        design_pi: f64,
    ) -> Result<Self> {
        let data = Self {
            treatment_name: treatment_name.into(),
            outcome_name: outcome_name.into(),
            treatment,
            covariates,
            ncos,
            outcome,
            design_pi,
        };
        data.validate()?;
        Ok(data)
    }

    fn validate(&self) -> Result<()> {
        let n = self.treatment.len();
        if n < MIN_ROWS {
            return Err(Error::TooFewRows(n));
        }
        if self.outcome.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {} rows, treatment has {n}",
                self.outcome.len()
            )));
        }
        for (name, col) in self
            .covariates
            .names
            .iter()
            .zip(&self.covariates.columns)
            .chain(self.ncos.names.iter().zip(&self.ncos.columns))
        {
            if col.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column `{name}` has {} rows, treatment has {n}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingCell {
                    row: row + 1,
                    column: name.clone(),
                });
            }
        }
        if let Some(row) = self.outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingCell {
                row: row + 1,
                column: self.outcome_name.clone(),
            });
        }
        if let Some(row) = self.treatment.iter().position(|&a| a > 1) {
            return Err(Error::NonBinaryTreatment {
                row: row + 1,
                column: self.treatment_name.clone(),
                value: self.treatment[row].to_string(),
            });
        }
        let n1 = self.n_treated();
        if n1 == 0 {
            return Err(Error::EmptyArm(1));
        }
        if n1 == n {
            return Err(Error::EmptyArm(0));
        }
        if !(self.design_pi > 0.0 && self.design_pi < 1.0) {
            return Err(Error::InvalidPi(self.design_pi));
        }
        let mut all = self.covariates.names.iter().chain(&self.ncos.names);
        if let Some(dup) = all.find(|name| {
            self.covariates.position(name).is_some() && self.ncos.position(name).is_some()
                || **name == self.outcome_name
                || **name == self.treatment_name
        }) {
            return Err(Error::InvalidParameter(format!(
                "column `{dup}` is assigned more than one role"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&a| a == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Observed treatment proportion, `n1 / n`.
    pub fn pi_hat(&self) -> f64 {
        self.n_treated() as f64 / self.n() as f64
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn covariates(&self) -> &NamedColumns {
        &self.covariates
    }

    pub fn ncos(&self) -> &NamedColumns {
        &self.ncos
    }

    pub fn design_pi(&self) -> f64 {
        self.design_pi
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Looks up the outcome, a covariate, or an NCO column by name.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if name == self.outcome_name {
            return Some(&self.outcome);
        }
        self.covariates.get(name).or_else(|| self.ncos.get(name))
    }

    pub fn with_design_pi(&self, design_pi: f64) -> Result<Self> {
        let mut next = self.clone();
        next.design_pi = design_pi;
        next.validate()?;
        Ok(next)
    }

    /// Same units and columns with a different outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.outcome = outcome;
        next.validate()?;
        Ok(next)
    }

    /// Same units and columns with a different treatment assignment.
    pub fn with_treatment(&self, treatment: Vec<u8>) -> Result<Self> {
        let mut next = self.clone();
        next.treatment = treatment;
        next.validate()?;
        Ok(next)
    }

    /// Replaces one named column, keeping its role.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "replacement for `{name}` has {} rows, dataset has {}",
                values.len(),
                self.n()
            )));
        }
        let mut next = self.clone();
        if name == next.outcome_name {
            next.outcome = values;
        } else if let Some(j) = next.covariates.position(name) {
            next.covariates.columns[j] = values;
        } else if let Some(j) = next.ncos.position(name) {
            next.ncos.columns[j] = values;
        } else {
            return Err(Error::UnknownColumn(name.to_string()));
        }
        next.validate()?;
        Ok(next)
    }
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub ncos: Vec<String>,
}

impl ColumnRoles {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            covariates: Vec::new(),
            ncos: Vec::new(),
        }
    }

    pub fn covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn ncos<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.ncos = names.into_iter().map(Into::into).collect();
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles, design_pi: f64) -> Result<TrialDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, roles, design_pi)
}

/// Parses a headed, comma-separated table. Row numbers in errors count data
/// rows from 1 (the header is not counted).
pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles, design_pi: f64) -> Result<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let treatment_idx = locate(&roles.treatment)?;
    let outcome_idx = locate(&roles.outcome)?;
    let cov_idx = roles.covariates.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let nco_idx = roles.ncos.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;

    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut cov_cols = vec![Vec::new(); cov_idx.len()];
    let mut nco_cols = vec![Vec::new(); nco_idx.len()];

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |idx: usize, name: &str| -> Result<&str> {
            let raw = record.get(idx).map(str::trim).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingCell {
                    row,
                    column: name.to_string(),
                });
            }
            Ok(raw)
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let raw = cell(idx, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::BadNumber {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                }),
            }
        };

        let a = cell(treatment_idx, &roles.treatment)?;
        treatment.push(match a {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::NonBinaryTreatment {
                    row,
                    column: roles.treatment.clone(),
                    value: other.to_string(),
                })
            }
        });
        outcome.push(number(outcome_idx, &roles.outcome)?);
        for ((col, &idx), name) in cov_cols.iter_mut().zip(&cov_idx).zip(&roles.covariates) {
            col.push(number(idx, name)?);
        }
        for ((col, &idx), name) in nco_cols.iter_mut().zip(&nco_idx).zip(&roles.ncos) {
            col.push(number(idx, name)?);
        }
    }

    TrialDataset::with_names(
        roles.treatment.clone(),
        roles.outcome.clone(),
        treatment,
        NamedColumns::new(roles.covariates.clone(), cov_cols)?,
        NamedColumns::new(roles.ncos.clone(), nco_cols)?,
        outcome,
        design_pi,
    )
}

/// Writes the dataset as CSV: treatment, covariates, NCOs, outcome. Floats use
/// the shortest representation that parses back to the same value.
pub fn emit_csv<W: Write>(data: &TrialDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![data.treatment_name.as_str()];
    header.extend(data.covariates.names.iter().map(String::as_str));
    header.extend(data.ncos.names.iter().map(String::as_str));
    header.push(data.outcome_name.as_str());
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(data.treatment[i].to_string());
        rec.extend(data.covariates.columns.iter().map(|c| c[i].to_string()));
        rec.extend(data.ncos.columns.iter().map(|c| c[i].to_string()));
        rec.push(data.outcome[i].to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Column transformation applied before adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    /// `log10(v + offset)`; needs `min(v) + offset > 0`.
    Log10Offset(f64),
    /// Pooled midrank divided by `n`.
    EmpiricalQuantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub kind: TransformKind,
    pub column: String,
}

impl Transform {
    pub fn new(kind: TransformKind, column: impl Into<String>) -> Self {
        Self {
            kind,
            column: column.into(),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TransformKind::Identity => write!(f, "identity({})", self.column),
            TransformKind::Log10Offset(o) => write!(f, "log10({} + {o})", self.column),
            TransformKind::EmpiricalQuantile => write!(f, "quantile({})", self.column),
        }
    }
}

pub fn apply_transform(data: &TrialDataset, t: &Transform) -> Result<TrialDataset> {
    let values = data
        .column(&t.column)
        .ok_or_else(|| Error::UnknownColumn(t.column.clone()))?;
    let next = match t.kind {
        TransformKind::Identity => values.to_vec(),
        TransformKind::Log10Offset(offset) => log10_offset(values, offset, &t.column)?,
        TransformKind::EmpiricalQuantile => empirical_quantile(values),
    };
    data.with_column(&t.column, next)
}

fn log10_offset(values: &[f64], offset: f64, column: &str) -> Result<Vec<f64>> {
    if !(offset >= 0.0) {
        return Err(Error::InvalidParameter(format!("log10 offset {offset} must be >= 0")));
    }
    values
        .iter()
        .map(|&v| {
            let shifted = v + offset;
            if shifted > 0.0 {
                Ok(shifted.log10())
            } else {
                Err(Error::NonPositiveLog {
                    column: column.to_string(),
                    value: v,
                    offset,
                })
            }
        })
        .collect()
}

/// Empirical CDF on the midrank scale: each value maps to `midrank / n`,
/// so ties share the average of the ranks they occupy. Output lies in
/// (0, 1] and depends on the input only through its ordering.
pub fn empirical_quantile(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = midrank / n as f64;
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles() -> ColumnRoles {
        ColumnRoles::new("A", "Y")
    }

    #[test]
    fn file_round_trip() {
        let csv = "A,X,N,Y\n1,0.1,2,2.5\n0,-1.25,3,1\n1,2,0.5,4\n0,0.3,1e-3,0\n";
        let roles = ColumnRoles::new("A", "Y").covariates(["X"]).ncos(["N"]);
        let data = read_csv(csv.as_bytes(), &roles, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.csv");
        emit_csv(&data, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(load_csv(&path, &roles, 0.5).unwrap(), data);
    }

    #[test]
    fn minimal_file_loads() {
        let csv = "A,Y\n1,2.0\n1,3.5\n1,1\n0,0.5\n";
        let data = read_csv(csv.as_bytes(), &roles(), 0.75).unwrap();
        assert_eq!(data.n(), 4);
        assert_eq!(data.treatment(), &[1, 1, 1, 0]);
        assert_eq!(data.design_pi(), 0.75);
        assert_eq!(data.pi_hat(), 0.75);
        assert!(data.covariates().is_empty() && data.ncos().is_empty());
    }

    #[test]
    fn non_binary_treatment_is_rejected_with_location() {
        let csv = "A,Y\n1,2\n2,3\n0,1\n0,1\n";
        match read_csv(csv.as_bytes(), &roles(), 0.5) {
            Err(Error::NonBinaryTreatment { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "A", "2"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = read_csv("A,Y\n1,2\n1.0,3\n0,1\n0,1\n".as_bytes(), &roles(), 0.5).unwrap_err();
        assert!(err.to_string().contains("non-binary treatment"));
    }

    #[test]
    fn missing_cell_and_column() {
        let csv = "A,X,Y\n1,0.1,2\n1,,3\n0,1,1\n0,2,1\n";
        let r = roles().covariates(["X"]);
        assert!(matches!(
            read_csv(csv.as_bytes(), &r, 0.5),
            Err(Error::MissingCell { row: 2, .. })
        ));
        let r = roles().ncos(["N"]);
        assert!(matches!(read_csv(csv.as_bytes(), &r, 0.5), Err(Error::MissingColumn(c)) if c == "N"));
    }

    #[test]
    fn too_few_rows_and_empty_arm() {
        assert!(matches!(
            read_csv("A,Y\n1,2\n0,3\n0,1\n".as_bytes(), &roles(), 0.5),
            Err(Error::TooFewRows(3))
        ));
        assert!(matches!(
            read_csv("A,Y\n1,2\n1,3\n1,1\n1,1\n".as_bytes(), &roles(), 0.5),
            Err(Error::EmptyArm(0))
        ));
        assert!(matches!(
            read_csv("A,Y\n1,2\n1,3\n1,1\n0,1\n".as_bytes(), &roles(), 1.0),
            Err(Error::InvalidPi(_))
        ));
    }

    #[test]
    fn quantile_rank_arithmetic() {
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0]), vec![1.0, 1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(empirical_quantile(&[1.0, 1.0, 2.0]), vec![0.5, 0.5, 1.0]);
    }

    fn small() -> TrialDataset {
        TrialDataset::new(
            vec![1, 0, 1, 0],
            NamedColumns::new(vec!["X".into()], vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap(),
            NamedColumns::new(vec!["N".into()], vec![vec![0.0, 0.999, 5.0, 1.0]]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn log10_offset_values() {
        let data = small();
        let t = Transform::new(TransformKind::Log10Offset(0.001), "N");
        let out = apply_transform(&data, &t).unwrap();
        let n = out.ncos().get("N").unwrap();
        assert!((n[0] - (-3.0)).abs() < 1e-12);
        // 0.999 + 0.001 is 1 up to rounding, so log10 is 0.
        assert!(n[1].abs() < 1e-12);
        assert_eq!(out.treatment(), data.treatment());
        assert_eq!(out.covariates(), data.covariates());
        assert_eq!(out.outcome(), data.outcome());
    }

    #[test]
    fn log10_of_non_positive_fails() {
        let t = Transform::new(TransformKind::Log10Offset(0.0), "N");
        assert!(matches!(apply_transform(&small(), &t), Err(Error::NonPositiveLog { .. })));
        let t = Transform::new(TransformKind::Identity, "Q");
        assert!(matches!(apply_transform(&small(), &t), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn conflicting_roles_rejected() {
        let csv = "A,Y\n1,2\n1,3\n0,1\n0,1\n";
        let r = roles().covariates(["Y"]);
        assert!(matches!(read_csv(csv.as_bytes(), &r, 0.5), Err(Error::InvalidParameter(_))));
    }
}
