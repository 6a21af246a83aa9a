//! Covariate encoding and dense design matrices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CovariateValue, SurveyRecord};

/// Level list per categorical covariate. Column layout of a design built from
/// this encoding: an intercept, then one dummy per non-reference level of
/// each covariate in name order. The reference level is the first level in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Encoding {
    covariates: BTreeMap<String, Vec<String>>,
}

impl Encoding {
    pub fn from_records<'a, I>(records: I) -> Result<Encoding>
    where
        I: IntoIterator<Item = &'a SurveyRecord>,
    {
        let mut levels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in records {
            for (name, value) in &r.covariates {
                match value {
                    CovariateValue::Level(l) => {
                        levels.entry(name.clone()).or_default().insert(l.clone());
                    }
                    CovariateValue::Real(_) => {
                        return Err(Error::Data(format!(
                            "covariate '{name}' is numeric; bin it before encoding"
                        )))
                    }
                    CovariateValue::Absent => {
                        return Err(Error::Data(format!(
                            "covariate '{name}' has absent values; recode missingness before encoding"
                        )))
                    }
                }
            }
        }
        Ok(Encoding {
            covariates: levels
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.covariates.keys().map(String::as_str)
    }

    pub fn levels(&self, name: &str) -> Option<&[String]> {
        self.covariates.get(name).map(Vec::as_slice)
    }

    /// Level index of `name` for record `r`.
    pub fn code(&self, r: &SurveyRecord, name: &str) -> Result<usize> {
        let levels = self
            .covariates
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown covariate '{name}'")))?;
        match r.covariate(name) {
            CovariateValue::Level(l) => levels
                .binary_search(l)
                .map_err(|_| Error::Data(format!("level '{l}' of '{name}' is not in the encoding"))),
            other => Err(Error::Data(format!(
                "covariate '{name}' is not categorical ({other:?})"
            ))),
        }
    }

    fn selected<'a>(&'a self, selection: Option<&'a [String]>) -> Result<Vec<(&'a str, &'a [String])>> {
        match selection {
            None => Ok(self
                .covariates
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_slice()))
                .collect()),
            Some(names) => {
                let mut out = Vec::with_capacity(names.len());
                let mut sorted: Vec<&String> = names.iter().collect();
                sorted.sort();
                sorted.dedup();
                for n in sorted {
                    let levels = self
                        .covariates
                        .get(n)
                        .ok_or_else(|| Error::Config(format!("unknown covariate '{n}'")))?;
                    out.push((n.as_str(), levels.as_slice()));
                }
                Ok(out)
            }
        }
    }

    /// Dummy-coded design with intercept over the selected covariates (all
    /// covariates when `selection` is `None`).
    pub fn design(&self, records: &[SurveyRecord], selection: Option<&[String]>) -> Result<DesignMatrix> {
        let cols = self.selected(selection)?;
        let mut names = vec!["(intercept)".to_string()];
        let mut offsets = Vec::with_capacity(cols.len());
        for (name, levels) in &cols {
            offsets.push(names.len());
            for l in levels.iter().skip(1) {
                names.push(format!("{name}={l}"));
            }
        }
        let p = names.len();
        let mut data = vec![0.0; records.len() * p];
        for (i, r) in records.iter().enumerate() {
            let row = &mut data[i * p..(i + 1) * p];
            row[0] = 1.0;
            for ((name, _), &off) in cols.iter().zip(&offsets) {
                let code = self.code(r, name)?;
                if code > 0 {
                    row[off + code - 1] = 1.0;
                }
            }
        }
        Ok(DesignMatrix {
            n: records.len(),
            p,
            data,
            names,
        })
    }
}

/// Row-major dense design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> DesignMatrix {
        let p = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == p), "ragged design rows");
        DesignMatrix {
            n: rows.len(),
            p,
            data: rows.iter().flatten().copied().collect(),
            names: (0..p).map(|j| format!("x{j}")).collect(),
        }
    }

    /// Build from row-major data with column names.
    pub fn new(n: usize, p: usize, data: Vec<f64>, names: Vec<String>) -> DesignMatrix {
        assert_eq!(data.len(), n * p, "design data length");
        assert_eq!(names.len(), p, "design name count");
        DesignMatrix { n, p, data, names }
    }

    /// Append one-hot columns for categories `1..k` (category 0 is the
    /// reference), with `code(i)` giving row `i`'s category.
    pub fn with_one_hot(&self, k: usize, prefix: &str, code: impl Fn(usize) -> usize) -> DesignMatrix {
        let p = self.p + k - 1;
        let mut data = Vec::with_capacity(self.n * p);
        for i in 0..self.n {
            data.extend_from_slice(self.row(i));
            let c = code(i);
            data.extend((1..k).map(|j| if j == c { 1.0 } else { 0.0 }));
        }
        let mut names = self.names.clone();
        names.extend((1..k).map(|j| format!("{prefix}={j}")));
        DesignMatrix { n: self.n, p, data, names }
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept(n: usize) -> DesignMatrix {
        DesignMatrix {
            n,
            p: 1,
            data: vec![1.0; n],
            names: vec!["(intercept)".into()],
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            n: idx.len(),
            p: self.p,
            data,
            names: self.names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        DesignMatrix {
            n: self.n,
            p: cols.len(),
            data,
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(race: &str, age: &str) -> SurveyRecord {
        let mut r = SurveyRecord::default();
        r.covariates.insert("race".into(), CovariateValue::Level(race.into()));
        r.covariates.insert("age".into(), CovariateValue::Level(age.into()));
        r
    }

    #[test]
    fn dummy_layout_drops_reference_level() {
        let recs = vec![record("w", "18-24"), record("b", "25+"), record("missing", "25+")];
        let enc = Encoding::from_records(&recs).unwrap();
        assert_eq!(enc.levels("race").unwrap(), ["b", "missing", "w"]);
        let x = enc.design(&recs, None).unwrap();
        assert_eq!(
            x.names(),
            ["(intercept)", "age=25+", "race=missing", "race=w"]
        );
        assert_eq!(x.row(0), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(x.row(1), [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(x.row(2), [1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn selection_restricts_columns() {
        let recs = vec![record("w", "18-24"), record("b", "25+")];
        let enc = Encoding::from_records(&recs).unwrap();
        let x = enc.design(&recs, Some(&["age".to_string()])).unwrap();
        assert_eq!(x.ncols(), 2);
        let x0 = enc.design(&recs, Some(&[])).unwrap();
        assert_eq!(x0.ncols(), 1);
        assert!(enc.design(&recs, Some(&["nope".to_string()])).is_err());
    }

    #[test]
    fn absent_values_are_rejected() {
        let mut r = record("w", "18-24");
        r.covariates.insert("x".into(), CovariateValue::Absent);
        assert!(Encoding::from_records(&[r]).is_err());
    }
}
