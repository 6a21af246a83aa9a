//! Survey ingestion: parsing delimiter-separated extracts into
//! [`SurveyRecord`]s, missingness recoding, quantile binning, auxiliary
//! region-level joins and analytic-sample construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::Encoding;
use crate::error::{Error, Result};
use crate::{encode_mediators, MEDIATOR_LEVELS};

/// Level assigned to absent categorical values.
pub const MISSING_LEVEL: &str = "missing";

/// Value of one covariate for one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateValue {
    Level(String),
    Real(f64),
    Absent,
}

impl CovariateValue {
    pub fn is_absent(&self) -> bool {
        matches!(self, CovariateValue::Absent)
    }

    fn render(&self) -> String {
        match self {
            CovariateValue::Level(s) => s.clone(),
            CovariateValue::Real(x) => format!("{x}"),
            CovariateValue::Absent => String::new(),
        }
    }
}

/// One survey respondent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub outcome: Option<u8>,
    pub treatment: Option<u8>,
    pub mediator1: Option<u8>,
    pub mediator2: Option<u8>,
    pub acceptance: Option<u8>,
    pub covariates: BTreeMap<String, CovariateValue>,
    pub region: Option<String>,
    pub weight: Option<f64>,
}

/// Item response indicators, derived from the optional fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseFlags {
    pub outcome: bool,
    pub treatment: bool,
    pub mediator1: bool,
    pub mediator2: bool,
}

impl ResponseFlags {
    pub fn complete(&self) -> bool {
        self.outcome && self.treatment && self.mediator1 && self.mediator2
    }
}

impl SurveyRecord {
    pub fn responses(&self) -> ResponseFlags {
        ResponseFlags {
            outcome: self.outcome.is_some(),
            treatment: self.treatment.is_some(),
            mediator1: self.mediator1.is_some(),
            mediator2: self.mediator2.is_some(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.responses().complete()
    }

    pub fn covariate(&self, name: &str) -> &CovariateValue {
        self.covariates.get(name).unwrap_or(&CovariateValue::Absent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

fn default_m1_threshold() -> u8 {
    2
}

fn default_m2_threshold() -> u8 {
    3
}

/// Column-role mapping for a survey extract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    pub mediator1: String,
    pub mediator2: String,
    /// Vaccine-acceptance column. When absent every row is treated as accepting.
    #[serde(default)]
    pub acceptance: Option<String>,
    #[serde(default)]
    pub region_key: Option<String>,
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    #[serde(default)]
    pub delimiter: Delimiter,
    /// Cell values treated as missing in addition to the empty string.
    #[serde(default)]
    pub missing_sentinels: Vec<String>,
    /// Drop rows with unparseable values instead of blanking the bad cell.
    #[serde(default)]
    pub drop_invalid_rows: bool,
    /// `M1* = 1[M1 >= m1_threshold]`.
    #[serde(default = "default_m1_threshold")]
    pub m1_threshold: u8,
    /// `M2* = 1[M2 >= m2_threshold]`.
    #[serde(default = "default_m2_threshold")]
    pub m2_threshold: u8,
}

impl Schema {
    /// Schema used for simulated data: roles `y, a, m1, m2, v` and the given
    /// categorical covariates.
    pub fn simulated<S: AsRef<str>>(covariates: &[S]) -> Schema {
        Schema {
            outcome: "y".into(),
            treatment: "a".into(),
            mediator1: "m1".into(),
            mediator2: "m2".into(),
            acceptance: Some("v".into()),
            region_key: None,
            weight: None,
            covariates: covariates
                .iter()
                .map(|c| CovariateSpec {
                    name: c.as_ref().to_string(),
                    kind: CovariateKind::Categorical,
                })
                .collect(),
            delimiter: Delimiter::Comma,
            missing_sentinels: Vec::new(),
            drop_invalid_rows: false,
            m1_threshold: default_m1_threshold(),
            m2_threshold: default_m2_threshold(),
        }
    }

    pub fn covariate_kind(&self, name: &str) -> Option<CovariateKind> {
        self.covariates.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    fn role_columns(&self) -> Vec<&str> {
        let mut cols = vec![
            self.outcome.as_str(),
            self.treatment.as_str(),
            self.mediator1.as_str(),
            self.mediator2.as_str(),
        ];
        cols.extend(self.acceptance.as_deref());
        cols.extend(self.region_key.as_deref());
        cols.extend(self.weight.as_deref());
        cols
    }
}

/// Per-column recoding of raw strings before parsing; a value mapped to the
/// empty string becomes absent.
pub type ValueMaps = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub column: String,
    pub value: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Clone)]
pub struct LoadedSurvey {
    pub records: Vec<SurveyRecord>,
    pub report: LoadReport,
}

fn parse_binary(s: &str) -> std::result::Result<u8, String> {
    match s {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        _ => Err("expected 0 or 1".into()),
    }
}

fn parse_ordinal(s: &str) -> std::result::Result<u8, String> {
    match s.parse::<u8>() {
        Ok(v) if (v as usize) < MEDIATOR_LEVELS => Ok(v),
        _ => Err(format!("expected ordinal level in 0..{}", MEDIATOR_LEVELS - 1)),
    }
}

/// Parse a survey extract. Empty cells (and configured sentinels) become
/// absent values; columns not named by the schema are ignored, as are lines
/// starting with `#`.
pub fn load_survey(path: &Path, schema: &Schema, value_maps: &ValueMaps) -> Result<LoadedSurvey> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_survey(file, schema, value_maps)
}

/// [`load_survey`] over any reader.
pub fn read_survey<R: std::io::Read>(
    reader: R,
    schema: &Schema,
    value_maps: &ValueMaps,
) -> Result<LoadedSurvey> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter.byte())
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);

    let mut missing_cols = Vec::new();
    let mut locate = |name: &str| -> usize {
        match index_of(name) {
            Some(i) => i,
            None => {
                missing_cols.push(name.to_string());
                usize::MAX
            }
        }
    };
    let y_col = locate(&schema.outcome);
    let a_col = locate(&schema.treatment);
    let m1_col = locate(&schema.mediator1);
    let m2_col = locate(&schema.mediator2);
    let v_col = schema.acceptance.as_deref().map(&mut locate);
    let region_col = schema.region_key.as_deref().map(&mut locate);
    let weight_col = schema.weight.as_deref().map(&mut locate);
    let cov_cols: Vec<(usize, &CovariateSpec)> =
        schema.covariates.iter().map(|c| (locate(&c.name), c)).collect();
    if !missing_cols.is_empty() {
        return Err(Error::Schema(format!(
            "column(s) required by schema not found in header: {}",
            missing_cols.join(", ")
        )));
    }

    let sentinels: BTreeSet<&str> = schema.missing_sentinels.iter().map(String::as_str).collect();
    let mut records = Vec::new();
    let mut report = LoadReport::default();

    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = row_idx + 1;
        report.rows_read += 1;
        let mut row_errors = Vec::new();

        let cell = |col: usize, name: &str| -> Option<String> {
            let raw = row.get(col).unwrap_or("").trim();
            let mapped = value_maps
                .get(name)
                .and_then(|m| m.get(raw))
                .map(String::as_str)
                .unwrap_or(raw);
            if mapped.is_empty() || sentinels.contains(mapped) {
                None
            } else {
                Some(mapped.to_string())
            }
        };

        let mut parse_field = |col: usize,
                               name: &str,
                               parser: fn(&str) -> std::result::Result<u8, String>|
         -> Option<u8> {
            let v = cell(col, name)?;
            match parser(&v) {
                Ok(x) => Some(x),
                Err(reason) => {
                    row_errors.push(RowError {
                        row: row_no,
                        column: name.to_string(),
                        value: v,
                        reason,
                    });
                    None
                }
            }
        };

        let outcome = parse_field(y_col, &schema.outcome, parse_binary);
        let treatment = parse_field(a_col, &schema.treatment, parse_binary);
        let mediator1 = parse_field(m1_col, &schema.mediator1, parse_ordinal);
        let mediator2 = parse_field(m2_col, &schema.mediator2, parse_ordinal);
        let acceptance = match (v_col, schema.acceptance.as_deref()) {
            (Some(c), Some(name)) => parse_field(c, name, parse_binary),
            _ => Some(1),
        };
        let region = match (region_col, schema.region_key.as_deref()) {
            (Some(c), Some(name)) => cell(c, name),
            _ => None,
        };
        let weight = match (weight_col, schema.weight.as_deref()) {
            (Some(c), Some(name)) => match cell(c, name) {
                None => None,
                Some(v) => match v.parse::<f64>() {
                    Ok(w) if w >= 0.0 && w.is_finite() => Some(w),
                    _ => {
                        row_errors.push(RowError {
                            row: row_no,
                            column: name.to_string(),
                            value: v,
                            reason: "expected nonnegative real weight".into(),
                        });
                        None
                    }
                },
            },
            _ => None,
        };

        let mut covariates = BTreeMap::new();
        for &(col, spec) in &cov_cols {
            let value = match cell(col, &spec.name) {
                None => CovariateValue::Absent,
                Some(v) => match spec.kind {
                    CovariateKind::Categorical => CovariateValue::Level(v),
                    CovariateKind::Numeric => match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => CovariateValue::Real(x),
                        _ => {
                            row_errors.push(RowError {
                                row: row_no,
                                column: spec.name.clone(),
                                value: v,
                                reason: "expected real number".into(),
                            });
                            CovariateValue::Absent
                        }
                    },
                },
            };
            covariates.insert(spec.name.clone(), value);
        }

        let bad_row = !row_errors.is_empty();
        report.errors.extend(row_errors);
        if bad_row && schema.drop_invalid_rows {
            report.rows_dropped += 1;
            continue;
        }
        records.push(SurveyRecord {
            outcome,
            treatment,
            mediator1,
            mediator2,
            acceptance,
            covariates,
            region,
            weight,
        });
    }
    Ok(LoadedSurvey { records, report })
}

/// Write records in the format [`load_survey`] reads with `schema`.
pub fn write_survey(path: &Path, records: &[SurveyRecord], schema: &Schema) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_survey_to(file, records, schema)
}

pub fn write_survey_to<W: Write>(writer: W, records: &[SurveyRecord], schema: &Schema) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter.byte())
        .from_writer(writer);
    let mut header: Vec<&str> = schema.role_columns();
    header.extend(schema.covariates.iter().map(|c| c.name.as_str()));
    wtr.write_record(&header)?;
    let opt = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![opt(r.outcome), opt(r.treatment), opt(r.mediator1), opt(r.mediator2)];
        if schema.acceptance.is_some() {
            row.push(opt(r.acceptance));
        }
        if schema.region_key.is_some() {
            row.push(r.region.clone().unwrap_or_default());
        }
        if schema.weight.is_some() {
            row.push(r.weight.map(|w| format!("{w}")).unwrap_or_default());
        }
        for c in &schema.covariates {
            row.push(r.covariate(&c.name).render());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<survey writer>", e))?;
    Ok(())
}

/// Replace absent values of the named categorical covariates by
/// [`MISSING_LEVEL`].
pub fn recode_missing_as_category<S: AsRef<str>>(
    mut records: Vec<SurveyRecord>,
    names: &[S],
    schema: &Schema,
) -> Result<Vec<SurveyRecord>> {
    for name in names {
        let name = name.as_ref();
        match schema.covariate_kind(name) {
            Some(CovariateKind::Categorical) => {}
            Some(CovariateKind::Numeric) => {
                return Err(Error::Config(format!(
                    "covariate '{name}' is numeric; bin it before recoding missingness"
                )))
            }
            None => return Err(Error::Config(format!("unknown covariate '{name}'"))),
        }
    }
    for r in &mut records {
        for name in names {
            let name = name.as_ref();
            let slot = r
                .covariates
                .entry(name.to_string())
                .or_insert(CovariateValue::Absent);
            if slot.is_absent() {
                *slot = CovariateValue::Level(MISSING_LEVEL.to_string());
            }
        }
    }
    Ok(records)
}

/// Cut points for equal-count quantile bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBins {
    /// Upper edges of all bins but the last; value `v` falls in bin
    /// `#{edges < v}`.
    pub edges: Vec<f64>,
}

impl QuantileBins {
    /// Fit `bins` equal-count bins on `values`. Tied cut points collapse, so
    /// heavily tied data may produce fewer bins.
    pub fn fit(values: &[f64], bins: usize) -> Result<QuantileBins> {
        if bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        if values.is_empty() {
            return Ok(QuantileBins { edges: Vec::new() });
        }
        let sorted = crate::stats::sorted(values);
        let n = sorted.len();
        let mut edges: Vec<f64> = Vec::with_capacity(bins - 1);
        for k in 1..bins {
            let rank = (k * n).div_ceil(bins);
            if rank == 0 || rank >= n {
                continue;
            }
            let edge = sorted[rank - 1];
            if edges.last().is_none_or(|&e| edge > e) {
                edges.push(edge);
            }
        }
        Ok(QuantileBins { edges })
    }

    pub fn bin(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e < v)
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn level(&self, v: f64) -> String {
        format!("q{}", self.bin(v) + 1)
    }
}

/// Bin counts per column; columns not listed use `default_bins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinConfig {
    pub default_bins: usize,
    pub columns: BTreeMap<String, usize>,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            default_bins: 5,
            columns: BTreeMap::new(),
        }
    }
}

impl BinConfig {
    pub fn bins_for(&self, column: &str) -> usize {
        self.columns.get(column).copied().unwrap_or(self.default_bins)
    }
}

/// Replace a numeric covariate by its quantile-bin level (`q1`, `q2`, ...),
/// with cut points fit on `fit_on` (all records when `None`). Absent values
/// become [`MISSING_LEVEL`].
pub fn quantile_bin(
    records: &mut [SurveyRecord],
    column: &str,
    bins: usize,
    fit_on: Option<&[usize]>,
) -> Result<QuantileBins> {
    let value_of = |r: &SurveyRecord| match r.covariate(column) {
        CovariateValue::Real(x) => Some(*x),
        _ => None,
    };
    let values: Vec<f64> = match fit_on {
        None => records.iter().filter_map(value_of).collect(),
        Some(idx) => idx.iter().filter_map(|&i| value_of(&records[i])).collect(),
    };
    let cuts = QuantileBins::fit(&values, bins)?;
    for r in records.iter_mut() {
        let level = match r.covariate(column) {
            CovariateValue::Real(x) => cuts.level(*x),
            CovariateValue::Level(s) => {
                return Err(Error::Data(format!(
                    "covariate '{column}' has categorical value '{s}' but is binned as numeric"
                )))
            }
            CovariateValue::Absent => MISSING_LEVEL.to_string(),
        };
        r.covariates
            .insert(column.to_string(), CovariateValue::Level(level));
    }
    Ok(cuts)
}

/// Row predicate over a covariate (or the region key via column `"region"`
/// when no covariate has that name). Absent values always pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowPredicate {
    pub column: String,
    /// Allowed categorical levels; empty means no restriction.
    #[serde(default)]
    pub allowed: Vec<String>,
    /// Excluded categorical levels.
    #[serde(default)]
    pub excluded: Vec<String>,
    /// Inclusive numeric range.
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl RowPredicate {
    pub fn range(column: &str, min: f64, max: f64) -> RowPredicate {
        RowPredicate {
            column: column.to_string(),
            allowed: Vec::new(),
            excluded: Vec::new(),
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn accepts(&self, r: &SurveyRecord) -> bool {
        let value = match r.covariates.get(&self.column) {
            Some(v) => v.clone(),
            None if self.column == "region" => match &r.region {
                Some(s) => CovariateValue::Level(s.clone()),
                None => CovariateValue::Absent,
            },
            None => CovariateValue::Absent,
        };
        match value {
            CovariateValue::Absent => true,
            CovariateValue::Level(s) => {
                if let Ok(x) = s.parse::<f64>() {
                    if !self.in_range(x) {
                        return false;
                    }
                }
                (self.allowed.is_empty() || self.allowed.contains(&s)) && !self.excluded.contains(&s)
            }
            CovariateValue::Real(x) => {
                let s = format!("{x}");
                self.in_range(x)
                    && (self.allowed.is_empty() || self.allowed.contains(&s))
                    && !self.excluded.contains(&s)
            }
        }
    }

    fn in_range(&self, x: f64) -> bool {
        self.min.is_none_or(|m| x >= m) && self.max.is_none_or(|m| x <= m)
    }
}

/// Inclusion rules for the analytic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleFilters {
    /// Drop respondents with `V = 0`.
    pub exclude_hesitant: bool,
    /// Drop respondents with no answer to the acceptance item.
    pub exclude_hesitancy_nonresponse: bool,
    /// Drop respondents without a region key.
    pub require_region: bool,
    pub row_filters: Vec<RowPredicate>,
    /// Use the schema weight column as frequency weights in estimation.
    pub use_weights: bool,
}

impl Default for SampleFilters {
    fn default() -> Self {
        SampleFilters {
            exclude_hesitant: true,
            exclude_hesitancy_nonresponse: true,
            require_region: false,
            row_filters: Vec::new(),
            use_weights: false,
        }
    }
}

/// Counts removed at each step of sample construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionLedger {
    pub total_rows: usize,
    /// Removed by configured row predicates (language, region lists, range rules).
    pub row_filtered: usize,
    pub missing_region: usize,
    pub hesitant_excluded: usize,
    pub hesitancy_nonresponse_excluded: usize,
    /// Accepting respondents who are not complete cases.
    pub incomplete_excluded: usize,
    pub accepting: usize,
    pub final_n: usize,
    /// Complete cases over accepting respondents.
    pub p_r: f64,
}

impl ExclusionLedger {
    /// Records remaining after each step, starting from the input size.
    pub fn remaining(&self) -> [usize; 6] {
        let r0 = self.total_rows;
        let r1 = r0 - self.row_filtered;
        let r2 = r1 - self.missing_region;
        let r3 = r2 - self.hesitant_excluded;
        let r4 = r3 - self.hesitancy_nonresponse_excluded;
        let r5 = r4 - self.incomplete_excluded;
        [r0, r1, r2, r3, r4, r5]
    }
}

/// Dichotomization thresholds for mediators analyzed as outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub m1: u8,
    pub m2: u8,
}

/// Which binary variable plays the outcome role in an outcome analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// The primary outcome `Y`.
    Y,
    /// Dichotomized first mediator `M1*`.
    M1Star,
    /// Dichotomized second mediator `M2*`.
    M2Star,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 3] = [OutcomeKind::Y, OutcomeKind::M1Star, OutcomeKind::M2Star];

    pub fn label(self) -> &'static str {
        match self {
            OutcomeKind::Y => "y",
            OutcomeKind::M1Star => "m1_star",
            OutcomeKind::M2Star => "m2_star",
        }
    }
}

/// Complete-case analytic sample (`Z = 1`) with its covariate encoding.
///
/// `incomplete` holds accepting respondents that failed the complete-case
/// requirement; they are only used by full-sample estimators.
#[derive(Debug, Clone)]
pub struct AnalyticSample {
    pub records: Vec<SurveyRecord>,
    pub incomplete: Vec<SurveyRecord>,
    pub encoding: Encoding,
    pub thresholds: Thresholds,
    pub weights: Option<Vec<f64>>,
    /// Binning fitted on the complete cases, by column.
    pub bins: BTreeMap<String, QuantileBins>,
    y: Vec<u8>,
    a: Vec<u8>,
    m1: Vec<u8>,
    m2: Vec<u8>,
}

impl AnalyticSample {
    /// Hex digest identifying the complete and incomplete records, used to
    /// tie fitted nuisances to the sample they were fitted on.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for r in self.records.iter().chain(&self.incomplete) {
            h.update(serde_json::to_vec(r).expect("records serialize"));
            h.update(b"\n");
        }
        h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Assemble a sample from complete records. Records must be complete and
    /// categorical on every encoded covariate.
    pub fn new(
        records: Vec<SurveyRecord>,
        incomplete: Vec<SurveyRecord>,
        thresholds: Thresholds,
        use_weights: bool,
    ) -> Result<AnalyticSample> {
        if records.is_empty() {
            return Err(Error::Data("analytic sample is empty".into()));
        }
        let mut y = Vec::with_capacity(records.len());
        let mut a = Vec::with_capacity(records.len());
        let mut m1 = Vec::with_capacity(records.len());
        let mut m2 = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            match (r.outcome, r.treatment, r.mediator1, r.mediator2) {
                (Some(yv), Some(av), Some(m1v), Some(m2v)) => {
                    y.push(yv);
                    a.push(av);
                    m1.push(m1v);
                    m2.push(m2v);
                }
                _ => {
                    return Err(Error::Data(format!(
                        "record {i} of the analytic sample is not a complete case"
                    )))
                }
            }
        }
        let encoding = Encoding::from_records(records.iter().chain(incomplete.iter()))?;
        let weights = if use_weights {
            let w: Option<Vec<f64>> = records.iter().map(|r| r.weight).collect();
            Some(w.ok_or_else(|| Error::Data("weights requested but some records lack a weight".into()))?)
        } else {
            None
        };
        Ok(AnalyticSample {
            records,
            incomplete,
            encoding,
            thresholds,
            weights,
            bins: BTreeMap::new(),
            y,
            a,
            m1,
            m2,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn treatment(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn mediator1(&self) -> &[u8] {
        &self.m1
    }

    pub fn mediator2(&self) -> &[u8] {
        &self.m2
    }

    /// Joint mediator code `4 M1 + M2` of record `i`.
    pub fn mediator_code(&self, i: usize) -> usize {
        encode_mediators(self.m1[i], self.m2[i])
    }

    pub fn m1_star(&self, i: usize) -> u8 {
        u8::from(self.m1[i] >= self.thresholds.m1)
    }

    pub fn m2_star(&self, i: usize) -> u8 {
        u8::from(self.m2[i] >= self.thresholds.m2)
    }

    /// Binary outcome vector for an outcome analysis.
    pub fn outcome(&self, kind: OutcomeKind) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                f64::from(match kind {
                    OutcomeKind::Y => self.y[i],
                    OutcomeKind::M1Star => self.m1_star(i),
                    OutcomeKind::M2Star => self.m2_star(i),
                })
            })
            .collect()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Restrict to a subset of complete records (incomplete records dropped).
    pub fn subset(&self, idx: &[usize]) -> Result<AnalyticSample> {
        let records: Vec<SurveyRecord> = idx.iter().map(|&i| self.records[i].clone()).collect();
        let mut s = AnalyticSample::new(records, Vec::new(), self.thresholds, self.weights.is_some())?;
        s.encoding = self.encoding.clone();
        s.bins = self.bins.clone();
        Ok(s)
    }
}

/// Build the analytic sample: apply row predicates, the region requirement
/// and acceptance filters, split accepting respondents into complete and
/// incomplete cases, bin numeric covariates on the complete cases, and
/// encode categorical levels.
pub fn build_analytic_sample(
    records: Vec<SurveyRecord>,
    schema: &Schema,
    filters: &SampleFilters,
    bins: &BinConfig,
) -> Result<(AnalyticSample, ExclusionLedger)> {
    let total_rows = records.len();
    let mut row_filtered = 0;
    let mut missing_region = 0;
    let mut hesitant = 0;
    let mut nonresponse = 0;
    let mut complete = Vec::new();
    let mut incomplete = Vec::new();

    for r in records {
        if !filters.row_filters.iter().all(|p| p.accepts(&r)) {
            row_filtered += 1;
            continue;
        }
        if filters.require_region && r.region.is_none() {
            missing_region += 1;
            continue;
        }
        match r.acceptance {
            Some(0) if filters.exclude_hesitant => {
                hesitant += 1;
                continue;
            }
            None if filters.exclude_hesitancy_nonresponse => {
                nonresponse += 1;
                continue;
            }
            _ => {}
        }
        if r.is_complete() {
            complete.push(r);
        } else {
            incomplete.push(r);
        }
    }

    let accepting = complete.len() + incomplete.len();
    let final_n = complete.len();
    if final_n == 0 {
        return Err(Error::Data(format!(
            "analytic sample is empty ({total_rows} input rows, {accepting} accepting)"
        )));
    }

    // Bin numeric covariates with cut points from the complete cases.
    let n_complete = complete.len();
    let mut all: Vec<SurveyRecord> = complete;
    all.extend(incomplete);
    let fit_idx: Vec<usize> = (0..n_complete).collect();
    let mut fitted_bins = BTreeMap::new();
    for c in &schema.covariates {
        if c.kind == CovariateKind::Numeric {
            let cuts = quantile_bin(&mut all, &c.name, bins.bins_for(&c.name), Some(&fit_idx))?;
            fitted_bins.insert(c.name.clone(), cuts);
        }
    }
    // Absent categorical values get their own level.
    for r in &mut all {
        for c in &schema.covariates {
            let slot = r.covariates.entry(c.name.clone()).or_insert(CovariateValue::Absent);
            if slot.is_absent() {
                *slot = CovariateValue::Level(MISSING_LEVEL.to_string());
            }
        }
    }
    let incomplete = all.split_off(n_complete);

    let ledger = ExclusionLedger {
        total_rows,
        row_filtered,
        missing_region,
        hesitant_excluded: hesitant,
        hesitancy_nonresponse_excluded: nonresponse,
        incomplete_excluded: incomplete.len(),
        accepting,
        final_n,
        p_r: final_n as f64 / accepting as f64,
    };
    let thresholds = Thresholds {
        m1: schema.m1_threshold,
        m2: schema.m2_threshold,
    };
    let mut sample = AnalyticSample::new(all, incomplete, thresholds, filters.use_weights)?;
    sample.bins = fitted_bins;
    Ok((sample, ledger))
}

/// What to do with records whose key has no row in the auxiliary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmatchedPolicy {
    #[default]
    Drop,
    KeepAbsent,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct JoinReport {
    pub columns_added: Vec<String>,
    pub unmatched_dropped: usize,
    pub unmatched_kept: usize,
}

/// Append the columns of a region-keyed auxiliary file as covariates.
/// Columns whose non-empty cells all parse as reals become numeric.
pub fn join_auxiliary(
    records: Vec<SurveyRecord>,
    aux_path: &Path,
    key_column: &str,
    policy: UnmatchedPolicy,
    delimiter: Delimiter,
) -> Result<(Vec<SurveyRecord>, JoinReport)> {
    let file = File::open(aux_path).map_err(|e| Error::io(aux_path, e))?;
    join_auxiliary_from(records, file, key_column, policy, delimiter)
}

pub fn join_auxiliary_from<R: std::io::Read>(
    records: Vec<SurveyRecord>,
    aux: R,
    key_column: &str,
    policy: UnmatchedPolicy,
    delimiter: Delimiter,
) -> Result<(Vec<SurveyRecord>, JoinReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter.byte())
        .from_reader(aux);
    let headers = rdr.headers()?.clone();
    let key_idx = headers
        .iter()
        .position(|h| h == key_column)
        .ok_or_else(|| Error::Schema(format!("auxiliary file lacks key column '{key_column}'")))?;
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != key_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut table: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for row in rdr.records() {
        let row = row?;
        let key = row.get(key_idx).unwrap_or("").trim().to_string();
        let values = value_cols
            .iter()
            .map(|(i, _)| row.get(*i).unwrap_or("").trim().to_string())
            .collect();
        if table.insert(key.clone(), values).is_some() {
            duplicates.insert(key);
        }
    }
    if !duplicates.is_empty() {
        return Err(Error::Data(format!(
            "duplicate auxiliary keys: {}",
            duplicates.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let numeric: Vec<bool> = (0..value_cols.len())
        .map(|j| {
            table
                .values()
                .filter(|v| !v[j].is_empty())
                .all(|v| v[j].parse::<f64>().is_ok())
        })
        .collect();

    let mut report = JoinReport {
        columns_added: value_cols.iter().map(|(_, n)| n.clone()).collect(),
        ..JoinReport::default()
    };
    let mut out = Vec::with_capacity(records.len());
    for mut r in records {
        let row = r.region.as_ref().and_then(|k| table.get(k));
        match row {
            Some(values) => {
                for (j, (_, name)) in value_cols.iter().enumerate() {
                    let v = &values[j];
                    let value = if v.is_empty() {
                        CovariateValue::Absent
                    } else if numeric[j] {
                        CovariateValue::Real(v.parse().expect("checked numeric"))
                    } else {
                        CovariateValue::Level(v.clone())
                    };
                    r.covariates.insert(name.clone(), value);
                }
                out.push(r);
            }
            None => match policy {
                UnmatchedPolicy::Drop => report.unmatched_dropped += 1,
                UnmatchedPolicy::KeepAbsent => {
                    for (_, name) in &value_cols {
                        r.covariates.insert(name.clone(), CovariateValue::Absent);
                    }
                    report.unmatched_kept += 1;
                    out.push(r);
                }
            },
        }
    }
    Ok((out, report))
}

/// Covariate specs for the columns a join added, typed the way the join
/// parsed them.
pub fn joined_covariate_specs(records: &[SurveyRecord], report: &JoinReport) -> Vec<CovariateSpec> {
    report
        .columns_added
        .iter()
        .map(|name| {
            let numeric = records
                .iter()
                .any(|r| matches!(r.covariate(name), CovariateValue::Real(_)));
            CovariateSpec {
                name: name.clone(),
                kind: if numeric {
                    CovariateKind::Numeric
                } else {
                    CovariateKind::Categorical
                },
            }
        })
        .collect()
}
