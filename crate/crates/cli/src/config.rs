//! Run configuration, read from JSON with unknown keys rejected.

use std::path::{Path, PathBuf};

use ifcausal::effects::{Grouping, MIN_SUBGROUP_N};
use ifcausal::hte::TreeParams;
use ifcausal::incremental::CurveSpec;
use ifcausal::ingest::{BinConfig, Delimiter, RowPredicate, SampleFilters, Schema, UnmatchedPolicy, ValueMaps};
use ifcausal::nuisance::NuisanceSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Region-keyed auxiliary covariates joined onto the survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxJoin {
    pub path: PathBuf,
    pub key_column: String,
    #[serde(default)]
    pub unmatched: UnmatchedPolicy,
    #[serde(default)]
    pub delimiter: Delimiter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub preset: String,
    pub n: usize,
    /// Share of accepting respondents made incomplete completely at random.
    pub mcar: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { preset: "dgp1".into(), n: 10_000, mcar: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AteConfig {
    /// Pre-specified subgroups.
    pub grouping: Option<Grouping>,
    pub min_subgroup_n: usize,
}

impl Default for AteConfig {
    fn default() -> Self {
        AteConfig { grouping: None, min_subgroup_n: MIN_SUBGROUP_N }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediationConfig {
    pub references: Vec<u8>,
}

impl Default for MediationConfig {
    fn default() -> Self {
        MediationConfig { references: vec![0, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub tau_max: f64,
    pub tau_step: f64,
    /// Also refit intercept-only nuisances for the benchmark `τ`.
    pub comparator: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { tau_max: 0.5, tau_step: 0.005, comparator: true }
    }
}

impl SensitivityConfig {
    /// `0, step, …, tau_max`.
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        if !(self.tau_step > 0.0 && self.tau_max >= 0.0 && self.tau_max < 1.0) {
            return Err(CliError::Config(format!(
                "tau grid needs step > 0 and 0 <= tau_max < 1 (got step {}, max {})",
                self.tau_step, self.tau_max
            )));
        }
        let count = (self.tau_max / self.tau_step + 1e-9).floor() as usize;
        Ok((0..=count).map(|j| j as f64 * self.tau_step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgroupConfig {
    pub tree: TreeParams,
    /// Covariates offered to the tree; all by default.
    pub covariates: Option<Vec<String>>,
    pub min_n: usize,
    /// Candidate file with `approved` flags set.
    pub candidates: Option<PathBuf>,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        SubgroupConfig { tree: TreeParams::default(), covariates: None, min_n: MIN_SUBGROUP_N, candidates: None }
    }
}

/// Range rules flagging implausible answers.
pub fn default_suspicious_rules() -> Vec<RowPredicate> {
    [
        ("household_size", 0.0, 30.0),
        ("sick_in_household", 0.0, 30.0),
        ("work_contacts", 0.0, 100.0),
        ("shopping_contacts", 0.0, 100.0),
        ("social_contacts", 0.0, 100.0),
        ("other_contacts", 0.0, 100.0),
    ]
    .into_iter()
    .map(|(c, lo, hi)| RowPredicate::range(c, lo, hi))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    /// Variants run by `variants` after the baseline.
    pub list: Vec<String>,
    /// Covariates dropped by the `bad-controls-dropped` variant.
    pub bad_controls: Vec<String>,
    /// Rules applied by the `suspicious-excluded` variant.
    pub suspicious_rules: Vec<RowPredicate>,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig { list: Vec::new(), bad_controls: Vec::new(), suspicious_rules: default_suspicious_rules() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Main survey extract; defaults to `data.csv` in the output directory.
    pub data: Option<PathBuf>,
    /// Separate discovery extract for subgroup search; otherwise the main
    /// sample is split in half.
    pub auxiliary_data: Option<PathBuf>,
    pub aux_join: Option<AuxJoin>,
    /// Column roles; defaults to `schema.json` in the output directory.
    pub schema: Option<Schema>,
    pub value_maps: ValueMaps,
    pub filters: SampleFilters,
    pub bins: BinConfig,
    pub nuisance: NuisanceSpec,
    pub seed: u64,
    pub simulate: SimulateConfig,
    pub ate: AteConfig,
    pub mediation: MediationConfig,
    pub incremental: CurveSpec,
    pub sensitivity: SensitivityConfig,
    pub subgroups: SubgroupConfig,
    pub variants: VariantConfig,
}


/// Inputs that determine a nuisance fit.
#[derive(Serialize)]
struct FitIdentity<'a> {
    data_sha256: &'a str,
    aux_join: &'a Option<AuxJoin>,
    schema: &'a Schema,
    value_maps: &'a ValueMaps,
    filters: &'a SampleFilters,
    bins: &'a BinConfig,
    nuisance: &'a NuisanceSpec,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Propagate the run seed into every seeded component.
    pub fn with_seed(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.nuisance.seed = seed;
        self.incremental.seed = seed;
        self
    }

    /// Hash of the full effective configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Hash of the inputs that determine the nuisance fit: data contents,
    /// resolved schema, sample construction and nuisance settings.
    pub fn fit_hash(&self, schema: &Schema, data_sha256: &str) -> String {
        let id = FitIdentity {
            data_sha256,
            aux_join: &self.aux_join,
            schema,
            value_maps: &self.value_maps,
            filters: &self.filters,
            bins: &self.bins,
            nuisance: &self.nuisance,
        };
        sha256_hex(&serde_json::to_vec(&id).expect("fit identity serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 3}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"nuisance": {"fold": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"nuisance": {"learner": {"glm": {"tol": 1e-6, "x": 1}}}}"#).is_err());
    }

    #[test]
    fn tau_grid_has_expected_length() {
        let g = SensitivityConfig::default().grid().unwrap();
        assert_eq!(g.len(), 101);
        assert!((g[100] - 0.5).abs() < 1e-12);
        assert!(SensitivityConfig { tau_max: 1.0, ..Default::default() }.grid().is_err());
    }

    #[test]
    fn hashes_track_relevant_changes() {
        let schema = Schema::simulated(&["x"]);
        let a = RunConfig::default();
        let b = RunConfig::default().with_seed(1);
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.fit_hash(&schema, "d"), b.fit_hash(&schema, "d"));
        let mut c = RunConfig::default();
        c.sensitivity.tau_max = 0.3;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.fit_hash(&schema, "d"), c.fit_hash(&schema, "d"));
        assert_ne!(a.fit_hash(&schema, "d"), a.fit_hash(&schema, "e"));
        assert_eq!(a.hash().len(), 64);
    }
}
