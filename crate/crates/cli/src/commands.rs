//! Command implementations. Each command loads what it needs, runs the
//! estimators and writes its artifacts through an [`ArtifactWriter`].

use std::path::{Path, PathBuf};

use ifcausal::effects::{
    full_sample_effect, pandemic_bound, phi1, pr_scaled_bound, risk_difference, risk_ratio, subgroup_effects, EstimateSummary,
    PandemicBound, SubgroupReport,
};
use ifcausal::hte::{self, CandidateSubgroup, PairTest, RegressionTree, SplitId};
use ifcausal::incremental::{incremental_curve, log_grid, CurvePoint, CurveSpec, IncrementalCurve};
use ifcausal::ingest::{
    build_analytic_sample, join_auxiliary, joined_covariate_specs, load_survey, write_survey_to, AnalyticSample, CovariateKind,
    CovariateSpec, ExclusionLedger, JoinReport, LoadReport, OutcomeKind, Schema,
};
use ifcausal::mediation::{interventional_decomposition, DecompositionReport};
use ifcausal::nuisance::{crossfit, diagnostics, CovariateSelection, NuisanceBundle, NuisanceSpec, BUNDLE_VERSION};
use ifcausal::sensitivity::{bounds, comparator_tau, explain_away, BoundVariant, ExplainAway, SensitivityResult, TauStar};
use ifcausal::sim;
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_json, ArtifactWriter, Envelope, Meta};
use crate::config::{sha256_hex, RunConfig};
use crate::error::{CliError, CliResult};

pub const BUNDLE_FILE: &str = "bundle.json";

/// Effective configuration plus run-level options shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    /// Fit nuisances when no current bundle exists instead of failing.
    pub fit_if_missing: bool,
}

/// Loaded analytic sample with the provenance needed for artifacts.
pub struct Loaded {
    pub sample: AnalyticSample,
    pub ledger: ExclusionLedger,
    pub schema: Schema,
    pub load_report: LoadReport,
    pub join_report: Option<JoinReport>,
    pub fit_hash: String,
}

impl Context {
    fn config_hash(&self) -> String {
        self.cfg.hash()
    }

    pub fn writer(&self, command: &str) -> CliResult<ArtifactWriter> {
        ArtifactWriter::new(&self.out, Meta::new(command, &self.config_hash(), self.cfg.seed))
    }

    fn data_path(&self) -> PathBuf {
        self.cfg.data.clone().unwrap_or_else(|| self.out.join("data.csv"))
    }

    /// Schema from the config, else the one written by `simulate`.
    pub fn schema(&self) -> CliResult<Schema> {
        if let Some(s) = &self.cfg.schema {
            return Ok(s.clone());
        }
        let path = self.out.join("schema.json");
        if !path.exists() {
            return Err(CliError::Config(format!(
                "no schema: set 'schema' in the config or run 'simulate' to create {}",
                path.display()
            )));
        }
        Ok(read_json::<Schema>(&path)?.result)
    }

    /// Load, join and filter a survey file into an analytic sample.
    pub fn load_from(&self, data: &Path, cfg: &RunConfig) -> CliResult<Loaded> {
        if !data.exists() {
            return Err(CliError::Config(format!("input data file {} does not exist", data.display())));
        }
        let mut schema = self.schema()?;
        let bytes = std::fs::read(data).map_err(|e| ifcausal::Error::io(data, e))?;
        let loaded = load_survey(data, &schema, &cfg.value_maps)?;
        let mut records = loaded.records;
        let mut join_report = None;
        if let Some(join) = &cfg.aux_join {
            let (joined, report) = join_auxiliary(records, &join.path, &join.key_column, join.unmatched, join.delimiter)?;
            schema.covariates.extend(joined_covariate_specs(&joined, &report));
            records = joined;
            join_report = Some(report);
        }
        let fit_hash = cfg.fit_hash(&schema, &sha256_hex(&bytes));
        let (sample, ledger) = build_analytic_sample(records, &schema, &cfg.filters, &cfg.bins)?;
        Ok(Loaded { sample, ledger, schema, load_report: loaded.report, join_report, fit_hash })
    }

    pub fn load(&self) -> CliResult<Loaded> {
        self.load_from(&self.data_path(), &self.cfg)
    }

    /// Nuisance bundle for `loaded`: read from the output directory, or
    /// fitted (and written) when allowed.
    pub fn bundle(&self, loaded: &Loaded) -> CliResult<NuisanceBundle> {
        let path = self.out.join(BUNDLE_FILE);
        if !path.exists() {
            if self.fit_if_missing {
                return self.fit_and_write(loaded);
            }
            return Err(CliError::Config(format!(
                "missing nuisance bundle {}; run 'ifcausal fit' first or pass --fit",
                path.display()
            )));
        }
        let bundle: NuisanceBundle = read_json::<NuisanceBundle>(&path)?.result;
        if bundle.version != BUNDLE_VERSION {
            return Err(CliError::Config(format!(
                "bundle {} has format version {} (expected {BUNDLE_VERSION})",
                path.display(),
                bundle.version
            )));
        }
        if bundle.config_hash != loaded.fit_hash {
            if self.fit_if_missing {
                return self.fit_and_write(loaded);
            }
            return Err(CliError::Config(format!(
                "nuisance bundle {} was fitted with different data or settings; rerun 'ifcausal fit' or pass --fit",
                path.display()
            )));
        }
        if bundle.sample_fingerprint != loaded.sample.fingerprint() {
            return Err(ifcausal::Error::Data(format!(
                "nuisance bundle {} does not match the records of the analytic sample",
                path.display()
            ))
            .into());
        }
        Ok(bundle)
    }

    fn fit_and_write(&self, loaded: &Loaded) -> CliResult<NuisanceBundle> {
        let bundle = fit_bundle(loaded, &self.cfg.nuisance)?;
        let mut w = self.writer("fit")?;
        write_fit_artifacts(&mut w, loaded, &bundle)?;
        Ok(bundle)
    }
}

fn fit_bundle(loaded: &Loaded, spec: &NuisanceSpec) -> CliResult<NuisanceBundle> {
    let mut bundle = crossfit(&loaded.sample, spec)?;
    bundle.config_hash = loaded.fit_hash.clone();
    Ok(bundle)
}

#[derive(Serialize)]
struct FitReport<'a> {
    n: usize,
    folds: usize,
    ledger: &'a ExclusionLedger,
    rows_read: usize,
    rows_dropped: usize,
    row_errors: usize,
    join: &'a Option<JoinReport>,
    clip_counts: &'a std::collections::BTreeMap<String, usize>,
    warnings: &'a [String],
}

fn write_fit_artifacts(w: &mut ArtifactWriter, loaded: &Loaded, bundle: &NuisanceBundle) -> CliResult<()> {
    w.json(BUNDLE_FILE, bundle)?;
    let folds = bundle.folds.iter().copied().max().map_or(0, |k| k + 1);
    w.json(
        "fit_report.json",
        &FitReport {
            n: bundle.n,
            folds,
            ledger: &loaded.ledger,
            rows_read: loaded.load_report.rows_read,
            rows_dropped: loaded.load_report.rows_dropped,
            row_errors: loaded.load_report.errors.len(),
            join: &loaded.join_report,
            clip_counts: &bundle.clip_counts,
            warnings: &bundle.warnings,
        },
    )
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub mcar: Option<f64>,
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<ArtifactWriter> {
    let name = args.preset.clone().unwrap_or_else(|| ctx.cfg.simulate.preset.clone());
    let n = args.n.unwrap_or(ctx.cfg.simulate.n);
    let mut spec = sim::preset(&name)?;
    if let Some(m) = args.mcar.or(ctx.cfg.simulate.mcar) {
        if !(0.0..1.0).contains(&m) {
            return Err(CliError::Config(format!("mcar share must lie in [0, 1), got {m}")));
        }
        spec = sim::with_mcar(spec, m);
    }
    spec.seed = ctx.cfg.seed;
    let records = sim::generate(&spec, n)?;
    let mut schema = Schema::simulated(&spec.covariate_names());
    schema
        .covariates
        .extend(spec.continuous.iter().map(|c| CovariateSpec { name: c.clone(), kind: CovariateKind::Numeric }));
    let mut body = Vec::new();
    write_survey_to(&mut body, &records, &schema)?;
    let truth = sim::enumerate_truth(&spec, &ctx.cfg.incremental.deltas)?;

    let mut w = ctx.writer("simulate")?;
    w.csv("data.csv", &String::from_utf8(body).expect("csv output is UTF-8"))?;
    w.json("schema.json", &schema)?;
    w.json("dgp.json", &spec)?;
    w.json("truth.json", &truth)?;
    Ok(w)
}

// --------------------------------------------------------------------- fit

pub fn fit(ctx: &Context) -> CliResult<ArtifactWriter> {
    let loaded = ctx.load()?;
    let bundle = fit_bundle(&loaded, &ctx.cfg.nuisance)?;
    let mut w = ctx.writer("fit")?;
    write_fit_artifacts(&mut w, &loaded, &bundle)?;
    Ok(w)
}

// --------------------------------------------------------------------- ate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group: String,
    pub n: usize,
    pub estimate: EstimateSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub groups: Vec<SubgroupRow>,
    pub suppressed: Vec<(String, usize)>,
}

impl SubgroupSummary {
    fn new(report: &SubgroupReport) -> Self {
        SubgroupSummary {
            groups: report
                .groups
                .iter()
                .map(|g| SubgroupRow { group: g.group.describe(), n: g.members.len(), estimate: g.estimate.summary() })
                .collect(),
            suppressed: report.suppressed.iter().map(|(p, n)| (p.describe(), *n)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullSampleSummary {
    pub estimate: EstimateSummary,
    pub efficient_se: f64,
    pub n_analytic: usize,
    pub n_total: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeEffects {
    pub outcome: OutcomeKind,
    /// Treated then untreated counterfactual means.
    pub means: [EstimateSummary; 2],
    pub rd: EstimateSummary,
    pub rr: EstimateSummary,
    pub pandemic_bound: PandemicBound,
    /// Risk difference scaled by the complete-case share.
    pub p_r_bound: EstimateSummary,
    pub full_sample: Option<FullSampleSummary>,
    pub subgroups: Option<SubgroupSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AteArtifact {
    pub ledger: ExclusionLedger,
    pub outcomes: Vec<OutcomeEffects>,
    pub warnings: Vec<String>,
}

fn outcome_effects(ctx: &Context, loaded: &Loaded, bundle: &NuisanceBundle, kind: OutcomeKind) -> CliResult<OutcomeEffects> {
    let s = &loaded.sample;
    let rd = risk_difference(s, bundle, kind)?;
    let rr = risk_ratio(s, bundle, kind)?;
    let full_sample = match &bundle.full {
        Some(_) => {
            let f = full_sample_effect(s, bundle, kind)?;
            Some(FullSampleSummary {
                estimate: f.estimate.summary(),
                efficient_se: f.efficient_se,
                n_analytic: f.n_analytic,
                n_total: f.n_total,
                warnings: f.warnings,
            })
        }
        None => None,
    };
    let subgroups = match &ctx.cfg.ate.grouping {
        Some(g) => Some(SubgroupSummary::new(&subgroup_effects(&rd, s, g, ctx.cfg.ate.min_subgroup_n)?)),
        None => None,
    };
    Ok(OutcomeEffects {
        outcome: kind,
        means: [phi1(s, bundle, kind, 1)?.summary(), phi1(s, bundle, kind, 0)?.summary()],
        pandemic_bound: pandemic_bound(&rd, &rr),
        p_r_bound: pr_scaled_bound(&rd, loaded.ledger.p_r)?.summary(),
        rd: rd.summary(),
        rr: rr.summary(),
        full_sample,
        subgroups,
    })
}

fn summary_row(out: &mut String, outcome: &str, e: &EstimateSummary, group: &str) {
    out.push_str(&format!(
        "{outcome},{},{group},{},{},{},{},{}\n",
        e.label, e.point, e.se, e.ci.0, e.ci.1, e.n
    ));
}

pub fn ate(ctx: &Context) -> CliResult<ArtifactWriter> {
    let loaded = ctx.load()?;
    let bundle = ctx.bundle(&loaded)?;
    let mut outcomes = Vec::new();
    for &kind in bundle.mu.keys() {
        outcomes.push(outcome_effects(ctx, &loaded, &bundle, kind)?);
    }
    let artifact = AteArtifact { ledger: loaded.ledger.clone(), outcomes, warnings: bundle.warnings.clone() };

    // Forest-plot rows.
    let mut csv = String::from("outcome,estimand,group,point,se,lo,hi,n\n");
    for o in &artifact.outcomes {
        let label = o.outcome.label();
        for e in o.means.iter().chain([&o.rd, &o.rr, &o.p_r_bound]) {
            summary_row(&mut csv, label, e, "all");
        }
        if let Some(f) = &o.full_sample {
            summary_row(&mut csv, label, &f.estimate, "all");
        }
        if let Some(sg) = &o.subgroups {
            for g in &sg.groups {
                summary_row(&mut csv, label, &g.estimate, &g.group);
            }
        }
    }
    let mut w = ctx.writer("ate")?;
    w.json("ate.json", &artifact)?;
    w.csv("ate.csv", &csv)?;
    Ok(w)
}

// ----------------------------------------------------------------- mediate

pub fn mediate(ctx: &Context, reference: Option<u8>) -> CliResult<ArtifactWriter> {
    let references = match reference {
        Some(r) => vec![r],
        None => ctx.cfg.mediation.references.clone(),
    };
    if references.is_empty() || references.iter().any(|&r| r > 1) {
        return Err(CliError::Config("mediation references must be 0 or 1".into()));
    }
    let loaded = ctx.load()?;
    let bundle = ctx.bundle(&loaded)?;
    let mut reports = Vec::new();
    let mut csv = String::from("reference,component,point,lo,hi,proportion\n");
    for r in references {
        let dec = interventional_decomposition(&loaded.sample, &bundle, r)?;
        let report = DecompositionReport::new(&dec)?;
        csv.push_str(&report.to_csv_rows());
        reports.push(report);
    }
    let mut w = ctx.writer("mediate")?;
    w.json("mediation.json", &reports)?;
    w.csv("mediation.csv", &csv)?;
    Ok(w)
}

// ------------------------------------------------------------- incremental

/// Parse `lo:hi:count` (log-spaced) or a comma-separated list.
pub fn parse_delta_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = |what: &str| CliError::Config(format!("invalid delta grid '{s}': {what}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad("expected lo:hi:count"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("hi is not a number"))?;
        let count: usize = count.trim().parse().map_err(|_| bad("count is not an integer"))?;
        return Ok(log_grid(lo, hi, count)?);
    }
    let deltas: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad("entries must be numbers")))
        .collect::<CliResult<_>>()?;
    if deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(bad("entries must be positive and finite"));
    }
    Ok(deltas)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveArtifact {
    pub outcome: OutcomeKind,
    pub points: Vec<CurvePoint>,
    pub at_zero: EstimateSummary,
    pub at_infinity: EstimateSummary,
    pub observed: EstimateSummary,
    pub replicates: usize,
    pub critical_value: f64,
    pub alpha: f64,
    pub assumption: String,
    pub warnings: Vec<String>,
}

impl CurveArtifact {
    fn new(c: &IncrementalCurve) -> Self {
        CurveArtifact {
            outcome: c.outcome,
            points: c.points.clone(),
            at_zero: c.at_zero.clone(),
            at_infinity: c.at_infinity.clone(),
            observed: c.observed.summary(),
            replicates: c.replicates,
            critical_value: c.critical_value,
            alpha: c.alpha,
            assumption: c.assumption.clone(),
            warnings: c.warnings.clone(),
        }
    }
}

pub fn incremental(ctx: &Context, delta_grid: Option<&str>) -> CliResult<ArtifactWriter> {
    let mut spec: CurveSpec = ctx.cfg.incremental.clone();
    if let Some(g) = delta_grid {
        spec.deltas = parse_delta_grid(g)?;
    }
    let loaded = ctx.load()?;
    let bundle = ctx.bundle(&loaded)?;
    let mut w = ctx.writer("incremental")?;
    let mut curves = Vec::new();
    for &kind in bundle.mu.keys() {
        let curve = incremental_curve(&loaded.sample, &bundle, kind, &spec)?;
        w.csv(&format!("incremental_{}.csv", kind.label()), &curve.to_csv())?;
        curves.push(CurveArtifact::new(&curve));
    }
    w.json("incremental.json", &curves)?;
    Ok(w)
}

// ------------------------------------------------------------- sensitivity

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityArtifact {
    pub sample: SensitivityResult,
    pub generalization: SensitivityResult,
    pub explain_away_sample: ExplainAway,
    pub explain_away_generalization: ExplainAway,
    /// `τ` at which bounds without covariate adjustment reach the adjusted
    /// estimate.
    pub comparator: Option<TauStar>,
}

/// Intercept-only nuisance settings used for the unadjusted benchmark.
fn intercept_only(spec: &NuisanceSpec) -> NuisanceSpec {
    let none = Some(Vec::new());
    NuisanceSpec {
        covariates: CovariateSelection { pi: none.clone(), mu: none.clone(), mediator: none.clone(), eta: none },
        outcomes: vec![OutcomeKind::Y],
        mediation: false,
        full_sample: false,
        ..spec.clone()
    }
}

pub fn sensitivity(ctx: &Context, tau_max: Option<f64>) -> CliResult<ArtifactWriter> {
    let mut settings = ctx.cfg.sensitivity.clone();
    if let Some(t) = tau_max {
        settings.tau_max = t;
    }
    let taus = settings.grid()?;
    let alpha = ctx.cfg.incremental.alpha;
    let loaded = ctx.load()?;
    let bundle = ctx.bundle(&loaded)?;
    let s = &loaded.sample;
    let sample_bounds = bounds(s, &bundle, OutcomeKind::Y, BoundVariant::Sample, &taus, alpha)?;
    let generalization = bounds(s, &bundle, OutcomeKind::Y, BoundVariant::Generalization, &taus, alpha)?;
    let comparator = if settings.comparator {
        let plain = crossfit(s, &intercept_only(&ctx.cfg.nuisance))?;
        let unadjusted = bounds(s, &plain, OutcomeKind::Y, BoundVariant::Sample, &taus, alpha)?;
        Some(comparator_tau(&unadjusted, sample_bounds.estimate))
    } else {
        None
    };
    let artifact = SensitivityArtifact {
        explain_away_sample: explain_away(&sample_bounds),
        explain_away_generalization: explain_away(&generalization),
        sample: sample_bounds,
        generalization,
        comparator,
    };
    let mut w = ctx.writer("sensitivity")?;
    w.csv("sensitivity_sample.csv", &artifact.sample.to_csv())?;
    w.csv("sensitivity_generalization.csv", &artifact.generalization.to_csv())?;
    w.json("sensitivity.json", &artifact)?;
    Ok(w)
}

// --------------------------------------------------------------- subgroups

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfirmedGroup {
    pub id: usize,
    pub description: String,
    pub n: usize,
    pub estimate: EstimateSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfirmationArtifact {
    pub overall: EstimateSummary,
    pub groups: Vec<ConfirmedGroup>,
    pub suppressed: Vec<(String, usize)>,
    pub tests: Vec<PairTest>,
}

/// Candidate file: the `candidates.json` envelope or a bare list.
fn read_candidates(path: &Path) -> CliResult<Vec<CandidateSubgroup>> {
    let text = std::fs::read_to_string(path).map_err(|e| ifcausal::Error::io(path, e))?;
    if let Ok(env) = serde_json::from_str::<Envelope<Vec<CandidateSubgroup>>>(&text) {
        return Ok(env.result);
    }
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse candidates {}: {e}", path.display())))
}

pub fn subgroups(ctx: &Context, candidates: Option<&Path>) -> CliResult<ArtifactWriter> {
    let main_loaded = ctx.load()?;
    let (aux, main) = match &ctx.cfg.auxiliary_data {
        Some(p) => (ctx.load_from(p, &ctx.cfg)?.sample, main_loaded.sample),
        None => hte::split_sample(&main_loaded.sample, ctx.cfg.seed)?,
    };
    // Each split gets its own nuisances so neither sees the other's records.
    let spec = NuisanceSpec { outcomes: vec![OutcomeKind::Y], mediation: false, full_sample: false, ..ctx.cfg.nuisance.clone() };
    let aux_bundle = crossfit(&aux, &spec)?;
    let pseudo = hte::pseudo_outcomes(&aux, &aux_bundle, SplitId::Auxiliary)?;
    let sg = &ctx.cfg.subgroups;
    let (tree, found) = hte::fit_tree(&pseudo, &aux, sg.covariates.as_deref(), &sg.tree)?;

    let mut w = ctx.writer("subgroups")?;
    w.json("tree.json", &tree)?;
    w.text("tree.txt", &tree.render())?;
    w.json("candidates.json", &found)?;

    let candidates_path = candidates.map(Path::to_path_buf).or_else(|| sg.candidates.clone());
    if let Some(path) = candidates_path {
        let approved = read_candidates(&path)?;
        let artifact = confirm_candidates(&approved, &tree, &main, &spec, sg.min_n)?;
        let mut csv = String::from("id,group,n,point,se,lo,hi\n");
        for g in &artifact.groups {
            let e = &g.estimate;
            csv.push_str(&format!("{},{},{},{},{},{},{}\n", g.id, g.description, g.n, e.point, e.se, e.ci.0, e.ci.1));
        }
        w.json("confirmation.json", &artifact)?;
        w.csv("confirmation.csv", &csv)?;
    }
    Ok(w)
}

fn confirm_candidates(
    candidates: &[CandidateSubgroup],
    tree: &RegressionTree,
    main: &AnalyticSample,
    spec: &NuisanceSpec,
    min_n: usize,
) -> CliResult<ConfirmationArtifact> {
    if !candidates.iter().any(|c| c.approved) {
        return Err(CliError::Config("no candidate subgroup is marked approved".into()));
    }
    let bundle = crossfit(main, spec)?;
    let c = hte::confirm(candidates, tree, main, &bundle, min_n)?;
    let groups = c
        .ids
        .iter()
        .zip(&c.report.groups)
        .map(|(&id, g)| ConfirmedGroup { id, description: g.group.describe(), n: g.members.len(), estimate: g.estimate.summary() })
        .collect();
    Ok(ConfirmationArtifact {
        overall: c.overall.summary(),
        groups,
        suppressed: c.report.suppressed.iter().map(|(p, n)| (p.describe(), *n)).collect(),
        tests: c.tests,
    })
}

// ---------------------------------------------------------------- diagnose

#[derive(Serialize)]
struct DiagnosticsArtifact<'a> {
    report: &'a ifcausal::nuisance::CalibrationReport,
    clip_counts: &'a std::collections::BTreeMap<String, usize>,
    warnings: &'a [String],
}

pub fn diagnose(ctx: &Context) -> CliResult<ArtifactWriter> {
    let loaded = ctx.load()?;
    let bundle = ctx.bundle(&loaded)?;
    let report = diagnostics(&bundle, &loaded.sample)?;
    let mut w = ctx.writer("diagnose")?;
    w.csv("calibration.csv", &report.to_csv())?;
    w.csv("weights.csv", &report.weights_csv())?;
    w.json(
        "diagnostics.json",
        &DiagnosticsArtifact { report: &report, clip_counts: &bundle.clip_counts, warnings: &bundle.warnings },
    )?;
    Ok(w)
}

// ---------------------------------------------------------------- variants

/// Sample-definition and adjustment variants for robustness reruns.
pub const VARIANTS: [&str; 5] =
    ["baseline", "hesitant-included", "bad-controls-dropped", "suspicious-excluded", "hesitancy-nonresponse-included"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub n: usize,
    pub rd: EstimateSummary,
    pub rr: EstimateSummary,
}

fn variant_config(base: &RunConfig, name: &str, covariates: &[String]) -> CliResult<RunConfig> {
    let mut cfg = base.clone();
    match name {
        "baseline" => {}
        "hesitant-included" => cfg.filters.exclude_hesitant = false,
        "hesitancy-nonresponse-included" => cfg.filters.exclude_hesitancy_nonresponse = false,
        "bad-controls-dropped" => {
            cfg.nuisance.covariates = cfg.nuisance.covariates.without(covariates, &base.variants.bad_controls);
        }
        "suspicious-excluded" => cfg.filters.row_filters.extend(base.variants.suspicious_rules.iter().cloned()),
        other => {
            return Err(CliError::Config(format!("unknown variant '{other}' (expected one of {})", VARIANTS.join(", "))))
        }
    }
    Ok(cfg)
}

pub fn variants(ctx: &Context, requested: Option<&[String]>) -> CliResult<ArtifactWriter> {
    let list = requested.map_or_else(|| ctx.cfg.variants.list.clone(), <[String]>::to_vec);
    let mut names = vec!["baseline".to_string()];
    for v in list {
        if !names.contains(&v) {
            names.push(v);
        }
    }
    let schema = ctx.schema()?;
    let covariates: Vec<String> = schema.covariates.iter().map(|c| c.name.clone()).collect();
    // Validate every name before fitting anything.
    let configs: Vec<RunConfig> = names.iter().map(|n| variant_config(&ctx.cfg, n, &covariates)).collect::<CliResult<_>>()?;

    let data = ctx.data_path();
    let mut rows = Vec::new();
    for (name, cfg) in names.iter().zip(&configs) {
        let loaded = ctx.load_from(&data, cfg)?;
        let spec = NuisanceSpec { outcomes: vec![OutcomeKind::Y], mediation: false, full_sample: false, ..cfg.nuisance.clone() };
        let bundle = fit_bundle(&loaded, &spec)?;
        let rd = risk_difference(&loaded.sample, &bundle, OutcomeKind::Y)?;
        let rr = risk_ratio(&loaded.sample, &bundle, OutcomeKind::Y)?;
        rows.push(VariantRow { variant: name.clone(), n: loaded.sample.len(), rd: rd.summary(), rr: rr.summary() });
    }
    let mut csv = String::from("variant,n,rd,rd_se,rd_lo,rd_hi,rr,rr_lo,rr_hi\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.variant, r.n, r.rd.point, r.rd.se, r.rd.ci.0, r.rd.ci.1, r.rr.point, r.rr.ci.0, r.rr.ci.1
        ));
    }
    let mut w = ctx.writer("variants")?;
    w.json("variants.json", &rows)?;
    w.csv("variants.csv", &csv)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_grid_forms() {
        let g = parse_delta_grid("0.5:2:3").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert_eq!(parse_delta_grid("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_delta_grid("1:2").is_err());
        assert!(parse_delta_grid("0,1").is_err());
        assert!(parse_delta_grid("a").is_err());
    }

    #[test]
    fn unknown_variant_is_config_error() {
        let e = variant_config(&RunConfig::default(), "everyone", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        for v in VARIANTS {
            assert!(variant_config(&RunConfig::default(), v, &[]).is_ok());
        }
    }
}
