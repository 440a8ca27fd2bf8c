//! Simulation-study harness.
//!
//! A [`StudyCondition`] fixes a generating mixture ERGM, planted class
//! proportions and the models to fit. [`run_condition`] draws one covariate
//! table and one planted labelling for the whole condition, then for each
//! replication simulates a network, fits every model, and aggregates bias
//! tables and adjusted Rand indices. [`run_size_sweep`] repeats the
//! correctly specified fit over networks of several sizes whose covariates
//! are bootstrap resamples of the base table.
//!
//! Every random stream is derived from the condition seed, so results do not
//! depend on thread count or execution order.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::CovariateTable;
use crate::error::{Error, Result};
use crate::evaluation::{adjusted_rand, adjusted_rand_subset, bias_table, fmt, BiasReport};
use crate::mixture::{fit_cem, CemControls, LabelAssignment, MixtureFit, RefitPolicy};
use crate::network::DirectedNetwork;
use crate::sampler::{plant_classes, simulate, Init, SamplerControls};
use crate::seed::{derive_seed, rng_from_seed, tag};
use crate::terms::{Mode, ModelSpec, TermKind, TermSpec};

const BUILTIN: [(&str, &str); 9] = [
    ("1", include_str!("../conditions/1.json")),
    ("1+", include_str!("../conditions/1plus.json")),
    ("2", include_str!("../conditions/2.json")),
    ("2+", include_str!("../conditions/2plus.json")),
    ("3", include_str!("../conditions/3.json")),
    ("3+", include_str!("../conditions/3plus.json")),
    ("4", include_str!("../conditions/4.json")),
    ("4+", include_str!("../conditions/4plus.json")),
    ("5", include_str!("../conditions/5.json")),
];

/// Covariate used for the user-subset adjusted Rand index.
pub const USER_COVARIATE: &str = "alcohol";

/// One generating term. `values` has one entry (shared by all classes) or
/// one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerm {
    pub kind: TermKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    pub values: Vec<f64>,
}

impl GeneratorTerm {
    fn term(&self) -> TermSpec {
        TermSpec {
            kind: self.kind,
            covariate: self.covariate.clone(),
            decay: self.decay,
            heterogeneous: self.values.len() > 1,
        }
    }

    /// Generating value for members of `class`.
    pub fn value(&self, class: usize) -> f64 {
        if self.values.len() == 1 {
            self.values[0]
        } else {
            self.values[class]
        }
    }
}

/// A model fitted in every replication: the generator's terms, with the
/// listed term labels made class specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub name: String,
    pub classes: usize,
    #[serde(default)]
    pub heterogeneous: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCondition {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub n_nodes: usize,
    pub class_proportions: Vec<f64>,
    #[serde(default)]
    pub mode: Mode,
    pub n_replications: usize,
    pub seed: u64,
    pub generator: Vec<GeneratorTerm>,
    pub fits: Vec<FitSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StudyCondition {
    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(n, _)| *n).collect()
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::Invalid(format!(
                "unknown condition `{name}`; valid names: {}",
                Self::builtin_names().join(", ")
            ))
        })?;
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cond: StudyCondition = serde_json::from_str(text)?;
        cond.validate()?;
        Ok(cond)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn n_classes(&self) -> usize {
        self.class_proportions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.n_classes();
        if q == 0 {
            return Err(Error::Spec("class_proportions is empty".into()));
        }
        if self.n_nodes < 2 {
            return Err(Error::Spec("n_nodes must be >= 2".into()));
        }
        for g in &self.generator {
            if g.values.len() != 1 && g.values.len() != q {
                return Err(Error::Spec(format!(
                    "generator term {} has {} values; expected 1 or {q}",
                    g.term().label(),
                    g.values.len()
                )));
            }
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Spec(format!("generator term {} has a non-finite value", g.term().label())));
            }
        }
        self.generator_spec()?;
        let labels: Vec<String> = self.generator.iter().map(|g| g.term().label()).collect();
        for f in &self.fits {
            for h in &f.heterogeneous {
                if !labels.contains(h) {
                    return Err(Error::Spec(format!("fit `{}` frees unknown term `{h}`", f.name)));
                }
            }
            self.fit_spec(f)?;
        }
        Ok(())
    }

    /// The generating model: a term is class specific when its values differ
    /// by class.
    pub fn generator_spec(&self) -> Result<ModelSpec> {
        let terms: Vec<TermSpec> = self.generator.iter().map(GeneratorTerm::term).collect();
        let q = if terms.iter().any(|t| t.heterogeneous) { self.n_classes() } else { 1 };
        ModelSpec::new(terms, q, self.mode)
    }

    /// Generating parameters in `generator_spec().layout()` order.
    pub fn generator_theta(&self) -> Result<Vec<f64>> {
        let spec = self.generator_spec()?;
        let layout = spec.layout();
        let mut theta = vec![0.0; layout.n_params()];
        for (k, g) in self.generator.iter().enumerate() {
            for c in 0..layout.n_classes() {
                theta[layout.column(k, c)] = g.value(c);
            }
        }
        Ok(theta)
    }

    pub fn fit_spec(&self, fit: &FitSpec) -> Result<ModelSpec> {
        let terms = self
            .generator
            .iter()
            .map(|g| TermSpec {
                heterogeneous: fit.heterogeneous.contains(&g.term().label()),
                ..g.term()
            })
            .collect();
        ModelSpec::new(terms, fit.classes, self.mode)
    }

    /// True values matched to a fit's parameters. A term that is class
    /// specific in the generator or in the fit gets one row per class, using
    /// the class's generating value and the fit's column for that class.
    pub fn truth_for(&self, fit: &FitSpec) -> Result<Vec<TruthRow>> {
        let spec = self.fit_spec(fit)?;
        let layout = spec.layout();
        let q = self.n_classes();
        let mut rows = Vec::new();
        for (k, g) in self.generator.iter().enumerate() {
            let label = g.term().label();
            if g.values.len() > 1 || layout.is_heterogeneous(k) {
                for c in 0..q {
                    let col = layout.column(k, c.min(layout.n_classes() - 1));
                    rows.push(TruthRow {
                        parameter: format!("{label}.class{c}"),
                        true_value: g.value(c),
                        column: col,
                    });
                }
            } else {
                rows.push(TruthRow {
                    parameter: label,
                    true_value: g.values[0],
                    column: layout.column(k, 0),
                });
            }
        }
        Ok(rows)
    }

    /// The first fit with more than one class.
    pub fn mixture_fit(&self) -> Option<&FitSpec> {
        self.fits.iter().find(|f| f.classes > 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub parameter: String,
    pub true_value: f64,
    /// Column of the fitted parameter vector holding the estimate.
    pub column: usize,
}

/// Zero-inflated ordinal marginal: 0 with probability `1 − p_nonzero`,
/// otherwise `levels[k]` with probability `probs[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroInflated {
    pub p_nonzero: f64,
    pub levels: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ZeroInflated {
    pub fn mean(&self) -> f64 {
        self.p_nonzero * self.levels.iter().zip(&self.probs).map(|(l, p)| l * p).sum::<f64>()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if rng.random::<f64>() >= self.p_nonzero {
            return 0.0;
        }
        pick(&self.levels, &self.probs, rng)
    }
}

fn pick<R: Rng, T: Copy>(items: &[T], probs: &[f64], rng: &mut R) -> T {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (item, p) in items.iter().zip(probs) {
        if u < *p {
            return *item;
        }
        u -= p;
    }
    *items.last().expect("non-empty")
}

/// Independent marginals for synthetic adolescent-friendship covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGeneratorSpec {
    pub n_nodes: usize,
    pub p_male: f64,
    pub ethnicity_labels: Vec<String>,
    pub ethnicity_weights: Vec<f64>,
    pub alcohol: ZeroInflated,
    pub tobacco: ZeroInflated,
    pub marijuana: ZeroInflated,
    /// `antisocial = scale · Beta(a, b)`.
    pub antisocial_beta: (f64, f64),
    pub antisocial_scale: f64,
}

impl Default for CovariateGeneratorSpec {
    fn default() -> Self {
        CovariateGeneratorSpec {
            n_nodes: 151,
            p_male: 0.473,
            ethnicity_labels: ["black", "native", "hispanic", "white", "other"]
                .map(String::from)
                .to_vec(),
            ethnicity_weights: vec![23.03, 1.32, 18.42, 48.03, 6.58],
            alcohol: ZeroInflated {
                p_nonzero: 0.2697,
                levels: vec![1.0, 2.0, 3.0, 4.0],
                probs: vec![0.55, 0.30, 0.09, 0.06],
            },
            tobacco: ZeroInflated {
                p_nonzero: 0.0658,
                levels: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                probs: vec![0.25, 0.27, 0.20, 0.15, 0.13],
            },
            marijuana: ZeroInflated {
                p_nonzero: 0.0921,
                levels: vec![1.0, 2.0, 3.0, 4.0],
                probs: vec![0.45, 0.28, 0.17, 0.10],
            },
            antisocial_beta: (1.2, 6.75),
            antisocial_scale: 2.0,
        }
    }
}

/// One covariate table per seed with columns `gender`, `ethnicity`
/// (categorical) and `alcohol`, `tobacco`, `marijuana`, `antisocial`.
pub fn generate_covariates(gspec: &CovariateGeneratorSpec, seed: u64) -> Result<CovariateTable> {
    let n = gspec.n_nodes;
    let (a, b) = gspec.antisocial_beta;
    let beta = Beta::new(a, b).map_err(|e| Error::Invalid(format!("antisocial beta: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let gender: Vec<&str> = (0..n)
        .map(|_| if rng.random::<f64>() < gspec.p_male { "male" } else { "female" })
        .collect();
    let labels: Vec<&str> = gspec.ethnicity_labels.iter().map(String::as_str).collect();
    let ethnicity: Vec<&str> = (0..n)
        .map(|_| pick(&labels, &gspec.ethnicity_weights, &mut rng))
        .collect();
    let alcohol = (0..n).map(|_| gspec.alcohol.draw(&mut rng)).collect();
    let tobacco = (0..n).map(|_| gspec.tobacco.draw(&mut rng)).collect();
    let marijuana = (0..n).map(|_| gspec.marijuana.draw(&mut rng)).collect();
    let antisocial = (0..n)
        .map(|_| gspec.antisocial_scale * beta.sample(&mut rng))
        .collect();
    CovariateTable::empty(n)
        .categorical("gender", &gender)?
        .categorical("ethnicity", &ethnicity)?
        .continuous("alcohol", alcohol)?
        .continuous("tobacco", tobacco)?
        .continuous("marijuana", marijuana)?
        .continuous("antisocial", antisocial)
}

/// `n_target` rows drawn with replacement from `base`.
pub fn resample_covariates(base: &CovariateTable, n_target: usize, seed: u64) -> Result<CovariateTable> {
    if n_target < 2 {
        return Err(Error::Invalid("n_target must be >= 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let rows: Vec<usize> = (0..n_target)
        .map(|_| rng.random_range(0..base.n_nodes()))
        .collect();
    base.select_rows(&rows)
}

/// Run-time settings that may override the condition file.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub n_replications: Option<usize>,
    pub seed: Option<u64>,
    pub n_starts: usize,
    pub max_iter: usize,
    pub refit: RefitPolicy,
    pub covariates: CovariateGeneratorSpec,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            n_replications: None,
            seed: None,
            n_starts: 20,
            max_iter: 200,
            refit: RefitPolicy::Never,
            covariates: CovariateGeneratorSpec::default(),
        }
    }
}

impl StudyOptions {
    fn cem(&self, seed: u64) -> CemControls {
        CemControls {
            n_starts: self.n_starts,
            max_iter: self.max_iter,
            seed,
            refit: self.refit,
            ..CemControls::default()
        }
    }
}

/// Outcome of one fit in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub replication: usize,
    pub fit: String,
    pub result: std::result::Result<MixtureFit, String>,
    /// Against the planted labels, for mixture fits.
    pub ari: Option<f64>,
    /// Against the planted labels over alcohol users only.
    pub ari_users: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AriSummary {
    pub fit: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub mean_users: Option<f64>,
    pub sd_users: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub condition: StudyCondition,
    pub covariates: CovariateTable,
    pub planted: LabelAssignment,
    pub records: Vec<FitRecord>,
    /// `(fit name, report)` per fit spec, over successful replications.
    pub bias: Vec<(String, BiasReport)>,
}

impl ConditionResult {
    pub fn bias_for(&self, fit: &str) -> Option<&BiasReport> {
        self.bias.iter().find(|(n, _)| n == fit).map(|(_, b)| b)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&FitRecord, &str)> {
        self.records
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r, e.as_str())))
    }

    pub fn ari_summary(&self, fit: &str) -> Option<AriSummary> {
        let ari: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.fit == fit)
            .filter_map(|r| r.ari)
            .collect();
        if ari.is_empty() {
            return None;
        }
        let users: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.fit == fit)
            .filter_map(|r| r.ari_users)
            .collect();
        let (mean, sd) = mean_sd(&ari);
        let (mean_users, sd_users) = if users.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_sd(&users);
            (Some(m), Some(s))
        };
        Some(AriSummary {
            fit: fit.to_string(),
            n: ari.len(),
            mean,
            sd,
            mean_users,
            sd_users,
        })
    }

    /// Human-readable summary for terminals.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "condition {} ({} nodes, {} replications)\n",
            self.condition.name,
            self.condition.n_nodes,
            self.records.iter().map(|r| r.replication).max().map_or(0, |m| m + 1)
        );
        for f in &self.condition.fits {
            let ok = self.records.iter().filter(|r| r.fit == f.name && r.result.is_ok()).count();
            let total = self.records.iter().filter(|r| r.fit == f.name).count();
            s += &format!("  fit {:<14} {ok}/{total} succeeded", f.name);
            if let Some(a) = self.ari_summary(&f.name) {
                s += &format!("  ARI {:.3} ({:.3})", a.mean, a.sd);
                if let (Some(m), Some(sd)) = (a.mean_users, a.sd_users) {
                    s += &format!("  users ARI {m:.3} ({sd:.3})");
                }
            }
            s.push('\n');
            if let Some(b) = self.bias_for(&f.name) {
                s += &format!("    {:<28} {:>9} {:>9} {:>9} {:>8} {:>8}\n", "parameter", "true", "mean", "rel.bias", "sd", "mean.se");
                for r in &b.rows {
                    s += &format!(
                        "    {:<28} {:>9.3} {:>9.3} {:>9} {:>8.3} {:>8.3}\n",
                        r.parameter,
                        r.true_value,
                        r.mean_estimate,
                        r.relative_bias.map_or("NA".into(), |v| format!("{v:.3}")),
                        r.empirical_sd,
                        r.mean_estimated_se
                    );
                }
            }
        }
        s
    }

    /// Writes `bias_<cond>_<fit>.csv`, `fits_<cond>_<fit>.csv` and
    /// `ari_<cond>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cond = &self.condition.name;
        for (fit, report) in &self.bias {
            let path = dir.join(format!("bias_{cond}_{fit}.csv"));
            report.write_csv(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))?;
        }
        for f in &self.condition.fits {
            let path = dir.join(format!("fits_{cond}_{}.csv", f.name));
            self.write_fits(&f.name, &path)?;
        }
        let path = dir.join(format!("ari_{cond}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["replication", "fit", "ari", "ari_alcohol_users"])?;
        for r in self.records.iter().filter(|r| r.ari.is_some()) {
            w.write_record([
                r.replication.to_string(),
                r.fit.clone(),
                r.ari.map_or("NA".into(), fmt),
                r.ari_users.map_or("NA".into(), fmt),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    fn write_fits(&self, fit: &str, path: &Path) -> Result<()> {
        let spec = self
            .condition
            .fits
            .iter()
            .find(|f| f.name == fit)
            .expect("fit listed in condition");
        let names = self.condition.fit_spec(spec)?.layout().names().to_vec();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["replication".to_string(), "status".into(), "log_cpl".into()];
        header.extend(names.iter().cloned());
        header.extend(names.iter().map(|n| format!("se.{n}")));
        header.extend((0..spec.classes).map(|q| format!("size.class{q}")));
        w.write_record(&header)?;
        for r in self.records.iter().filter(|r| r.fit == fit) {
            let mut row = vec![r.replication.to_string()];
            match &r.result {
                Ok(m) => {
                    row.push(if m.converged { "converged".into() } else { "not_converged".into() });
                    row.push(fmt(m.log_cpl));
                    let est = m.estimates();
                    row.extend(est.theta.iter().map(|v| fmt(*v)));
                    row.extend(est.std_errors.iter().map(|v| fmt(*v)));
                    row.extend(m.assignment.class_sizes().iter().map(usize::to_string));
                }
                Err(_) => {
                    row.push("failed".into());
                    row.extend(std::iter::repeat_n("NA".to_string(), 1 + 2 * names.len() + spec.classes));
                }
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

/// Draws one network from the condition's generator at the given labels.
fn simulate_network(
    cond: &StudyCondition,
    cov: &CovariateTable,
    planted: &LabelAssignment,
    seed: u64,
) -> Result<DirectedNetwork> {
    let spec = cond.generator_spec()?;
    let theta = cond.generator_theta()?;
    let n = cov.n_nodes();
    let labels = if spec.n_classes == 1 { None } else { Some(planted) };
    let controls = SamplerControls::defaults(n, 1, seed);
    let mut draws = simulate(&spec, cov, &theta, labels, &controls, Init::Empty)?;
    Ok(draws.pop().expect("one draw"))
}

fn user_mask(cov: &CovariateTable) -> Option<Vec<bool>> {
    cov.continuous_values(USER_COVARIATE)
        .ok()
        .map(|v| v.iter().map(|&x| x > 0.0).collect())
}

fn fit_replication(
    cond: &StudyCondition,
    cov: &CovariateTable,
    planted: &LabelAssignment,
    fits: &[&FitSpec],
    options: &StudyOptions,
    replication: usize,
    rep_seed: u64,
) -> Vec<FitRecord> {
    let net = simulate_network(cond, cov, planted, rep_seed);
    let mask = user_mask(cov);
    fits.iter()
        .enumerate()
        .map(|(f, spec)| {
            let fit_seed = derive_seed(rep_seed, &[tag::FIT, f as u64]);
            let result = net.as_ref().map_err(|e| format!("simulation: {e}")).and_then(|net| {
                let model = cond.fit_spec(spec).map_err(|e| e.to_string())?;
                fit_cem(net, cov, &model, &options.cem(fit_seed)).map_err(|e| e.to_string())
            });
            let (ari, ari_users) = match &result {
                Ok(m) if spec.classes > 1 => (
                    adjusted_rand(m.assignment.labels(), planted.labels()).ok(),
                    mask.as_ref()
                        .and_then(|mk| adjusted_rand_subset(m.assignment.labels(), planted.labels(), mk).ok()),
                ),
                _ => (None, None),
            };
            FitRecord {
                replication,
                fit: spec.name.clone(),
                result,
                ari,
                ari_users,
            }
        })
        .collect()
}

/// Runs every replication of `cond` and, when `out_dir` is given, writes
/// the CSV outputs there. Failed fits are kept in the records and left out of
/// the aggregates.
pub fn run_condition(cond: &StudyCondition, options: &StudyOptions, out_dir: Option<&Path>) -> Result<ConditionResult> {
    cond.validate()?;
    let seed = options.seed.unwrap_or(cond.seed);
    let reps = options.n_replications.unwrap_or(cond.n_replications);
    let gspec = CovariateGeneratorSpec {
        n_nodes: cond.n_nodes,
        ..options.covariates.clone()
    };
    let cov = generate_covariates(&gspec, derive_seed(seed, &[tag::COVARIATES]))?;
    let planted = plant_classes(cond.n_nodes, &cond.class_proportions, derive_seed(seed, &[tag::LABELS]))?;
    let fits: Vec<&FitSpec> = cond.fits.iter().collect();
    let records: Vec<FitRecord> = (0..reps)
        .into_par_iter()
        .flat_map_iter(|r| {
            let rep_seed = derive_seed(seed, &[tag::REPLICATION, r as u64]);
            fit_replication(cond, &cov, &planted, &fits, options, r, rep_seed)
        })
        .collect();

    let mut bias = Vec::new();
    for f in &cond.fits {
        let truth = cond.truth_for(f)?;
        let ok: Vec<&MixtureFit> = records
            .iter()
            .filter(|r| r.fit == f.name)
            .filter_map(|r| r.result.as_ref().ok())
            .collect();
        if ok.is_empty() {
            continue;
        }
        let names: Vec<String> = truth.iter().map(|t| t.parameter.clone()).collect();
        let values: Vec<f64> = truth.iter().map(|t| t.true_value).collect();
        let pick = |v: &[f64]| truth.iter().map(|t| v[t.column]).collect::<Vec<_>>();
        let est: Vec<Vec<f64>> = ok.iter().map(|m| pick(&m.estimates().theta)).collect();
        let se: Vec<Vec<f64>> = ok.iter().map(|m| pick(&m.estimates().std_errors)).collect();
        bias.push((f.name.clone(), bias_table(&names, &values, &est, &se)?));
    }
    let result = ConditionResult {
        condition: StudyCondition {
            seed,
            n_replications: reps,
            ..cond.clone()
        },
        covariates: cov,
        planted,
        records,
        bias,
    };
    if let Some(dir) = out_dir {
        result.write(dir)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_nodes: usize,
    pub replication: usize,
    /// `None` when the fit failed.
    pub ari: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub condition: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn median_ari(&self, n_nodes: usize) -> Option<f64> {
        let mut v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n_nodes == n_nodes)
            .filter_map(|r| r.ari)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n_nodes", "replication", "ari"])?;
        for r in &self.rows {
            w.write_record([
                r.n_nodes.to_string(),
                r.replication.to_string(),
                r.ari.map_or("NA".into(), fmt),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Adjusted Rand index of the condition's mixture fit over networks of each
/// size. Covariates for size `N` are resampled from the condition's base
/// table; planted labels are redrawn at that size.
pub fn run_size_sweep(
    cond: &StudyCondition,
    sizes: &[usize],
    reps_per_size: usize,
    options: &StudyOptions,
    out_dir: Option<&Path>,
) -> Result<SweepResult> {
    cond.validate()?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("sizes must be non-empty and strictly ascending".into()));
    }
    let fit = cond
        .mixture_fit()
        .ok_or_else(|| Error::Spec(format!("condition {} has no mixture fit", cond.name)))?;
    let seed = options.seed.unwrap_or(cond.seed);
    let gspec = CovariateGeneratorSpec {
        n_nodes: cond.n_nodes,
        ..options.covariates.clone()
    };
    let base = generate_covariates(&gspec, derive_seed(seed, &[tag::COVARIATES]))?;
    let mut rows = Vec::new();
    for &n in sizes {
        let size_seed = derive_seed(seed, &[tag::SWEEP, n as u64]);
        let cov = resample_covariates(&base, n, derive_seed(size_seed, &[tag::RESAMPLE]))?;
        let planted = plant_classes(n, &cond.class_proportions, derive_seed(size_seed, &[tag::LABELS]))?;
        let sized = StudyCondition {
            n_nodes: n,
            ..cond.clone()
        };
        let records: Vec<FitRecord> = (0..reps_per_size)
            .into_par_iter()
            .flat_map_iter(|r| {
                let rep_seed = derive_seed(size_seed, &[tag::REPLICATION, r as u64]);
                fit_replication(&sized, &cov, &planted, &[fit], options, r, rep_seed)
            })
            .collect();
        rows.extend(records.into_iter().map(|r| SweepRow {
            n_nodes: n,
            replication: r.replication,
            ari: r.ari,
        }));
    }
    let result = SweepResult {
        condition: cond.name.clone(),
        rows,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        result.write_csv(&dir.join(format!("sweep_{}.csv", cond.name)))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_conditions_load() {
        assert_eq!(StudyCondition::builtin_names().len(), 9);
        for name in StudyCondition::builtin_names() {
            let c = StudyCondition::builtin(name).unwrap();
            assert_eq!(c.name, name);
            assert_eq!(c.generator.len(), 17);
            assert_eq!(c.n_nodes, 151);
        }
        assert!(StudyCondition::builtin("6").is_err());
    }

    #[test]
    fn condition_3plus_values() {
        let c = StudyCondition::builtin("3+").unwrap();
        let spec = c.generator_spec().unwrap();
        let theta = c.generator_theta().unwrap();
        let names = spec.layout().names().to_vec();
        let get = |n: &str| theta[names.iter().position(|x| x == n).unwrap()];
        assert_eq!(get("edges.class0"), -3.25);
        assert_eq!(get("edges.class1"), -4.75);
        assert_eq!(get("sender.alcohol.class1"), -1.0);
        assert_eq!(get("gwesp.0.1"), 0.97);
        let het = c.fit_spec(c.mixture_fit().unwrap()).unwrap();
        assert_eq!(het.layout().n_params(), 15 + 2 * 2);
    }

    #[test]
    fn truth_rows() {
        let c = StudyCondition::builtin("3+").unwrap();
        let hom = c.truth_for(&c.fits[0]).unwrap();
        assert_eq!(hom.len(), 19);
        let edges: Vec<_> = hom.iter().filter(|t| t.parameter.starts_with("edges")).collect();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].column, edges[1].column);
        let het = c.truth_for(&c.fits[1]).unwrap();
        let edges: Vec<_> = het.iter().filter(|t| t.parameter.starts_with("edges")).collect();
        assert_ne!(edges[0].column, edges[1].column);
        let five = StudyCondition::builtin("5").unwrap();
        let rows = five.truth_for(&five.fits[1]).unwrap();
        let sa: Vec<_> = rows.iter().filter(|t| t.parameter.starts_with("sender.alcohol")).collect();
        assert_eq!(sa.len(), 2);
        assert_eq!(sa[0].true_value, 0.06);
    }

    #[test]
    fn covariate_generator() {
        let g = CovariateGeneratorSpec::default();
        assert!((g.alcohol.mean() - 0.4476).abs() < 0.001);
        let a = generate_covariates(&g, 5).unwrap();
        assert_eq!(a, generate_covariates(&g, 5).unwrap());
        assert_eq!(a.n_nodes(), 151);
        let big = generate_covariates(&CovariateGeneratorSpec { n_nodes: 1000, ..g }, 5).unwrap();
        let users = big.continuous_values("alcohol").unwrap().iter().filter(|&&v| v > 0.0).count();
        assert!((users as f64 / 1000.0 - 0.2697).abs() < 0.05);
    }

    #[test]
    fn resampling_draws_base_rows() {
        let base = CovariateTable::empty(5)
            .continuous("x", vec![1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap();
        let r = resample_covariates(&base, 5, 1).unwrap();
        assert!(r.continuous_values("x").unwrap().iter().all(|v| (1.0..=5.0).contains(v)));
        assert_eq!(r, resample_covariates(&base, 5, 1).unwrap());
        assert!(resample_covariates(&base, 1, 1).is_err());
    }

    #[test]
    fn invalid_condition() {
        let mut c = StudyCondition::builtin("1").unwrap();
        c.generator[0].values = vec![1.0, 2.0, 3.0];
        assert!(c.validate().is_err());
        let mut c = StudyCondition::builtin("1").unwrap();
        c.fits[1].heterogeneous = vec!["nope".into()];
        assert!(c.validate().is_err());
    }
}
