//! Command-line driver: configuration, subcommands and artifacts.
//!
//! Configuration files are flat JSON objects whose dotted keys name fields of
//! the nested [`ExperimentConfig`], e.g. `"model.theta1"`, `"free.K2"`,
//! `"grid.h"`. Nested objects are accepted too. Flags override the file.
//!
//! Exit codes: 0 when every hard assertion holds, 1 when one fails, 2 when
//! the configuration or the command line is rejected.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::carleman::{check_weight_bounds, phi, random_frozen_matrix, CarlemanTrial, CarlemanTrialConfig, WeightFunction};
use crate::constants::{admissibility_epsilon, c_sfuc, uc_report, EpsilonContext, FreeConstants, ModelParams};
use crate::discretization::assemble;
use crate::error::{invalid, Result, UcError};
use crate::fields::{CoefficientField, FieldTargets};
use crate::geometry::{integer_ratio, BoundaryCondition};
use crate::spectral::{eigensolve, energy_residual, SolverOptions, SpectralRequest};
use crate::verifier::{
    benchmark_field, benchmark_suite, cacciopoli_check, delta_sweep, extension_trial, l_independence, verify_with_field,
    Annulus, ObservabilityRecord, SequenceKind, SweepPsi, VerifyConfig, DEFAULT_SWEEP_DELTAS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Largest pointwise residual violation tolerated on benchmark records.
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    pub bc: BoundaryCondition,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            h: 1.0 / 32.0,
            bc: BoundaryCondition::Dirichlet,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub psi: SweepPsi,
    pub deltas: Vec<f64>,
    /// Side lengths for the L-independence check.
    pub lengths: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            psi: SweepPsi::Constant,
            deltas: DEFAULT_SWEEP_DELTAS.to_vec(),
            lengths: vec![3.0, 5.0, 7.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSection {
    pub hs: Vec<f64>,
    pub rho: f64,
    /// Absent: derived from the admissibility threshold.
    pub mu: Option<f64>,
    pub alpha_multiplier: f64,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        Self {
            hs: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            rho: 1.0,
            mu: None,
            alpha_multiplier: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacciopoliSection {
    pub r1: f64,
    pub r2: f64,
    pub r: f64,
    /// Annulus center; the origin when empty.
    pub center: Vec<f64>,
}

impl Default for CacciopoliSection {
    fn default() -> Self {
        Self {
            r1: 0.25,
            r2: 0.5,
            r: 0.25,
            center: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSection {
    pub rho: f64,
    pub mu: f64,
    /// Table rows along the first axis.
    pub rows: usize,
    /// Random points for the bound check.
    pub points: usize,
}

impl Default for WeightSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            mu: 2.0,
            rows: 65,
            points: 10_000,
        }
    }
}

/// Everything a run needs; serialized verbatim into every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub free: FreeConstants,
    pub grid: GridConfig,
    pub seeds: Vec<u64>,
    /// Defaults to `[model.delta]`.
    pub deltas: Vec<f64>,
    pub energy: f64,
    pub field_seed: u64,
    pub eigen_count: usize,
    pub sequence: SequenceKind,
    /// `verify` runs the fixed benchmark grid instead of one configuration.
    pub benchmark: bool,
    pub inflated_pair: bool,
    pub allow_inadmissible: bool,
    pub emit_plot_data: bool,
    pub field_file: Option<PathBuf>,
    pub out: PathBuf,
    pub sweep: SweepSection,
    pub carleman: CarlemanSection,
    pub cacciopoli: CacciopoliSection,
    pub weight: WeightSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            free: FreeConstants::default(),
            grid: GridConfig::default(),
            seeds: vec![0],
            deltas: Vec::new(),
            energy: 0.0,
            field_seed: 0,
            eigen_count: 4,
            sequence: SequenceKind::Random,
            benchmark: false,
            inflated_pair: false,
            allow_inadmissible: false,
            emit_plot_data: false,
            field_file: None,
            out: PathBuf::from("sfuc-out"),
            sweep: SweepSection::default(),
            carleman: CarlemanSection::default(),
            cacciopoli: CacciopoliSection::default(),
            weight: WeightSection::default(),
        }
    }
}

/// Expand dotted keys into nested objects.
pub fn unflatten(flat: Map<String, Value>) -> Result<Value> {
    let mut root = Map::new();
    for (key, value) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            if part.is_empty() {
                return Err(invalid("config", format!("empty segment in key `{key}`")));
            }
            if i + 1 == parts.len() {
                match (node.get_mut(*part), value) {
                    (Some(Value::Object(existing)), Value::Object(new)) => existing.extend(new),
                    (Some(_), _) => return Err(invalid("config", format!("duplicate key `{key}`"))),
                    (None, v) => {
                        let v = match v {
                            Value::Object(m) => unflatten(m)?,
                            other => other,
                        };
                        node.insert(part.to_string(), v);
                    }
                }
                break;
            }
            let entry = node.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
            node = entry
                .as_object_mut()
                .ok_or_else(|| invalid("config", format!("`{part}` is both a value and a section")))?;
        }
    }
    Ok(Value::Object(root))
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| UcError::Serde(e.to_string()))?;
        let Value::Object(flat) = v else {
            return Err(invalid("config", "top level must be an object"));
        };
        serde_json::from_value(unflatten(flat)?).map_err(|e| UcError::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn deltas(&self) -> Vec<f64> {
        if self.deltas.is_empty() {
            vec![self.model.delta]
        } else {
            self.deltas.clone()
        }
    }

    /// Checks shared by every subcommand except `constants`, which reports
    /// inadmissible parameters instead of refusing them.
    pub fn validate(&self, check_epsilon: bool) -> Result<()> {
        self.model.validate()?;
        self.free.validate()?;
        let p = &self.model;
        for delta in self.deltas() {
            if !(delta > 0.0 && delta < p.g / 2.0) {
                return Err(invalid("delta", format!("need 0 < delta < G/2, got {delta} with G = {}", p.g)));
            }
        }
        match integer_ratio(p.l, p.g) {
            Some(k) if k % 2 == 1 => {}
            _ => return Err(invalid("L", format!("L/G = {} must be an odd integer", p.l / p.g))),
        }
        if !(self.grid.h > 0.0) {
            return Err(invalid("h", "must be > 0"));
        }
        if check_epsilon && !self.allow_inadmissible {
            let eps = admissibility_epsilon(p, EpsilonContext::SamplingG);
            if !(eps > 0.0) {
                return Err(UcError::Inadmissible(format!(
                    "epsilon_2 = {eps} <= 0; pass --allow-inadmissible to chart it"
                )));
            }
        }
        Ok(())
    }

    pub fn verify_config(&self) -> VerifyConfig {
        let p = &self.model;
        VerifyConfig {
            d: p.d,
            bc: self.grid.bc,
            l: p.l,
            g: p.g,
            h: self.grid.h,
            deltas: self.deltas(),
            seeds: self.seeds.clone(),
            field: FieldTargets {
                theta1: p.theta1,
                theta2: p.theta2,
                norm_b: p.norm_b,
                norm_c: p.norm_c,
                norm_v: p.norm_v,
            },
            field_seed: self.field_seed,
            free_constants: self.free,
            eigen_count: self.eigen_count,
            sequence: self.sequence,
            solver: SolverOptions::default(),
            inflated_pair: self.inflated_pair,
        }
    }
}

/// Result of one subcommand before it is written out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub records: Vec<Value>,
    /// Header row first.
    pub summary: Vec<Vec<String>>,
    pub plot: Option<Vec<Vec<String>>>,
    /// Hard-assertion failures, each naming its record.
    pub failures: Vec<String>,
}

#[derive(Parser, Debug)]
#[command(name = "sfuc", version, about = "Scale-free unique continuation laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat-dotted-key JSON configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replaces the configured seed list by this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub h: Option<f64>,
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
    #[arg(long, global = true)]
    pub allow_inadmissible: bool,
    /// Coefficient field (JSON) replacing the synthesized one.
    #[arg(long, global = true)]
    pub field_file: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Every constant of the sampling chain.
    Constants,
    /// Observability trials against the scale-free bound.
    Verify,
    /// Delta sweep with slope fit and the L-independence check.
    Sweep,
    /// Discrete Carleman inequality across refinements.
    CarlemanCheck,
    /// Cacciopoli inequality on an annulus.
    CacciopoliCheck,
    /// Reflection and periodic extension validators.
    ExtendCheck,
    /// Table of the Carleman weight and its bounds.
    Weight,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::CarlemanCheck => "carleman-check",
            Command::CacciopoliCheck => "cacciopoli-check",
            Command::ExtendCheck => "extend-check",
            Command::Weight => "weight",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(h) = cli.h {
        cfg.grid.h = h;
    }
    if let Some(f) = &cli.field_file {
        cfg.field_file = Some(f.clone());
    }
    cfg.emit_plot_data |= cli.emit_plot_data;
    cfg.allow_inadmissible |= cli.allow_inadmissible;
    Ok(cfg)
}

fn is_config_error(e: &UcError) -> bool {
    matches!(
        e,
        UcError::InvalidParameter { .. } | UcError::Inadmissible(_) | UcError::Serde(_) | UcError::Incommensurate(_)
    )
}

/// Parse `args` (program name first), run, write artifacts, return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match resolve(&cli).and_then(|c| c.validate(cli.command != Command::Constants).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sfuc: configuration rejected: {e}");
            return EXIT_CONFIG;
        }
    };
    let outcome = match execute(cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("sfuc {}: {e}", cli.command.name());
            return if is_config_error(&e) { EXIT_CONFIG } else { EXIT_ASSERTION };
        }
    };
    if let Err(e) = write_artifacts(&cfg.out, cli.command, &cfg, &outcome) {
        eprintln!("sfuc: writing artifacts: {e}");
        return EXIT_ASSERTION;
    }
    if outcome.failures.is_empty() {
        println!("sfuc {}: {} records, all assertions hold ({})", cli.command.name(), outcome.records.len(), cfg.out.display());
        EXIT_OK
    } else {
        for f in &outcome.failures {
            eprintln!("assertion failed: {f}");
        }
        EXIT_ASSERTION
    }
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match cmd {
        Command::Constants => run_constants(cfg),
        Command::Verify => run_verify(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::CarlemanCheck => run_carleman(cfg),
        Command::CacciopoliCheck => run_cacciopoli(cfg),
        Command::ExtendCheck => run_extend(cfg),
        Command::Weight => run_weight(cfg),
    }
}

fn to_value<T: Serialize>(t: &T) -> Result<Value> {
    serde_json::to_value(t).map_err(|e| UcError::Serde(e.to_string()))
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, x, out);
            }
        }
        other => out.push(vec![prefix.to_string(), other.to_string()]),
    }
}

fn row<I: IntoIterator<Item = S>, S: ToString>(items: I) -> Vec<String> {
    items.into_iter().map(|s| s.to_string()).collect()
}

/// Record line number in `records.jsonl` (the header is line 1).
fn line_of(i: usize) -> usize {
    i + 2
}

fn run_constants(cfg: &ExperimentConfig) -> Result<Outcome> {
    let rep = uc_report(&cfg.model, &cfg.free, cfg.energy)?;
    let value = to_value(&rep)?;
    let mut summary = vec![row(["key", "value"])];
    flatten_into("", &value, &mut summary);
    let plot = if cfg.emit_plot_data && rep.admissible {
        let mut rows = vec![row(["delta", "log_c_sfuc"])];
        for k in 1..16 {
            let delta = cfg.model.g / 2.0 * k as f64 / 16.0;
            let c = c_sfuc(&ModelParams { delta, ..cfg.model }, &cfg.free)?;
            rows.push(row([delta, c.log_value]));
        }
        Some(rows)
    } else {
        None
    };
    Ok(Outcome {
        report: json!({ "constants": value }),
        records: vec![value],
        summary,
        plot,
        failures: Vec::new(),
    })
}

fn record_failure(i: usize, r: &ObservabilityRecord) -> Option<String> {
    if !r.benchmark {
        return None;
    }
    let mut why = Vec::new();
    if !r.passed {
        why.push(format!("log margin {:e}", r.log_margin));
    }
    if r.trivial_pass {
        why.push("passes only through the zeta term".to_string());
    }
    if r.residual_violation > RESIDUAL_TOL {
        why.push(format!("residual violation {:e}", r.residual_violation));
    }
    if let Some(w) = &r.window {
        if !w.residual_within_window {
            why.push(format!("projector residual {:e} outside the window", w.projector_residual));
        }
    }
    (!why.is_empty()).then(|| {
        format!(
            "records.jsonl line {}: d={} bc={} L={} delta={} seed={} {:?}: {}",
            line_of(i),
            r.params.d,
            r.bc,
            r.params.l,
            r.params.delta,
            r.seed,
            r.psi_kind,
            why.join(", ")
        )
    })
}

/// Records of the `verify` subcommand.
pub fn verify_records(cfg: &ExperimentConfig) -> Result<Vec<ObservabilityRecord>> {
    let mut records = Vec::new();
    if cfg.benchmark {
        for mut vc in benchmark_suite(cfg.grid.h) {
            vc.free_constants = cfg.free;
            records.extend(verify_with_field(&vc, &benchmark_field(&vc)?)?);
        }
    } else {
        let vc = cfg.verify_config();
        let field = match &cfg.field_file {
            Some(p) => CoefficientField::from_json(&std::fs::read_to_string(p)?)?,
            None => benchmark_field(&vc)?,
        };
        records = verify_with_field(&vc, &field)?;
    }
    Ok(records)
}

fn run_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let records = verify_records(cfg)?;
    let failures: Vec<String> = records.iter().enumerate().filter_map(|(i, r)| record_failure(i, r)).collect();
    let mut summary = vec![row([
        "d", "bc", "L", "h", "delta", "seed", "psi_kind", "eigen_index", "eigenvalue", "ratio", "zeta_term", "log_bound",
        "log_margin", "passed", "trivial_pass",
    ])];
    for r in &records {
        summary.push(vec![
            r.params.d.to_string(),
            r.bc.to_string(),
            r.params.l.to_string(),
            r.h.to_string(),
            r.params.delta.to_string(),
            r.seed.to_string(),
            to_value(&r.psi_kind)?.as_str().unwrap_or_default().to_string(),
            r.eigen_index.to_string(),
            r.eigenvalue.to_string(),
            r.ratio.to_string(),
            r.zeta_term.to_string(),
            r.log_bound.to_string(),
            r.log_margin.to_string(),
            r.passed.to_string(),
            r.trivial_pass.to_string(),
        ]);
    }
    let plot = cfg.emit_plot_data.then(|| {
        let mut rows = vec![row(["delta", "ratio", "log_bound"])];
        rows.extend(records.iter().map(|r| row([r.params.delta, r.ratio, r.log_bound])));
        rows
    });
    let passed = records.iter().filter(|r| r.passed).count();
    let trivial = records.iter().filter(|r| r.trivial_pass).count();
    let min_margin = records.iter().map(|r| r.log_margin).fold(f64::INFINITY, f64::min);
    let mut report = json!({
        "records": records.len(),
        "passed": passed,
        "trivial_passes": trivial,
        "benchmark_records": records.iter().filter(|r| r.benchmark).count(),
        "min_log_margin": min_margin,
        "failures": failures,
    });
    if !cfg.benchmark && cfg.field_file.is_none() {
        report["field"] = serde_json::from_str(&benchmark_field(&cfg.verify_config())?.to_json()?)
            .map_err(|e| UcError::Serde(e.to_string()))?;
    }
    Ok(Outcome {
        report,
        records: records.iter().map(to_value).collect::<Result<_>>()?,
        summary,
        plot,
        failures,
    })
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let vc = VerifyConfig {
        sequence: SequenceKind::Centered,
        ..cfg.verify_config()
    };
    let s = delta_sweep(&vc, cfg.sweep.psi, &cfg.sweep.deltas)?;
    let li = l_independence(&vc, &cfg.sweep.lengths)?;
    let mut failures = Vec::new();
    if !s.lower_ok || !s.upper_ok {
        failures.push(format!("slope {} outside [{}, {:e}]", s.slope, s.d, s.exponent));
    }
    if s.psi == SweepPsi::Constant && s.r_squared < 0.99 {
        failures.push(format!("R^2 {} < 0.99 for psi = 1", s.r_squared));
    }
    if !li.bounds_identical {
        failures.push("bound differs across L".into());
    }
    if !li.mask_fractions_identical {
        failures.push("mask fraction differs across L".into());
    }
    if !(li.min_log_margin > 0.0) {
        failures.push(format!("L-independence log margin {}", li.min_log_margin));
    }
    let mut summary = vec![row(["delta", "ratio", "log_bound"])];
    summary.extend(s.points.iter().map(|p| row([p.delta, p.ratio, p.log_bound])));
    let plot = cfg.emit_plot_data.then(|| {
        let mut rows = vec![row(["ln_delta", "ln_ratio"])];
        rows.extend(s.points.iter().map(|p| row([p.delta.ln(), p.ratio.ln()])));
        rows
    });
    let mut records: Vec<Value> = s.points.iter().map(to_value).collect::<Result<_>>()?;
    records.extend(li.records.iter().map(to_value).collect::<Result<Vec<_>>>()?);
    Ok(Outcome {
        report: json!({ "sweep": to_value(&s)?, "l_independence": to_value(&li)?, "failures": failures }),
        records,
        summary,
        plot,
        failures,
    })
}

/// `true` when the worst ratio moves in one direction as `h` decreases.
pub fn monotone_in_h(worst: &[(f64, f64)]) -> bool {
    let mut v = worst.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v.windows(2).all(|w| w[1].1 <= w[0].1) || v.windows(2).all(|w| w[1].1 >= w[0].1)
}

fn run_carleman(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tc = CarlemanTrialConfig {
        rho: cfg.carleman.rho,
        mu: cfg.carleman.mu,
        alpha_multiplier: cfg.carleman.alpha_multiplier,
        ..CarlemanTrialConfig::default()
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut worst: Vec<(f64, f64)> = cfg.carleman.hs.iter().map(|&h| (h, 0.0)).collect();
    for &seed in &cfg.seeds {
        let trial = CarlemanTrial::generate(seed, cfg.model.d, &tc)?;
        for (k, &h) in cfg.carleman.hs.iter().enumerate() {
            let r = trial.run(h)?;
            if !(r.ratio <= 1.0 + 10.0 * h) {
                failures.push(format!("records.jsonl line {}: seed {seed} h {h}: ratio {}", line_of(records.len()), r.ratio));
            }
            worst[k].1 = worst[k].1.max(r.ratio);
            let mut v = to_value(&r)?;
            v["seed"] = json!(seed);
            v["d"] = json!(cfg.model.d);
            v["mu"] = json!(trial.mu);
            v["alpha0"] = json!(trial.alpha0);
            records.push(v);
        }
    }
    let monotone = monotone_in_h(&worst);
    let mut summary = vec![row(["h", "worst_ratio", "trials"])];
    summary.extend(worst.iter().map(|(h, w)| row([h.to_string(), w.to_string(), cfg.seeds.len().to_string()])));
    let plot = cfg.emit_plot_data.then(|| summary.clone());
    Ok(Outcome {
        report: json!({ "worst_ratio_by_h": worst, "monotone_in_h": monotone, "failures": failures }),
        records,
        summary,
        plot,
        failures,
    })
}

fn run_cacciopoli(cfg: &ExperimentConfig) -> Result<Outcome> {
    let vc = cfg.verify_config();
    let domain = vc.domain()?;
    let base = benchmark_field(&vc)?;
    let center = if cfg.cacciopoli.center.is_empty() {
        vec![0.0; vc.d]
    } else {
        cfg.cacciopoli.center.clone()
    };
    if center.len() != vc.d {
        return Err(invalid("cacciopoli.center", format!("needs {} coordinates", vc.d)));
    }
    let ann = Annulus {
        r1: cfg.cacciopoli.r1,
        r2: cfg.cacciopoli.r2,
        r: cfg.cacciopoli.r,
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut summary = vec![row(["seed", "eigenvalue", "lhs", "rhs", "minimal_c_prime", "holds"])];
    for &seed in &cfg.seeds {
        let v = crate::fields::random_potential(domain.len(), vc.field.norm_v, seed);
        let field = base.clone().with_potential(v)?;
        let op = assemble(&field, &domain)?;
        let slice = eigensolve(&op, SpectralRequest::Lowest(vc.eigen_count), &vc.solver)?;
        let j = (seed as usize) % slice.len().max(1);
        let lambda = *slice.eigenvalues.get(j).ok_or(UcError::EmptySlice)?;
        let psi = &slice.eigenvectors[j];
        let zeta = energy_residual(&op, lambda, psi);
        let norm_v = field.v.iter().map(|x| (lambda - x).abs()).fold(0.0, f64::max);
        let mut no_v = field.clone();
        no_v.v = vec![0.0; domain.len()];
        no_v.refresh_norms();
        let r = cacciopoli_check(psi, &zeta, &no_v, norm_v, &domain, &center, ann, cfg.free.c_prime)?;
        if !r.holds {
            failures.push(format!("records.jsonl line {}: seed {seed}: lhs {} > rhs {}", line_of(records.len()), r.lhs, r.rhs));
        }
        summary.push(row([seed.to_string(), lambda.to_string(), r.lhs.to_string(), r.rhs.to_string(), r.minimal_c_prime.to_string(), r.holds.to_string()]));
        let mut v = to_value(&r)?;
        v["seed"] = json!(seed);
        v["eigenvalue"] = json!(lambda);
        v["norm_V"] = json!(norm_v);
        records.push(v);
    }
    let plot = cfg.emit_plot_data.then(|| summary.clone());
    Ok(Outcome {
        report: json!({ "annulus": to_value(&ann)?, "center": center, "failures": failures }),
        records,
        summary,
        plot,
        failures,
    })
}

fn run_extend(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut summary = vec![row(["seed", "interface_jump", "spectrum_defect", "residual_violation", "passed"])];
    for &seed in &cfg.seeds {
        let r = extension_trial(seed, cfg.model.d, cfg.grid.bc, cfg.model.l, cfg.grid.h)?;
        if !r.passed {
            failures.push(format!("records.jsonl line {}: seed {seed}: {r:?}", line_of(records.len())));
        }
        summary.push(row([
            seed.to_string(),
            r.interface_jump.to_string(),
            r.spectrum_defect.to_string(),
            r.residual_violation.to_string(),
            r.passed.to_string(),
        ]));
        records.push(to_value(&r)?);
    }
    let plot = cfg.emit_plot_data.then(|| summary.clone());
    Ok(Outcome {
        report: json!({ "trials": records.len(), "failures": failures }),
        records,
        summary,
        plot,
        failures,
    })
}

fn run_weight(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg.model.d;
    let ws = &cfg.weight;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let w = WeightFunction::new(ws.rho, ws.mu, random_frozen_matrix(seed, d, cfg.model.theta1), d)?;
    let mut summary = vec![row(["x1", "sigma_over_rho", "phi", "w", "lower", "upper"])];
    let mut records = Vec::new();
    let rows = ws.rows.max(2);
    for k in 0..rows {
        let mut x = vec![0.0; d];
        x[0] = ws.rho * k as f64 / (rows - 1) as f64;
        let s = w.sigma(&x) / w.rho;
        let (lo, hi) = w.bounds(&x);
        let v = w.weight(&x);
        summary.push(row([x[0], s, phi(s, w.mu)?, v, lo, hi]));
        records.push(json!({ "x1": x[0], "sigma_over_rho": s, "w": v, "lower": lo, "upper": hi }));
    }
    let check = check_weight_bounds(&w, ws.points, seed);
    let mut failures = Vec::new();
    if check.min_slack() < -1e-10 {
        failures.push(format!("weight bound slack {:e}", check.min_slack()));
    }
    let plot = cfg.emit_plot_data.then(|| summary.clone());
    Ok(Outcome {
        report: json!({ "weight": to_value(&w)?, "bounds": to_value(&check)?, "failures": failures }),
        records,
        summary,
        plot,
        failures,
    })
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_csv(path: &Path, config: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# config={config}")?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.write_record(r).map_err(|e| UcError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `report.json`, `records.jsonl` (timestamp confined to the header line),
/// `summary.csv` and optionally `plot.csv`, each carrying the resolved config.
pub fn write_artifacts(dir: &Path, cmd: Command, cfg: &ExperimentConfig, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let config = to_value(cfg)?;
    let config_line = config.to_string();
    let report = json!({
        "subcommand": cmd.name(),
        "config": config.clone(),
        "result": outcome.report,
        "passed": outcome.failures.is_empty(),
    });
    let pretty = serde_json::to_string_pretty(&report).map_err(|e| UcError::Serde(e.to_string()))?;
    std::fs::write(dir.join("report.json"), pretty + "\n")?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("records.jsonl"))?);
    let header = json!({
        "header": { "tool": "sfuc", "version": env!("CARGO_PKG_VERSION"), "subcommand": cmd.name(), "timestamp": unix_timestamp(), "config": config.clone() }
    });
    writeln!(f, "{header}")?;
    for r in &outcome.records {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    write_csv(&dir.join("summary.csv"), &config_line, &outcome.summary)?;
    if let Some(p) = &outcome.plot {
        write_csv(&dir.join("plot.csv"), &config_line, p)?;
    }
    Ok(())
}
