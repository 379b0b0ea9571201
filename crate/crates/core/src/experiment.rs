//! Named experiments driven by JSON configs, writing CSV tables and a JSON report.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::{verdict_ln, RateFunction, Window, DEFAULT_BURN_IN};
use crate::berezin::{cp_constant, sample_centers, sample_rearranged, write_samples_csv};
use crate::composition::{
    gram_singular_values, pullback_boundary_levels, toeplitz_reduction_singular_values, CompositionSpace,
    SymbolSpec,
};
use crate::error::{BslError, Result};
use crate::harmonic::{esthar_compare, exit_sample, pullback_wos, DomainSpec, WosConfig, WosDomain};
use crate::lattice::{enumerate_cells, write_cells_csv, LatticeParams};
use crate::measures::{rearrangement, CellMassTable, MeasureSpec};
use crate::profile::{predict_singular_values, write_prediction_csv, BoundaryProfile};
use crate::spaces::WeightModel;
use crate::toeplitz::{toeplitz_spectrum, verify_trace_sandwich, write_spectrum_csv, CutPowerFunction};

/// Environment variable overriding the seed of Monte Carlo experiments.
pub const SEED_ENV: &str = "BSL_SEED";

fn default_eps() -> f64 {
    1e-7
}

fn default_step_cap() -> u64 {
    100_000
}

fn default_seed() -> u64 {
    1
}

/// Asymptotic comparison requested alongside a computed sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictSpec {
    pub rate: RateFunction,
    pub window: Window,
    pub spread: f64,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

/// Walk parameters shared by the Monte Carlo experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    pub walks: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps_abs: f64,
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
}

impl WalkParams {
    fn config(&self) -> WosConfig {
        WosConfig { walks: self.walks, seed: self.seed, eps_abs: self.eps_abs, step_cap: self.step_cap }
    }
}

/// One experiment, selected by the "experiment" key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Eigenvalues of the N×N compression of T_μ.
    Spectrum {
        space: WeightModel,
        measure: MeasureSpec,
        dimension: usize,
        #[serde(default)]
        verdict: Option<VerdictSpec>,
    },
    /// Cell averages of μ over a lattice and their decreasing rearrangement.
    Rearrange {
        measure: MeasureSpec,
        lattice: LatticeParams,
        #[serde(default)]
        verdict: Option<VerdictSpec>,
    },
    /// Berezin transform at lattice cell centres.
    BerezinSample {
        space: WeightModel,
        measure: MeasureSpec,
        lattice: LatticeParams,
        #[serde(default)]
        rearranged: bool,
    },
    /// Growth of the C_p constant with lattice depth.
    CpProfile { space: WeightModel, lattice: LatticeParams, p: f64, depth: u32 },
    /// Smallest B for the trace sandwich.
    TraceSandwich {
        space: WeightModel,
        measure: MeasureSpec,
        lattice: LatticeParams,
        h: CutPowerFunction,
        dimension: usize,
    },
    /// Singular values of C_φ from the Gram matrix (and optionally the Toeplitz reduction).
    ComposeGram {
        symbol: SymbolSpec,
        space: CompositionSpace,
        dimension: usize,
        #[serde(default)]
        reduction: bool,
    },
    /// Predicted singular values on a log-spaced grid of n.
    ComposePredict { profile: BoundaryProfile, alpha: f64, n_min: f64, n_max: f64, points: usize },
    /// Pull-back masses of Carleson boxes.
    Pullback {
        symbol: SymbolSpec,
        first_level: u32,
        last_level: u32,
        #[serde(default)]
        walks: Option<WalkParams>,
    },
    /// Harmonic measures of the level-n boxes.
    Wos {
        domain: DomainSpec,
        #[serde(default)]
        start: Option<Complex64>,
        level: u32,
        #[serde(flatten)]
        walks: WalkParams,
    },
    /// Box masses next to the cusp bound.
    Esthar {
        domain: DomainSpec,
        level: u32,
        #[serde(flatten)]
        walks: WalkParams,
    },
    /// Asymptotic verdict on a given sequence.
    Verdict {
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        csv: Option<PathBuf>,
        #[serde(default)]
        column: Option<String>,
        #[serde(flatten)]
        spec: VerdictSpec,
    },
}

/// Outcome of a run, serialised as report.json.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub inputs: Value,
    pub outputs: Vec<String>,
    pub verdicts: Value,
    pub wall_time_s: f64,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub timestamp_unix: u64,
}

fn schema(e: impl std::fmt::Display) -> BslError {
    BslError::Schema(e.to_string())
}

impl ExperimentConfig {
    /// Parses and range-checks a config; every failure is a schema violation.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(schema)?;
        cfg.validate().map_err(|e| match e {
            BslError::Schema(_) => e,
            other => schema(other),
        })?;
        Ok(cfg)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::Spectrum { .. } => "spectrum",
            ExperimentConfig::Rearrange { .. } => "rearrange",
            ExperimentConfig::BerezinSample { .. } => "berezin-sample",
            ExperimentConfig::CpProfile { .. } => "cp-profile",
            ExperimentConfig::TraceSandwich { .. } => "trace-sandwich",
            ExperimentConfig::ComposeGram { .. } => "compose-gram",
            ExperimentConfig::ComposePredict { .. } => "compose-predict",
            ExperimentConfig::Pullback { .. } => "pullback",
            ExperimentConfig::Wos { .. } => "wos",
            ExperimentConfig::Esthar { .. } => "esthar",
            ExperimentConfig::Verdict { .. } => "verdict",
        }
    }

    /// Checks numeric ranges against the preconditions of the module that will run.
    pub fn validate(&self) -> Result<()> {
        let positive_dim = |n: usize| {
            if n == 0 || n > crate::toeplitz::DEFAULT_DIM_CAP {
                Err(schema(format!("dimension must lie in 1..={}", crate::toeplitz::DEFAULT_DIM_CAP)))
            } else {
                Ok(())
            }
        };
        let verdict_ok = |v: &VerdictSpec| -> Result<()> {
            v.rate.validate()?;
            if v.window.start == 0 || v.window.end < v.window.start {
                return Err(schema("window must satisfy 1 <= start <= end"));
            }
            if !(v.spread >= 1.0) {
                return Err(schema("spread must be at least 1"));
            }
            Ok(())
        };
        match self {
            ExperimentConfig::Spectrum { measure, dimension, verdict, .. } => {
                measure.validate()?;
                positive_dim(*dimension)?;
                verdict.as_ref().map(verdict_ok).transpose()?;
            }
            ExperimentConfig::Rearrange { measure, lattice, verdict } => {
                measure.validate()?;
                lattice.validate()?;
                verdict.as_ref().map(verdict_ok).transpose()?;
            }
            ExperimentConfig::BerezinSample { measure, lattice, .. } => {
                measure.validate()?;
                lattice.validate()?;
            }
            ExperimentConfig::CpProfile { lattice, p, depth, .. } => {
                lattice.validate()?;
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(schema("p must lie in (0, 1)"));
                }
                if *depth == 0 || *depth > 14 {
                    return Err(schema("depth must lie in 1..=14"));
                }
            }
            ExperimentConfig::TraceSandwich { measure, lattice, h, dimension, .. } => {
                measure.validate()?;
                lattice.validate()?;
                h.validate()?;
                positive_dim(*dimension)?;
            }
            ExperimentConfig::ComposeGram { symbol, space, dimension, .. } => {
                symbol.validate()?;
                positive_dim(*dimension)?;
                if let CompositionSpace::Weighted { alpha } = space {
                    if !(*alpha > 0.0) {
                        return Err(schema("alpha must be positive"));
                    }
                }
            }
            ExperimentConfig::ComposePredict { profile, alpha, n_min, n_max, points } => {
                profile.validate()?;
                if !(*alpha > 0.0) {
                    return Err(schema("alpha must be positive"));
                }
                if !(*n_min >= 1.0 && n_max >= n_min) || *points < 2 {
                    return Err(schema("need 1 <= n_min <= n_max and at least two points"));
                }
            }
            ExperimentConfig::Pullback { symbol, first_level, last_level, walks } => {
                symbol.validate()?;
                if *first_level == 0 || first_level > last_level || *last_level > 20 {
                    return Err(schema("need 1 <= first_level <= last_level <= 20"));
                }
                if matches!(symbol, SymbolSpec::UnivalentPolar { .. }) && walks.is_none() {
                    return Err(schema("a univalent-polar symbol needs walk parameters"));
                }
                walks.as_ref().map(|w| w.config().validate()).transpose()?;
            }
            ExperimentConfig::Wos { level, walks, .. } => {
                if *level > 20 {
                    return Err(schema("level must be at most 20"));
                }
                walks.config().validate()?;
            }
            ExperimentConfig::Esthar { level, walks, .. } => {
                if *level == 0 || *level > 10 {
                    return Err(schema("esthar level must lie in 1..=10"));
                }
                walks.config().validate()?;
            }
            ExperimentConfig::Verdict { values, csv, spec, .. } => {
                if values.is_some() == csv.is_some() {
                    return Err(schema("give exactly one of values or csv"));
                }
                verdict_ok(spec)?;
            }
        }
        Ok(())
    }

    fn walk_params_mut(&mut self) -> Option<&mut WalkParams> {
        match self {
            ExperimentConfig::Wos { walks, .. } | ExperimentConfig::Esthar { walks, .. } => Some(walks),
            ExperimentConfig::Pullback { walks, .. } => walks.as_mut(),
            _ => None,
        }
    }

    /// Replaces the Monte Carlo seed, if the experiment has one.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(w) = self.walk_params_mut() {
            w.seed = seed;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ExperimentConfig::Wos { walks, .. } | ExperimentConfig::Esthar { walks, .. } => Some(walks.seed),
            ExperimentConfig::Pullback { walks, .. } => walks.map(|w| w.seed),
            _ => None,
        }
    }
}

/// Reads the config file, applies the seed override from the environment and runs it.
pub fn run_file(config: &Path, out_dir: &Path) -> Result<(RunReport, PathBuf)> {
    let text = std::fs::read_to_string(config).map_err(schema)?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Ok(s) = std::env::var(SEED_ENV) {
        let seed = s.trim().parse::<u64>().map_err(|e| schema(format!("{SEED_ENV}: {e}")))?;
        cfg.override_seed(seed);
    }
    run(&cfg, out_dir)
}

/// Runs one experiment, writing its tables and report.json into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunReport, PathBuf)> {
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    log::info!("running {}", cfg.name());
    let mut outputs = Vec::new();
    let verdicts = dispatch(cfg, out_dir, &mut outputs)?;
    let report = RunReport {
        experiment: cfg.name().to_string(),
        inputs: serde_json::to_value(cfg)?,
        outputs,
        verdicts,
        wall_time_s: started.elapsed().as_secs_f64(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let path = out_dir.join("report.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &report)?;
    log::info!("wrote {}", path.display());
    Ok((report, path))
}

fn create(out_dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

fn write_rows(out: BufWriter<File>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn judge(ln_a: &[f64], spec: &VerdictSpec) -> Result<Value> {
    let burn_in = spec.burn_in.unwrap_or(DEFAULT_BURN_IN);
    let v = verdict_ln(ln_a, &spec.rate, spec.window, spec.spread, burn_in)?;
    let mut j = v.to_json();
    j["observed_spread"] = json!(v.observed_spread());
    Ok(j)
}

fn dispatch(cfg: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<Value> {
    match cfg {
        ExperimentConfig::Spectrum { space, measure, dimension, verdict } => {
            let spec = toeplitz_spectrum(space, measure, *dimension)?;
            write_spectrum_csv(&spec, create(out, "spectrum.csv", outputs)?)?;
            let mut v = json!({
                "assembly_error_bound": spec.assembly_error_bound,
                "clipped": spec.clipped,
                "truncation_dim": spec.truncation_dim,
            });
            if let Some(vs) = verdict {
                let ln: Vec<f64> = match &spec.ln_eigenvalues {
                    Some(l) => l.clone(),
                    None => spec.eigenvalues.iter().map(|x| x.ln()).collect(),
                };
                v["verdict"] = judge(&ln, vs)?;
            }
            Ok(v)
        }
        ExperimentConfig::Rearrange { measure, lattice, verdict } => {
            let cells = enumerate_cells(lattice)?;
            let table = CellMassTable::compute(measure, &cells)?;
            table.write_csv(create(out, "cells.csv", outputs)?)?;
            let seq = rearrangement(&table);
            write_rows(
                create(out, "rearranged.csv", outputs)?,
                &["n", "a_n"],
                seq.values.iter().enumerate().map(|(i, a)| vec![(i + 1).to_string(), format!("{a:e}")]),
            )?;
            let mut v = json!({ "cells": cells.len(), "tail_bound": seq.tail_bound });
            if let Some(vs) = verdict {
                v["verdict"] = judge(&seq.ln_values, vs)?;
            }
            Ok(v)
        }
        ExperimentConfig::BerezinSample { space, measure, lattice, rearranged } => {
            let samples = if *rearranged {
                sample_rearranged(space, measure, lattice)?
            } else {
                sample_centers(space, measure, lattice)?
            };
            write_samples_csv(&samples, create(out, "berezin.csv", outputs)?)?;
            Ok(json!({ "samples": samples.len() }))
        }
        ExperimentConfig::CpProfile { space, lattice, p, depth } => {
            let prof = cp_constant(space, lattice, *p, *depth)?;
            write_rows(
                create(out, "cp_profile.csv", outputs)?,
                &["depth", "partial_sup"],
                prof.growth_profile.iter().map(|(d, s)| vec![d.to_string(), format!("{s:e}")]),
            )?;
            Ok(json!({ "class": prof.class, "ratios": prof.ratios, "partial_sup": prof.partial_sup }))
        }
        ExperimentConfig::TraceSandwich { space, measure, lattice, h, dimension } => {
            let r = verify_trace_sandwich(space, measure, lattice, h, *dimension)?;
            Ok(serde_json::to_value(r)?)
        }
        ExperimentConfig::ComposeGram { symbol, space, dimension, reduction } => {
            let g = gram_singular_values(symbol, *space, *dimension)?;
            let red = match (reduction, space) {
                (true, CompositionSpace::Weighted { alpha }) => {
                    Some(toeplitz_reduction_singular_values(symbol, *alpha, *dimension)?)
                }
                (true, CompositionSpace::Hardy) => {
                    return Err(BslError::InvalidParameter(
                        "the Toeplitz reduction needs a weighted space".into(),
                    ))
                }
                _ => None,
            };
            let rows = g.singular_values.iter().enumerate().map(|(i, s)| {
                let mut row = vec![(i + 1).to_string(), format!("{s:e}")];
                if let Some(r) = &red {
                    row.push(format!("{:e}", r.singular_values.get(i).copied().unwrap_or(f64::NAN)));
                }
                row
            });
            let header: &[&str] = if red.is_some() { &["n", "s_n", "s_n_reduction"] } else { &["n", "s_n"] };
            write_rows(create(out, "singular_values.csv", outputs)?, header, rows)?;
            let max_rel = red.as_ref().map(|r| {
                g.singular_values
                    .iter()
                    .zip(&r.singular_values)
                    .filter(|(a, _)| **a > 0.0)
                    .map(|(a, b)| ((a * a - b * b) / (a * a)).abs())
                    .fold(0.0, f64::max)
            });
            Ok(json!({ "note": g.note, "max_relative_gap_squared": max_rel }))
        }
        ExperimentConfig::ComposePredict { profile, alpha, n_min, n_max, points } => {
            let (l0, l1) = (n_min.ln(), n_max.ln());
            let mut rows = Vec::with_capacity(*points);
            let mut branch = None;
            let mut unverified = false;
            for k in 0..*points {
                let n = (l0 + (l1 - l0) * k as f64 / (*points - 1) as f64).exp();
                let p = predict_singular_values(profile, *alpha, n)?;
                branch = Some(p.branch);
                unverified |= p.unverified;
                if let Some(v) = p.value {
                    rows.push((n, v));
                }
            }
            write_prediction_csv(&rows, create(out, "prediction.csv", outputs)?)?;
            Ok(json!({ "branch": branch, "unverified_hypothesis": unverified, "rows": rows.len() }))
        }
        ExperimentConfig::Pullback { symbol, first_level, last_level, walks } => {
            let table = match symbol {
                SymbolSpec::UnivalentPolar { profile, cap_angle } => {
                    let domain = DomainSpec::Polar { profile: profile.clone(), cap_angle: *cap_angle }.build()?;
                    let cfg = walks.expect("validated").config();
                    let sample = exit_sample(&domain, Complex64::new(0.0, 0.0), &cfg)?;
                    pullback_wos(&sample, *first_level, *last_level)?
                }
                _ => {
                    let (sym, note) = symbol.normalized()?;
                    if let Some(n) = note {
                        log::info!("{n}");
                    }
                    pullback_boundary_levels(&sym, *first_level, *last_level)?
                }
            };
            table.write_csv(create(out, "pullback.csv", outputs)?)?;
            let m = table.rearranged();
            write_rows(
                create(out, "pullback_rearranged.csv", outputs)?,
                &["n", "m_n"],
                m.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), format!("{v:e}")]),
            )?;
            Ok(json!({ "method": table.method.as_str(), "boxes": table.entries.len() }))
        }
        ExperimentConfig::Wos { domain, start, level, walks } => {
            let dom = domain.build()?;
            let z = start.unwrap_or(Complex64::new(0.0, 0.0));
            let sample = exit_sample(&dom, z, &walks.config())?;
            let est = sample.box_estimates(*level);
            write_rows(
                create(out, "wos.csv", outputs)?,
                &["n", "j", "estimate", "stderr"],
                est.iter().map(|e| {
                    vec![e.level.to_string(), e.index.to_string(), format!("{:e}", e.estimate), format!("{:e}", e.stderr)]
                }),
            )?;
            let total: f64 = est.iter().map(|e| e.estimate).sum();
            let agg: f64 = est.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
            Ok(json!({ "capped": sample.capped, "level_total": total, "aggregate_stderr": agg }))
        }
        ExperimentConfig::Esthar { domain, level, walks } => {
            let dom = domain.build()?;
            let report = esthar_compare(&dom, *level, &walks.config())?;
            report.write_csv(create(out, "esthar.csv", outputs)?)?;
            Ok(json!({
                "j_limit": report.j_limit,
                "fitted_c": report.fitted_c,
                "fit_index": report.fit_index,
                "eta": report.eta,
                "upper_holds": report.upper_holds,
                "cardinality_holds": report.cardinality_holds,
                "blocks": report.blocks,
                "disc": matches!(dom, WosDomain::UnitDisc),
            }))
        }
        ExperimentConfig::Verdict { values, csv, column, spec } => {
            let a = match (values, csv) {
                (Some(v), _) => v.clone(),
                (None, Some(path)) => read_column(path, column.as_deref())?,
                _ => unreachable!("validated"),
            };
            let ln: Vec<f64> = a.iter().map(|x| x.ln()).collect();
            let v = verdict_ln(&ln, &spec.rate, spec.window, spec.spread, spec.burn_in.unwrap_or(DEFAULT_BURN_IN))?;
            write_rows(
                create(out, "verdict.csv", outputs)?,
                &["n", "ratio"],
                v.ratio_profile
                    .iter()
                    .enumerate()
                    .map(|(i, r)| vec![(spec.window.start + i).to_string(), format!("{r:e}")]),
            )?;
            let mut j = v.to_json();
            j["observed_spread"] = json!(v.observed_spread());
            Ok(j)
        }
    }
}

/// Reads a numeric column (by header name, default: the last column).
fn read_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let idx = match column {
        Some(c) => headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| schema(format!("column {c} not found in {}", path.display())))?,
        None => headers.len().checked_sub(1).ok_or_else(|| schema("empty header"))?,
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = rec.get(idx).ok_or_else(|| schema("short row"))?;
        out.push(field.trim().parse::<f64>().map_err(|e| schema(format!("{field}: {e}")))?);
    }
    Ok(out)
}

/// Lattice cell listing, used by the CLI for inspection.
pub fn write_lattice(params: &LatticeParams, out: &Path) -> Result<()> {
    let cells = enumerate_cells(params)?;
    write_cells_csv(&cells, BufWriter::new(File::create(out)?))
}
