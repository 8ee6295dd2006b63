//! Executes the study named by an [`ExperimentSpec`] and fills a [`Bundle`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rib_core::data::{gaussian_mixture, split, LabeledDataset, Standardizer};
use rib_core::eval::{
    default_mu_grid, estimate_fcmi, gap_report, gaussian_roc_curve, lemma1_numeric, measure_recognizability,
    probe_representations, roc_conditions_check, theorem1_gaussian_check, FcmiEstimate, FcmiFit, FcmiJob,
    FcmiProtocol, GapReport, Lemma1Result, ProbeConfig, ProbeResult, RocConditions, Theorem1Row, BOUND_CONSTANT,
};
use rib_core::rng::derive_seed;
use rib_core::train::{train, train_with_observer, EpochSnapshot, Objective, RunRecord, TrainConfig, TrainData};

use crate::bundle::{Bundle, Manifest, Status};
use crate::error::{CliError, CliResult};
use crate::spec::{Command, DatasetSpec, ExperimentSpec};

/// Salt separating synthetic data draws from every other use of a run seed.
const DATA_SALT: u64 = 0xDA7A;

/// Header of `dynamics_<run>.csv`.
pub const DYNAMICS_CSV_HEADER: &str = "epoch,train_err,test_err,gap,recognizability";
pub const SWEEP_CSV_HEADER: &str = "run,seed,objective,beta,train_err,test_err,gap";

/// Result of [`run`]: the manifest written and where.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl StudyOutcome {
    /// True iff every run completed and every hard check passed.
    pub fn success(&self) -> bool {
        self.manifest.status == Status::Complete
    }
}

/// Validates `spec`, runs its study into `out_dir`, and writes the manifest.
///
/// A spec that fails validation is rejected before anything is written. A
/// run failure still produces a manifest, flagged partial.
pub fn run(spec: &ExperimentSpec, out_dir: &Path) -> CliResult<StudyOutcome> {
    let diagnostics = spec.validate();
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    let command = spec.command.expect("validated");
    let mut bundle = Bundle::create(out_dir)?;
    bundle.write_json("spec.json", "spec", spec)?;
    let result = match command {
        Command::Train => run_train(spec, &mut bundle),
        Command::SweepBeta => run_sweep(spec, &mut bundle),
        Command::EstimateFcmi => run_fcmi(spec, &mut bundle),
        Command::GapStudy => run_gap(spec, &mut bundle),
        Command::VerifyTheory => run_theory(spec, &mut bundle),
        Command::Dynamics => run_dynamics(spec, &mut bundle),
    };
    let error = result.err().map(|e| e.to_string());
    let manifest = bundle.finish(&command.to_string(), &spec.digest(), spec.seed, error)?;
    Ok(StudyOutcome {
        dir: out_dir.to_path_buf(),
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// Loads (IDX) or draws (synthetic) a pool of at least `rows` rows.
fn pool(spec: &ExperimentSpec, rows: usize, seed: u64) -> CliResult<LabeledDataset> {
    let ds = match &spec.dataset {
        DatasetSpec::GaussianMixture(m) => gaussian_mixture(&m.generator(rows), derive_seed(seed, DATA_SALT))?,
        DatasetSpec::Idx(_) => spec.load_idx()?.expect("idx dataset"),
    };
    if ds.len() < rows {
        return Err(rib_core::Error::Input(format!("dataset has {} rows, the study needs {rows}", ds.len())).into());
    }
    Ok(ds)
}

/// Standardizes every set with statistics of `fit_on` when the spec asks.
fn standardize(spec: &ExperimentSpec, fit_on: &LabeledDataset, sets: &[&LabeledDataset]) -> CliResult<Vec<LabeledDataset>> {
    if !spec.split.standardize {
        return Ok(sets.iter().map(|s| (*s).clone()).collect());
    }
    let scaler = Standardizer::fit(fit_on.features())?;
    sets.iter()
        .map(|s| scaler.apply_dataset(s).map_err(CliError::from))
        .collect()
}

struct Splits {
    train: LabeledDataset,
    ghost: LabeledDataset,
    test: LabeledDataset,
}

fn splits(spec: &ExperimentSpec, seed: u64) -> CliResult<Splits> {
    let s = &spec.split;
    let sizes = [s.n_train, s.ghost_len(), s.n_test];
    let pool = pool(spec, sizes.iter().sum(), seed)?;
    let mut parts = split(&pool, &sizes, seed)?.into_iter();
    let (train, ghost, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
    let mut scaled = standardize(spec, &train, &[&train, &ghost, &test])?.into_iter();
    Ok(Splits {
        train: scaled.next().unwrap(),
        ghost: scaled.next().unwrap(),
        test: scaled.next().unwrap(),
    })
}

/// Aligned `(training, ghost)` rows for probing: the first `min` rows of each.
fn probe_partners(train: &LabeledDataset, ghost: &LabeledDataset) -> (LabeledDataset, LabeledDataset) {
    let idx: Vec<usize> = (0..train.len().min(ghost.len())).collect();
    (train.take_rows(&idx), ghost.take_rows(&idx))
}

fn with_seed(probe: &ProbeConfig, seed: u64) -> ProbeConfig {
    ProbeConfig { seed, ..probe.clone() }
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> CliResult<R> + Sync) -> CliResult<Vec<R>> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| rib_core::Error::Config(format!("thread pool: {e}")))?
        .install(|| items.par_iter().map(|x| f(x)).collect())
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

fn emit_run(bundle: &mut Bundle, record: &RunRecord, probe: Option<&ProbeResult>) -> CliResult<()> {
    let id = &record.run_id;
    bundle.write(&format!("metrics_{id}.csv"), "metrics", record.metrics_csv())?;
    bundle.write_json(&format!("run_{id}.json"), "run", record)?;
    if let Some(p) = probe {
        bundle.write(&format!("roc_{id}.csv"), "roc", p.report.curve.to_csv())?;
        bundle.write(&format!("region_{id}.csv"), "region", p.report.region.to_csv())?;
    }
    Ok(())
}

/// Recognizability of the encoder at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub epoch: usize,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub gap: Option<f64>,
    pub recognizability: f64,
}

pub fn dynamics_csv(rows: &[DynamicsRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!("{DYNAMICS_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.train_err,
            opt(r.test_err),
            opt(r.gap),
            r.recognizability
        ));
    }
    out
}

/// Observer probing the encoder every `every` epochs (1-based).
fn dynamics_observer<'a>(
    every: usize,
    probe: &'a ProbeConfig,
    train_x: &'a LabeledDataset,
    partner_x: &'a LabeledDataset,
    rows: &'a mut Vec<DynamicsRow>,
) -> impl FnMut(&EpochSnapshot<'_>) -> rib_core::Result<()> + 'a {
    move |snap| {
        let epoch = snap.epoch + 1;
        if epoch % every != 0 {
            return Ok(());
        }
        let p = measure_recognizability(snap.encoder, snap.head, train_x.features(), partner_x.features(), probe)?;
        let m = snap.metrics;
        rows.push(DynamicsRow {
            epoch,
            train_err: m.train_err,
            test_err: m.test_err,
            gap: m.test_err.map(|t| t - m.train_err),
            recognizability: p.report.recognizability,
        });
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct ProbedRun {
    record: RunRecord,
    probe: Option<ProbeResult>,
    dynamics: Vec<DynamicsRow>,
}

fn run_train(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let seeds = spec.run_seeds();
    let runs = par_map(spec.jobs, &seeds, |&seed| {
        let d = splits(spec, seed)?;
        let ghost = d.ghost.to_ghost();
        let cfg = TrainConfig { seed, ..spec.train.clone() };
        let out = train(&cfg, TrainData { train: &d.train, ghost: Some(&ghost), test: Some(&d.test) })?;
        let mut record = out.record;
        record.run_id = format!("{}_s{seed}", spec.name);
        let probe = if spec.probe_final {
            let (a, b) = probe_partners(&d.train, &d.ghost);
            let p = measure_recognizability(&out.encoder, &out.head, a.features(), b.features(), &with_seed(&spec.probe, seed))?;
            record.final_metrics.recognizability = Some(p.report.recognizability);
            Some(p)
        } else {
            None
        };
        Ok(ProbedRun { record, probe, dynamics: Vec::new() })
    })?;
    for r in &runs {
        emit_run(bundle, &r.record, r.probe.as_ref())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-beta
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArm {
    pub objective: Objective,
    pub beta: f64,
    /// Test error per seed, in seed order.
    pub test_errs: Vec<f64>,
    pub mean_test_err: f64,
    /// Seeds on which this arm's test error is strictly below the baseline's.
    pub wins_vs_ce: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub ce: SweepArm,
    pub rib: Vec<SweepArm>,
    /// Regularized arm with the lowest mean test error.
    pub best: SweepArm,
}

fn run_sweep(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let seeds = spec.run_seeds();
    let rib_objective = match spec.train.objective {
        Objective::RibAdv => Objective::RibAdv,
        _ => Objective::Rib,
    };
    let mut arms: Vec<(Objective, f64)> = vec![(Objective::Ce, 0.0)];
    arms.extend(spec.sweep.betas.iter().map(|&b| (rib_objective, b)));
    let units: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..arms.len()).map(move |a| (s, a)))
        .collect();
    let records = par_map(spec.jobs, &units, |&(seed, arm)| {
        let (objective, beta) = arms[arm];
        let d = splits(spec, seed)?;
        let ghost = d.ghost.to_ghost();
        let cfg = TrainConfig { seed, objective, beta, ..spec.train.clone() };
        let mut record = train(&cfg, TrainData { train: &d.train, ghost: Some(&ghost), test: Some(&d.test) })?.record;
        record.run_id = match objective {
            Objective::Ce | Objective::CeL2 => format!("{}_s{seed}_ce", spec.name),
            _ => format!("{}_s{seed}_b{beta}", spec.name),
        };
        Ok(record)
    })?;

    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for r in &records {
        emit_run(bundle, r, None)?;
        let f = &r.final_metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run_id,
            r.seed,
            r.objective,
            r.beta,
            f.train_err,
            f.test_err.unwrap_or(f64::NAN),
            f.gap.unwrap_or(f64::NAN)
        ));
    }
    bundle.write("sweep.csv", "sweep", csv)?;

    let per_arm = |a: usize| -> Vec<f64> {
        records
            .iter()
            .zip(&units)
            .filter(|(_, u)| u.1 == a)
            .map(|(r, _)| r.final_metrics.test_err.unwrap_or(f64::NAN))
            .collect()
    };
    let ce_errs = per_arm(0);
    let summarize = |a: usize| {
        let errs = per_arm(a);
        SweepArm {
            objective: arms[a].0,
            beta: arms[a].1,
            mean_test_err: errs.iter().sum::<f64>() / errs.len() as f64,
            wins_vs_ce: errs.iter().zip(&ce_errs).filter(|(x, c)| x < c).count(),
            test_errs: errs,
        }
    };
    let rib: Vec<SweepArm> = (1..arms.len()).map(summarize).collect();
    let best = rib
        .iter()
        .min_by(|a, b| a.mean_test_err.total_cmp(&b.mean_test_err))
        .cloned()
        .expect("non-empty grid");
    let ce = summarize(0);
    bundle.check(
        "best_beta_beats_ce",
        best.mean_test_err < ce.mean_test_err,
        false,
        format!(
            "beta {}: mean test error {:.4} vs {:.4}, {} of {} seeds better",
            best.beta,
            best.mean_test_err,
            ce.mean_test_err,
            best.wins_vs_ce,
            seeds.len()
        ),
    );
    bundle.write_json("sweep_summary.json", "sweep_summary", &SweepSummary { seeds, ce, rib, best })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate-fcmi
// ---------------------------------------------------------------------------

/// Standardized copies of a unit's sets, fitted on its training rows.
fn scaled_unit(spec: &ExperimentSpec, job: &FcmiJob<'_>, test: Option<&LabeledDataset>) -> CliResult<UnitSets> {
    let mut sets = vec![&job.train, &job.held_out, &job.supersample.left, &job.supersample.right];
    sets.extend(test);
    let mut scaled = standardize(spec, &job.train, &sets)?.into_iter();
    Ok(UnitSets {
        train: scaled.next().unwrap(),
        held_out: scaled.next().unwrap(),
        left: scaled.next().unwrap(),
        right: scaled.next().unwrap(),
        test: scaled.next(),
    })
}

struct UnitSets {
    train: LabeledDataset,
    held_out: LabeledDataset,
    left: LabeledDataset,
    right: LabeledDataset,
    test: Option<LabeledDataset>,
}

struct UnitExtras {
    probe: Option<ProbeResult>,
    dynamics: Vec<DynamicsRow>,
}

/// Runs one protocol unit: training, slot predictions and, when `probe` is
/// given, recognizability of training rows against their held-out partners.
fn protocol_unit(
    spec: &ExperimentSpec,
    job: &FcmiJob<'_>,
    test: Option<&LabeledDataset>,
    probe: Option<&ProbeConfig>,
    probe_pairs: usize,
    dynamics_every: Option<usize>,
) -> CliResult<(FcmiFit, UnitExtras)> {
    let d = scaled_unit(spec, job, test)?;
    // Probes see the first `probe_pairs` pairs only; in a nested study every
    // size shares them.
    let probe_pairs = probe_pairs.min(job.train.len());
    let (probe_train, probe_held_out) = {
        let idx: Vec<usize> = (0..probe_pairs).collect();
        (d.train.take_rows(&idx), d.held_out.take_rows(&idx))
    };
    let ghost = d.held_out.to_ghost();
    let cfg = TrainConfig { seed: job.seed, ..spec.train.clone() };
    let data = TrainData { train: &d.train, ghost: Some(&ghost), test: d.test.as_ref() };
    let mut dynamics = Vec::new();
    let dyn_probe = with_seed(&spec.dynamics.probe, job.seed);
    let out = match dynamics_every {
        Some(every) => {
            let mut obs = dynamics_observer(every, &dyn_probe, &probe_train, &probe_held_out, &mut dynamics);
            train_with_observer(&cfg, data, &mut obs)?
        }
        None => train(&cfg, data)?,
    };
    let left = out.head.predict_labels(&out.encoder.encode(d.left.features())?)?;
    let right = out.head.predict_labels(&out.encoder.encode(d.right.features())?)?;
    let mut record = out.record;
    let probe = match probe {
        Some(p) => {
            let r = measure_recognizability(
                &out.encoder,
                &out.head,
                probe_train.features(),
                probe_held_out.features(),
                &with_seed(p, job.seed),
            )?;
            record.final_metrics.recognizability = Some(r.report.recognizability);
            Some(r)
        }
        None => None,
    };
    let fit = FcmiFit { left, right, record: Some(record) };
    Ok((fit, UnitExtras { probe, dynamics }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FcmiReport {
    estimate: FcmiEstimate,
    /// Selector bits per supersample and draw, as 0/1 strings.
    selectors: Vec<Vec<String>>,
}

fn fcmi_csv(estimate: &FcmiEstimate) -> String {
    let mut out = String::from("supersample,mi\n");
    for (s, mi) in estimate.per_supersample.iter().enumerate() {
        out.push_str(&format!("{s},{mi}\n"));
    }
    out
}

fn run_fcmi(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let f = &spec.fcmi;
    let rows = match spec.dataset {
        DatasetSpec::GaussianMixture(_) => 2 * f.n * f.k1,
        DatasetSpec::Idx(_) => 2 * f.n,
    };
    let pool = pool(spec, rows, spec.seed)?;
    let protocol = FcmiProtocol { k1: f.k1, k2: f.k2, n: f.n, seed: spec.seed };
    let outcome = estimate_fcmi(&pool, &protocol, spec.jobs, |job| {
        protocol_unit(spec, job, None, None, 0, None)
            .map(|(fit, _)| fit)
            .map_err(into_core)
    })?;
    for (s, fits) in outcome.fits.iter().enumerate() {
        for (d, fit) in fits.iter().enumerate() {
            let mut record = fit.record.clone().expect("set by protocol_unit");
            record.run_id = format!("{}_s{s}_d{d}", spec.name);
            emit_run(bundle, &record, None)?;
        }
    }
    bundle.write("fcmi.csv", "fcmi", fcmi_csv(&outcome.estimate))?;
    let selectors = outcome
        .selectors
        .iter()
        .map(|masks| {
            masks
                .iter()
                .map(|m| m.bits.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect()
        })
        .collect();
    bundle.write_json("fcmi.json", "fcmi_json", &FcmiReport { estimate: outcome.estimate, selectors })?;
    Ok(())
}

/// Protocol closures must return core errors; keep CLI errors readable.
fn into_core(e: CliError) -> rib_core::Error {
    match e {
        CliError::Core(c) => c,
        other => rib_core::Error::Input(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// gap-study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub run_id: String,
    pub recognizability: f64,
    pub fcmi: f64,
    /// `fcmi + 1 − ln 2`.
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    pub report: GapReport,
    pub fcmi: BTreeMap<usize, FcmiEstimate>,
    pub bound_checks: Vec<BoundCheck>,
    /// Mean gap per size, in size order.
    pub mean_gap: BTreeMap<usize, f64>,
}

fn run_gap(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let g = &spec.gap;
    let max_n = *g.sizes.iter().max().expect("validated");
    let min_n = *g.sizes.iter().min().expect("validated");
    let all = pool(spec, 2 * max_n + spec.split.n_test, spec.seed)?;
    let mut parts = split(&all, &[2 * max_n, spec.split.n_test], spec.seed)?.into_iter();
    let (supersample_pool, test) = (parts.next().unwrap(), parts.next().unwrap());

    let mut records = Vec::new();
    let mut fcmi = BTreeMap::new();
    let mut bound_checks = Vec::new();
    let mut mean_gap = BTreeMap::new();
    for &n in &g.sizes {
        // The same seed for every size makes the pairs and selector bits of
        // smaller supersamples prefixes of larger ones.
        let protocol = FcmiProtocol { k1: 1, k2: g.draws, n, seed: spec.seed };
        let extras: Mutex<BTreeMap<usize, UnitExtras>> = Mutex::new(BTreeMap::new());
        let outcome = estimate_fcmi(&supersample_pool, &protocol, spec.jobs, |job| {
            let (fit, extra) = protocol_unit(spec, job, Some(&test), Some(&spec.probe), min_n, g.dynamics_every)
                .map_err(into_core)?;
            extras.lock().expect("not poisoned").insert(job.draw_index, extra);
            Ok(fit)
        })?;
        let mut extras = extras.into_inner().expect("not poisoned");
        let mi = outcome.estimate.mean_mi;
        let mut gaps = Vec::new();
        for (d, fit) in outcome.fits[0].iter().enumerate() {
            let mut record = fit.record.clone().expect("set by protocol_unit");
            record.run_id = format!("{}_n{n}_d{d}", spec.name);
            record.final_metrics.fcmi = Some(mi);
            let extra = extras.remove(&d).expect("one entry per draw");
            emit_run(bundle, &record, extra.probe.as_ref())?;
            if g.dynamics_every.is_some() {
                bundle.write(&format!("dynamics_{}.csv", record.run_id), "dynamics", dynamics_csv(&extra.dynamics))?;
            }
            let rec = record.final_metrics.recognizability.expect("probed");
            let limit = mi + BOUND_CONSTANT;
            bound_checks.push(BoundCheck {
                run_id: record.run_id.clone(),
                recognizability: rec,
                fcmi: mi,
                limit,
                pass: (0.0..=limit).contains(&rec),
            });
            gaps.extend(record.final_metrics.gap);
            records.push(record);
        }
        mean_gap.insert(n, gaps.iter().sum::<f64>() / gaps.len().max(1) as f64);
        fcmi.insert(n, outcome.estimate);
    }
    let report = gap_report(&records);
    bundle.write("gap.csv", "gap", report.to_csv())?;

    let failed: Vec<&str> = bound_checks.iter().filter(|c| !c.pass).map(|c| c.run_id.as_str()).collect();
    bundle.check(
        "recognizability_within_fcmi_bound",
        failed.is_empty(),
        false,
        if failed.is_empty() { "all runs".into() } else { format!("outside: {}", failed.join(", ")) },
    );
    let gaps: Vec<f64> = mean_gap.values().copied().collect();
    bundle.check(
        "gap_non_increasing_in_n",
        gaps.windows(2).all(|w| w[1] <= w[0]),
        false,
        format!("mean gap per size {mean_gap:?}"),
    );
    bundle.check(
        "spearman_recognizability_gap",
        report.spearman.is_some_and(|s| s >= 0.6),
        false,
        format!("spearman {:?}", report.spearman),
    );
    bundle.write_json("gap.json", "gap_json", &GapStudy { report, fcmi, bound_checks, mean_gap })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

fn run_dynamics(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let seeds = spec.run_seeds();
    let runs = par_map(spec.jobs, &seeds, |&seed| {
        let d = splits(spec, seed)?;
        let ghost = d.ghost.to_ghost();
        let (a, b) = probe_partners(&d.train, &d.ghost);
        let cfg = TrainConfig { seed, ..spec.train.clone() };
        let dyn_probe = with_seed(&spec.dynamics.probe, seed);
        let mut dynamics = Vec::new();
        let out = {
            let mut obs = dynamics_observer(spec.dynamics.every, &dyn_probe, &a, &b, &mut dynamics);
            let data = TrainData { train: &d.train, ghost: Some(&ghost), test: Some(&d.test) };
            train_with_observer(&cfg, data, &mut obs)?
        };
        let mut record = out.record;
        record.run_id = format!("{}_s{seed}", spec.name);
        let p = measure_recognizability(&out.encoder, &out.head, a.features(), b.features(), &with_seed(&spec.probe, seed))?;
        record.final_metrics.recognizability = Some(p.report.recognizability);
        Ok(ProbedRun { record, probe: Some(p), dynamics })
    })?;
    for r in &runs {
        emit_run(bundle, &r.record, r.probe.as_ref())?;
        bundle.write(&format!("dynamics_{}.csv", r.record.run_id), "dynamics", dynamics_csv(&r.dynamics))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify-theory
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub theorem1: Vec<Theorem1Row>,
    pub theorem1_pass: bool,
    pub lemma1: Vec<Lemma1Result>,
    pub lemma1_pass: bool,
    pub gaussian_roc: RocConditions,
    pub gaussian_roc_pass: bool,
    /// Conditions on the convex hull of a trained critic's empirical curve.
    pub empirical_hull: RocConditions,
    pub empirical_hull_pass: bool,
    pub empirical_recognizability: f64,
}

/// Seed of the synthetic scores behind the empirical hull check.
const HULL_SEED: u64 = 11;

fn empirical_hull(seed: u64) -> CliResult<(RocConditions, f64)> {
    // Representations from two shifted Gaussians give a critic something
    // to find; its hull must satisfy the conditions exactly.
    let shift = |mean: f64, s: u64| -> CliResult<LabeledDataset> {
        let spec = rib_core::data::GaussianMixtureSpec {
            dim: 3,
            num_classes: 1,
            means: vec![vec![mean; 3]],
            covariance_scale: 1.0,
            n: 400,
            label_noise_rate: 0.0,
        };
        Ok(gaussian_mixture(&spec, s)?)
    };
    let (a, b) = (shift(1.0, seed)?, shift(-1.0, seed + 1)?);
    let cfg = ProbeConfig { max_pairs: 400, epochs: 30, seed, ..ProbeConfig::default() };
    let p = probe_representations(a.features(), b.features(), &cfg)?;
    Ok((roc_conditions_check(&p.report.curve.convex_hull()), p.report.recognizability))
}

fn run_theory(spec: &ExperimentSpec, bundle: &mut Bundle) -> CliResult<()> {
    let t = &spec.theory;
    let grid: Vec<f64> = if t.mu_step == 0.1 && t.mu_max == 10.0 {
        default_mu_grid()
    } else {
        let steps = (t.mu_max / t.mu_step).round() as usize;
        (0..=steps).map(|i| i as f64 * t.mu_step).collect()
    };
    let theorem1 = theorem1_gaussian_check(&grid)?;
    let theorem1_pass = theorem1.iter().all(|r| r.pass);
    let lemma1 = t
        .lemma_mus
        .iter()
        .map(|&mu| lemma1_numeric(mu, t.grid_size))
        .collect::<rib_core::Result<Vec<_>>>()?;
    let lemma1_pass = lemma1.iter().all(|r| r.abs_err <= t.lemma_tolerance);
    let curve = gaussian_roc_curve(t.roc_mu, t.roc_points)?;
    let gaussian_roc = roc_conditions_check(&curve);
    let gaussian_roc_pass = gaussian_roc.all_pass(0.0);
    let (empirical_hull, empirical_recognizability) = empirical_hull(derive_seed(spec.seed, HULL_SEED))?;
    let empirical_hull_pass = empirical_hull.all_pass(0.0);

    bundle.check("theorem1_gaussian", theorem1_pass, true, format!("{} grid points", theorem1.len()));
    bundle.check(
        "lemma1_identity",
        lemma1_pass,
        true,
        lemma1
            .iter()
            .map(|r| format!("mu {}: err {:.2e}", r.mu, r.abs_err))
            .collect::<Vec<_>>()
            .join("; "),
    );
    bundle.check("roc_conditions_gaussian", gaussian_roc_pass, true, format!("{gaussian_roc:?}"));
    bundle.check("roc_conditions_empirical_hull", empirical_hull_pass, true, format!("{empirical_hull:?}"));
    bundle.write("roc_gaussian.csv", "roc", curve.to_csv())?;
    bundle.write_json(
        "theory.json",
        "theory",
        &TheoryReport {
            theorem1,
            theorem1_pass,
            lemma1,
            lemma1_pass,
            gaussian_roc,
            gaussian_roc_pass,
            empirical_hull,
            empirical_hull_pass,
            empirical_recognizability,
        },
    )?;
    Ok(())
}
