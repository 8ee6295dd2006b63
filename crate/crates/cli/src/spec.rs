//! Experiment specification: one JSON document, every field defaulted,
//! unknown fields rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rib_core::data::{load_idx, GaussianMixtureSpec};
use rib_core::eval::ProbeConfig;
use rib_core::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// Env var naming the default output root.
pub const OUT_DIR_ENV: &str = "RIB_OUT_DIR";
/// Output root when neither the spec, the flag, nor the env var names one.
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    SweepBeta,
    EstimateFcmi,
    GapStudy,
    VerifyTheory,
    Dynamics,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Train => "train",
            Command::SweepBeta => "sweep-beta",
            Command::EstimateFcmi => "estimate-fcmi",
            Command::GapStudy => "gap-study",
            Command::VerifyTheory => "verify-theory",
            Command::Dynamics => "dynamics",
        })
    }
}

/// How class means of a synthetic mixture are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanLayout {
    /// Two classes at `±separation/2` along the first `informative` axes.
    #[default]
    TwoClass,
    /// Coordinates uniform in `[−separation, separation)`, seeded by
    /// `means_seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub layout: MeanLayout,
    pub separation: f64,
    /// Axes carrying the class signal (`two_class` layout); defaults to `dim`.
    pub informative: Option<usize>,
    pub means_seed: u64,
    pub label_noise_rate: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            dim: 20,
            num_classes: 2,
            layout: MeanLayout::TwoClass,
            separation: 2.0,
            informative: None,
            means_seed: 4242,
            label_noise_rate: 0.15,
        }
    }
}

impl MixtureSpec {
    pub fn generator(&self, n: usize) -> GaussianMixtureSpec {
        match self.layout {
            MeanLayout::TwoClass => GaussianMixtureSpec::two_class(
                self.dim,
                self.informative.unwrap_or(self.dim),
                self.separation,
                n,
                self.label_noise_rate,
            ),
            MeanLayout::Random => GaussianMixtureSpec::random_means(
                self.dim,
                self.num_classes,
                self.separation,
                self.means_seed,
                n,
                self.label_noise_rate,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    GaussianMixture(MixtureSpec),
    Idx(IdxSpec),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::GaussianMixture(MixtureSpec::default())
    }
}

/// Sizes of the disjoint train / ghost / test splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub n_train: usize,
    /// Defaults to `n_train`.
    pub n_ghost: Option<usize>,
    pub n_test: usize,
    /// Standardize features with training-set statistics.
    pub standardize: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_ghost: None,
            n_test: 2000,
            standardize: true,
        }
    }
}

impl SplitSpec {
    pub fn ghost_len(&self) -> usize {
        self.n_ghost.unwrap_or(self.n_train)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            betas: vec![0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcmiSpec {
    pub k1: usize,
    pub k2: usize,
    pub n: usize,
}

impl Default for FcmiSpec {
    fn default() -> Self {
        Self { k1: 5, k2: 5, n: 1250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSpec {
    pub sizes: Vec<usize>,
    /// Selector draws (trainings) per size.
    pub draws: usize,
    /// Also record recognizability every this many epochs.
    pub dynamics_every: Option<usize>,
}

impl Default for GapSpec {
    fn default() -> Self {
        Self {
            sizes: vec![200, 800, 3200],
            draws: 5,
            dynamics_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSpec {
    pub every: usize,
    /// Probe used at intermediate epochs; the final epoch uses `probe`.
    pub probe: ProbeConfig,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        Self {
            every: 5,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySpec {
    pub mu_max: f64,
    pub mu_step: f64,
    pub lemma_mus: Vec<f64>,
    pub grid_size: usize,
    pub lemma_tolerance: f64,
    pub roc_mu: f64,
    pub roc_points: usize,
}

impl Default for TheorySpec {
    fn default() -> Self {
        Self {
            mu_max: 10.0,
            mu_step: 0.1,
            lemma_mus: vec![0.5, 1.0, 2.0],
            grid_size: 100_000,
            lemma_tolerance: 1e-3,
            roc_mu: 1.0,
            roc_points: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// May be left out when the subcommand names the study.
    pub command: Option<Command>,
    /// Prefix of run identifiers.
    pub name: String,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub train: TrainConfig,
    /// Base seed; run `r` of a study uses `seed + r`.
    pub seed: u64,
    pub repeats: usize,
    /// Measure recognizability of finished `train` runs.
    pub probe_final: bool,
    pub probe: ProbeConfig,
    pub sweep: SweepSpec,
    pub fcmi: FcmiSpec,
    pub gap: GapSpec,
    pub dynamics: DynamicsSpec,
    pub theory: TheorySpec,
    pub out_dir: Option<PathBuf>,
    /// Concurrent independent runs.
    pub jobs: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            command: None,
            name: "exp".into(),
            dataset: DatasetSpec::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            seed: 0,
            repeats: 1,
            probe_final: true,
            probe: ProbeConfig::default(),
            sweep: SweepSpec::default(),
            fcmi: FcmiSpec::default(),
            gap: GapSpec::default(),
            dynamics: DynamicsSpec::default(),
            theory: TheorySpec::default(),
            out_dir: None,
            jobs: 1,
        }
    }
}

/// A problem found by [`ExperimentSpec::validate`], located by field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut spec = Self::from_json(&text)?;
        // Relative dataset paths are relative to the spec file.
        if let (DatasetSpec::Idx(idx), Some(base)) = (&mut spec.dataset, path.parent()) {
            for p in [&mut idx.images, &mut idx.labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    /// Digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::bundle::sha256_hex(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    /// Seeds of the repeated runs.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    /// Schema and cross-field checks; never touches the output directory.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |path: &str, message: String| {
            out.push(Diagnostic {
                path: path.into(),
                message,
            })
        };
        let Some(command) = self.command else {
            push("command", "no study named (set `command` or use a subcommand)".into());
            return out;
        };
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            push("name", format!("{:?} must be non-empty ASCII letters, digits, '-', '_' or '.'", self.name));
        }
        if self.jobs == 0 {
            push("jobs", "must be at least 1".into());
        }
        if self.repeats == 0 {
            push("repeats", "must be at least 1".into());
        }
        if command == Command::VerifyTheory {
            self.validate_theory(&mut push);
            return out;
        }

        match &self.dataset {
            DatasetSpec::GaussianMixture(m) => {
                if m.dim == 0 {
                    push("dataset.dim", "must be positive".into());
                }
                if m.num_classes < 2 {
                    push("dataset.num_classes", "need at least two classes".into());
                }
                if m.layout == MeanLayout::TwoClass && m.num_classes != 2 {
                    push("dataset.layout", "two_class layout needs num_classes = 2".into());
                }
                if !(0.0..=1.0).contains(&m.label_noise_rate) {
                    push("dataset.label_noise_rate", format!("{} is outside [0, 1]", m.label_noise_rate));
                }
                if !m.separation.is_finite() {
                    push("dataset.separation", "must be finite".into());
                }
            }
            DatasetSpec::Idx(idx) => {
                for (field, path) in [("dataset.images", &idx.images), ("dataset.labels", &idx.labels)] {
                    if !path.is_file() {
                        push(field, format!("file {} does not exist", path.display()));
                    }
                }
            }
        }
        if let Err(e) = self.train.validate() {
            push("train", e.to_string());
        }
        if self.train.beta < 0.0 {
            push("train.beta", format!("{} is negative", self.train.beta));
        }
        for (field, len) in [
            ("split.n_train", self.split.n_train),
            ("split.n_ghost", self.split.ghost_len()),
            ("split.n_test", self.split.n_test),
        ] {
            if len == 0 {
                push(field, "must be positive".into());
            }
        }
        let probing = match command {
            Command::Train => self.probe_final,
            Command::GapStudy | Command::Dynamics => true,
            _ => false,
        };
        if probing {
            if let Err(e) = self.probe.validate() {
                push("probe", e.to_string());
            }
        }
        match command {
            Command::SweepBeta => {
                if self.sweep.betas.is_empty() {
                    push("sweep.betas", "grid is empty".into());
                }
                if let Some(b) = self.sweep.betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
                    push("sweep.betas", format!("{b} is not a finite non-negative value"));
                }
            }
            Command::EstimateFcmi => {
                if self.fcmi.k1 == 0 || self.fcmi.k2 == 0 || self.fcmi.n == 0 {
                    push("fcmi", "k1, k2 and n must be positive".into());
                }
            }
            Command::GapStudy => {
                if self.gap.sizes.is_empty() || self.gap.sizes.contains(&0) {
                    push("gap.sizes", "need at least one positive size".into());
                }
                if self.gap.draws == 0 {
                    push("gap.draws", "must be at least 1".into());
                }
                if self.gap.dynamics_every == Some(0) {
                    push("gap.dynamics_every", "must be at least 1".into());
                }
                if self.gap.dynamics_every.is_some() {
                    if let Err(e) = self.dynamics.probe.validate() {
                        push("dynamics.probe", e.to_string());
                    }
                }
            }
            Command::Dynamics => {
                if self.dynamics.every == 0 {
                    push("dynamics.every", "must be at least 1".into());
                }
                if let Err(e) = self.dynamics.probe.validate() {
                    push("dynamics.probe", e.to_string());
                }
            }
            Command::Train | Command::VerifyTheory => {}
        }
        out
    }

    fn validate_theory(&self, push: &mut impl FnMut(&str, String)) {
        let t = &self.theory;
        if !(t.mu_step > 0.0) || !(t.mu_max >= 0.0) || !t.mu_max.is_finite() {
            push("theory", "mu_step must be positive and mu_max finite and non-negative".into());
        }
        if let Some(mu) = t.lemma_mus.iter().find(|m| !(**m > 0.0)) {
            push("theory.lemma_mus", format!("{mu} is not positive"));
        }
        if t.grid_size < 1000 {
            push("theory.grid_size", format!("{} is below 1000", t.grid_size));
        }
        if t.roc_points < 2 {
            push("theory.roc_points", "need at least two points".into());
        }
    }

    /// Resolves the output directory: explicit override, then the spec,
    /// then the environment, then [`DEFAULT_OUT_DIR`].
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Loads an IDX corpus named by the spec.
    pub fn load_idx(&self) -> CliResult<Option<rib_core::data::LabeledDataset>> {
        match &self.dataset {
            DatasetSpec::Idx(idx) => Ok(Some(load_idx(&idx.images, &idx.labels)?)),
            DatasetSpec::GaussianMixture(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> ExperimentSpec {
        ExperimentSpec::from_json(json).unwrap()
    }

    #[test]
    fn idx_paths_resolve_against_spec_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(
            &path,
            r#"{"dataset": {"kind": "idx", "images": "d/img", "labels": "/abs/lbl"}}"#,
        )
        .unwrap();
        let DatasetSpec::Idx(idx) = ExperimentSpec::from_file(&path).unwrap().dataset else {
            panic!("idx dataset expected");
        };
        assert_eq!(idx.images, dir.path().join("d/img"));
        assert_eq!(idx.labels, PathBuf::from("/abs/lbl"));
    }

    #[test]
    fn valid_spec_has_no_diagnostics() {
        assert!(spec(r#"{"command": "train"}"#).validate().is_empty());
        assert!(spec(r#"{"command": "verify-theory"}"#).validate().is_empty());
    }

    #[test]
    fn missing_dataset_file_names_the_field() {
        let s = spec(
            r#"{"command": "train", "dataset": {"kind": "idx", "images": "/nonexistent/i", "labels": "/nonexistent/l"}}"#,
        );
        let d = s.validate();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].path, "dataset.images");
        assert_eq!(d[1].path, "dataset.labels");
    }

    #[test]
    fn negative_beta_is_a_range_diagnostic() {
        let d = spec(r#"{"command": "train", "train": {"beta": -1.0}}"#).validate();
        assert!(d.iter().any(|d| d.path == "train.beta"), "{d:?}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentSpec::from_json(r#"{"command": "train", "bogus": 1}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"train": {"lr": 1}}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"dataset": {"kind": "gaussian_mixture", "dims": 3}}"#).is_err());
    }

    #[test]
    fn command_is_required() {
        let d = ExperimentSpec::default().validate();
        assert_eq!(d[0].path, "command");
    }

    #[test]
    fn out_dir_precedence() {
        let s = ExperimentSpec {
            out_dir: Some("from_spec".into()),
            ..ExperimentSpec::default()
        };
        assert_eq!(s.resolve_out_dir(Some(Path::new("flag"))), PathBuf::from("flag"));
        assert_eq!(s.resolve_out_dir(None), PathBuf::from("from_spec"));
    }

    #[test]
    fn seeds_are_consecutive() {
        let s = ExperimentSpec {
            seed: 7,
            repeats: 3,
            ..ExperimentSpec::default()
        };
        assert_eq!(s.run_seeds(), vec![7, 8, 9]);
    }
}
