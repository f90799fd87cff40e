use std::fs;
use std::path::{Path, PathBuf};

use reveal_core::dataset::CollectConfig;
use reveal_core::labels::{LabelConfig, VineRule};
use reveal_core::model::{Ablation, TrainConfig};
use reveal_core::planner::{CemConfig, EpisodeConfig, Policy, RevealFrom};
use reveal_core::sim::{Scenario, SimConfig};
use reveal_core::space::{ActionSpace, PlantKind};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OfflineAp,
    SingleAction,
    LongHorizon,
    Targeted,
    Growth,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OfflineAp => "offline-ap",
            ExperimentKind::SingleAction => "single-action",
            ExperimentKind::LongHorizon => "long-horizon",
            ExperimentKind::Targeted => "targeted",
            ExperimentKind::Growth => "growth",
        }
    }
}

/// A plant kind together with a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    VineBase,
    SparseVines,
    SeparatedVines,
    DracaenaBase,
    GrownDracaena,
}

impl Setting {
    pub const LONG_HORIZON: [Setting; 4] = [
        Setting::VineBase,
        Setting::SparseVines,
        Setting::SeparatedVines,
        Setting::DracaenaBase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::VineBase => "vine-base",
            Setting::SparseVines => "sparse-vines",
            Setting::SeparatedVines => "separated-vines",
            Setting::DracaenaBase => "dracaena-base",
            Setting::GrownDracaena => "grown-dracaena",
        }
    }

    pub fn kind(self) -> PlantKind {
        match self {
            Setting::VineBase | Setting::SparseVines | Setting::SeparatedVines => PlantKind::Vine,
            Setting::DracaenaBase | Setting::GrownDracaena => PlantKind::Dracaena,
        }
    }

    pub fn scenario(self) -> Scenario {
        match self {
            Setting::VineBase | Setting::DracaenaBase => Scenario::Base,
            Setting::SparseVines => Scenario::SparseVines,
            Setting::SeparatedVines => Scenario::SeparatedVines,
            Setting::GrownDracaena => Scenario::GrownDracaena,
        }
    }

    pub fn sim_config(self) -> SimConfig {
        SimConfig::for_kind(self.kind(), self.scenario())
    }

    pub fn space(self) -> ActionSpace {
        ActionSpace::for_kind(self.kind())
    }
}

/// Columns of the offline AP table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApDataset {
    /// Seeing the board counts as revealed.
    VinesAll,
    /// A 5 cm height drop counts as revealed.
    #[serde(rename = "vines-5cm")]
    Vines5cm,
    Dracaena,
}

impl ApDataset {
    pub fn name(self) -> &'static str {
        match self {
            ApDataset::VinesAll => "vines-all",
            ApDataset::Vines5cm => "vines-5cm",
            ApDataset::Dracaena => "dracaena",
        }
    }

    pub fn setting(self) -> Setting {
        match self {
            ApDataset::VinesAll | ApDataset::Vines5cm => Setting::VineBase,
            ApDataset::Dracaena => Setting::DracaenaBase,
        }
    }

    pub fn vine_rule(self) -> VineRule {
        match self {
            ApDataset::Vines5cm => VineRule::Height5cm,
            _ => VineRule::BoardColor,
        }
    }
}

/// Rows of the offline AP table: input and augmentation ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApRow {
    Full,
    NoAction,
    NoHeight,
    NoRgb,
    Blind,
    NoFlip,
    NoColor,
}

impl ApRow {
    pub const ALL: [ApRow; 7] = [
        ApRow::Full,
        ApRow::NoAction,
        ApRow::NoHeight,
        ApRow::NoRgb,
        ApRow::Blind,
        ApRow::NoFlip,
        ApRow::NoColor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ApRow::NoFlip => "no-flip",
            ApRow::NoColor => "no-color",
            r => r.ablation().name(),
        }
    }

    pub fn ablation(self) -> Ablation {
        match self {
            ApRow::NoAction => Ablation::NoAction,
            ApRow::NoHeight => Ablation::NoHeight,
            ApRow::NoRgb => Ablation::NoRgb,
            ApRow::Blind => Ablation::Blind,
            ApRow::Full | ApRow::NoFlip | ApRow::NoColor => Ablation::Full,
        }
    }

    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            flip: base.flip && self != ApRow::NoFlip,
            color: base.color && self != ApRow::NoColor,
            ..base.clone()
        }
    }
}

/// Trained parameter files. Learned policies need the entry for their
/// plant kind; the blind policy needs the `*_blind` entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checkpoints {
    pub vine: Option<PathBuf>,
    pub vine_blind: Option<PathBuf>,
    pub dracaena: Option<PathBuf>,
    pub dracaena_blind: Option<PathBuf>,
}

impl Checkpoints {
    pub fn get(&self, kind: PlantKind, blind: bool) -> Option<&PathBuf> {
        match (kind, blind) {
            (PlantKind::Vine, false) => self.vine.as_ref(),
            (PlantKind::Vine, true) => self.vine_blind.as_ref(),
            (PlantKind::Dracaena, false) => self.dracaena.as_ref(),
            (PlantKind::Dracaena, true) => self.dracaena_blind.as_ref(),
        }
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 4] {
        [&mut self.vine, &mut self.vine_blind, &mut self.dracaena, &mut self.dracaena_blind]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Existing dataset directory, for `train` and `eval-ap`.
    pub path: Option<PathBuf>,
    pub samples: usize,
    pub collect: CollectConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            samples: 2000,
            collect: CollectConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSection {
    pub datasets: Vec<ApDataset>,
    pub rows: Vec<ApRow>,
}

impl Default for OfflineSection {
    fn default() -> Self {
        Self {
            datasets: vec![ApDataset::VinesAll, ApDataset::Vines5cm, ApDataset::Dracaena],
            rows: ApRow::ALL.to_vec(),
        }
    }
}

pub const MIN_SINGLE_ACTION_TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    /// Plant setting for collect, episode, single-action and targeted runs.
    pub setting: Setting,
    /// Settings swept by the long-horizon experiment.
    pub settings: Vec<Setting>,
    /// Trials per method; the default depends on the experiment.
    pub trials: Option<usize>,
    pub steps: usize,
    /// Policies to compare; the default depends on the experiment.
    pub policies: Option<Vec<Policy>>,
    pub checkpoints: Checkpoints,
    pub target: Option<PathBuf>,
    pub reveal_from: RevealFrom,
    pub resamples: usize,
    pub confidence: f64,
    pub dataset: DatasetSection,
    pub offline: OfflineSection,
    pub train: TrainConfig,
    pub cem: CemConfig,
    pub labels: LabelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            setting: Setting::VineBase,
            settings: Setting::LONG_HORIZON.to_vec(),
            trials: None,
            steps: 10,
            policies: None,
            checkpoints: Checkpoints::default(),
            target: None,
            reveal_from: RevealFrom::Oracle,
            resamples: crate::stats::BOOTSTRAP_RESAMPLES,
            confidence: 0.95,
            dataset: DatasetSection::default(),
            offline: OfflineSection::default(),
            train: TrainConfig::default(),
            cem: CemConfig::default(),
            labels: LabelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| input(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        for p in cfg.checkpoints.paths_mut() {
            resolve(p);
        }
        resolve(&mut cfg.target);
        resolve(&mut cfg.dataset.path);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == Some(0) {
            return Err(input("trials must be at least 1"));
        }
        if matches!(self.experiment, Some(ExperimentKind::SingleAction | ExperimentKind::Growth))
            && self.trials.is_some_and(|t| t < MIN_SINGLE_ACTION_TRIALS)
        {
            return Err(input(format!(
                "single-action protocols need at least {MIN_SINGLE_ACTION_TRIALS} trials per method"
            )));
        }
        if self.resamples == 0 || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(input("bootstrap needs resamples >= 1 and confidence in (0, 1)"));
        }
        if self.settings.is_empty() {
            return Err(input("settings must not be empty"));
        }
        if self.policies.as_ref().is_some_and(|p| p.is_empty()) {
            return Err(input("policies must not be empty"));
        }
        if self.experiment == Some(ExperimentKind::Targeted) && self.policies.as_ref().is_some_and(|p| p.contains(&Policy::Tiling)) {
            return Err(input("targeted runs compare planner variants only; tiling is not allowed"));
        }
        if self.offline.datasets.is_empty() || self.offline.rows.is_empty() {
            return Err(input("offline section needs datasets and rows"));
        }
        self.cem.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    pub fn policies_or(&self, default: &[Policy]) -> Vec<Policy> {
        self.policies.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            cem: self.cem.clone(),
            reveal_from: self.reveal_from,
            labels: self.labels.clone(),
            vine_rule: VineRule::BoardColor,
        }
    }
}
