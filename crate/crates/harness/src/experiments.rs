//! Seeded evaluation protocols. Every function here is a pure function of
//! its configuration, models and master seed; trials run in parallel and
//! are gathered in trial order.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use reveal_core::baselines::restricted_random;
use reveal_core::dataset::{collect_samples, split, CollectConfig, Dataset, Sample, Split};
use reveal_core::grid::Grid2D;
use reveal_core::labels::visible_background;
use reveal_core::model::{
    evaluate_ap, load_params, save_params, train, Ablation, ArchConfig, ModelParams, TrainHistory,
};
use reveal_core::planner::{
    cem_select, nominal_center, realized_reveal, run_episode, targeted_init, EpisodeConfig, EpisodeTrace,
    HandcraftedPredictor, ModelPredictor, Policy, RevealFrom, RevealPredictor,
};
use reveal_core::rng::Rng;
use reveal_core::sim::{apply_push, render, sim_init, PlantState};
use reveal_core::space::{ActionSpace, ActionSpec, CoverageMap, PlantKind};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ApDataset, ApRow, ExperimentConfig, ExperimentKind, Setting, MIN_SINGLE_ACTION_TRIALS};
use crate::error::{input, Result};
use crate::stats::{bootstrap_ci, mean, paired_bootstrap_ci, Interval};
use crate::svg::{LinePlot, Series};
use crate::table::{fmt_f, Table};

pub const ORACLE_NOTE: &str = "online reveal areas are measured with the simulator's ground-truth reveal, \
not the image-based label extractors used for training data";

/// Trained parameters keyed by plant kind and whether the model is blind.
#[derive(Debug, Clone, Default)]
pub struct Models {
    entries: Vec<(PlantKind, bool, ModelParams)>,
}

impl Models {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kind: PlantKind, blind: bool, params: ModelParams) -> Result<()> {
        let space = ActionSpace::for_kind(kind);
        let expect = ArchConfig::new(&space, params.arch.ablation);
        if params.arch.input_size != expect.input_size || params.arch.action_dim != expect.action_dim {
            return Err(input(format!("model does not fit the {kind:?} action space")));
        }
        if blind != (params.arch.ablation == Ablation::Blind) {
            return Err(input("blind slot and model ablation disagree"));
        }
        self.entries.retain(|(k, b, _)| !(*k == kind && *b == blind));
        self.entries.push((kind, blind, params));
        Ok(())
    }

    pub fn get(&self, kind: PlantKind, blind: bool) -> Result<&ModelParams> {
        self.entries
            .iter()
            .find(|(k, b, _)| *k == kind && *b == blind)
            .map(|e| &e.2)
            .ok_or_else(|| {
                input(format!(
                    "no {}model checkpoint configured for {kind:?}",
                    if blind { "blind " } else { "" }
                ))
            })
    }

    /// Loads whatever `policies` need for plants of `kinds`.
    pub fn load(cfg: &ExperimentConfig, kinds: &[PlantKind], policies: &[Policy]) -> Result<Self> {
        let mut m = Self::new();
        for &kind in kinds {
            for blind in [false, true] {
                let needed = policies.contains(if blind { &Policy::BlindPpg } else { &Policy::Ppg });
                if !needed || m.get(kind, blind).is_ok() {
                    continue;
                }
                let path = cfg.checkpoints.get(kind, blind).ok_or_else(|| {
                    input(format!(
                        "policy needs a {}checkpoint for {kind:?}",
                        if blind { "blind " } else { "" }
                    ))
                })?;
                if !path.is_file() {
                    return Err(input(format!("checkpoint {} does not exist", path.display())));
                }
                m.insert(kind, blind, load_params(path)?)?;
            }
        }
        Ok(m)
    }
}

fn predictor<'a>(policy: Policy, kind: PlantKind, models: &'a Models) -> Result<Option<Box<dyn RevealPredictor + 'a>>> {
    Ok(match policy {
        Policy::Ppg => Some(Box::new(ModelPredictor(models.get(kind, false)?))),
        Policy::BlindPpg => Some(Box::new(ModelPredictor(models.get(kind, true)?))),
        Policy::HandcraftedPpg => Some(Box::new(HandcraftedPredictor {
            center: nominal_center(&ActionSpace::for_kind(kind)),
        })),
        Policy::Tiling => None,
    })
}

/// Per-trial stream; shared by every method so comparisons are paired.
pub fn trial_rng(master: &Rng, setting: Setting, trial: usize) -> Rng {
    master.substream(setting.name()).fork(trial as u64)
}

pub fn trial_plant(setting: Setting, rng: &Rng) -> Result<PlantState> {
    Ok(sim_init(&setting.sim_config(), &mut rng.substream("plant"))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta<'a> {
    pub experiment: &'a str,
    pub seed: u64,
    pub reveal_from: RevealFrom,
    pub note: Option<&'a str>,
    pub config: &'a ExperimentConfig,
}

pub fn write_meta(out: &Path, experiment: &str, seed: u64, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    let meta = Meta {
        experiment,
        seed,
        reveal_from: cfg.reveal_from,
        note: (cfg.reveal_from == RevealFrom::Oracle).then_some(ORACLE_NOTE),
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| input(e.to_string()))?;
    fs::write(out.join("meta.json"), text + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------- offline AP

#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub dataset: ApDataset,
    pub row: ApRow,
    pub test_ap: f64,
    pub params: ModelParams,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct OfflineResult {
    pub table: Table,
    pub runs: Vec<OfflineRun>,
    pub datasets: Vec<(ApDataset, Dataset)>,
}

impl OfflineResult {
    pub fn run(&self, dataset: ApDataset, row: ApRow) -> Option<&OfflineRun> {
        self.runs.iter().find(|r| r.dataset == dataset && r.row == row)
    }

    pub fn dataset(&self, which: ApDataset) -> Option<&Dataset> {
        self.datasets.iter().find(|(d, _)| *d == which).map(|(_, d)| d)
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out.join("checkpoints"))?;
        self.table.write(&out.join("offline_ap.csv"))?;
        let mut hist = Table::new(&["dataset", "model", "epoch", "train_loss", "val_ap", "best"]);
        for r in &self.runs {
            save_params(&r.params, &out.join("checkpoints").join(format!("{}-{}.ckpt", r.dataset.name(), r.row.name())))?;
            for e in &r.history.epochs {
                hist.push(vec![
                    r.dataset.name().into(),
                    r.row.name().into(),
                    e.epoch.to_string(),
                    fmt_f(e.train_loss),
                    fmt_f(e.val_ap),
                    (e.epoch == r.history.best_epoch).to_string(),
                ])?;
            }
        }
        hist.write(&out.join("training_history.csv"))
    }
}

/// Collects and splits one offline dataset. The two vine labelings share
/// the same interactions.
pub fn build_dataset(which: ApDataset, n: usize, collect: &CollectConfig, seed: u64) -> Result<Dataset> {
    let master = Rng::new(seed);
    let setting = which.setting();
    let cc = CollectConfig {
        vine_rule: which.vine_rule(),
        ..collect.clone()
    };
    let collected = collect_samples(
        &setting.sim_config(),
        &setting.space(),
        n,
        &master.substream("collect").substream(setting.name()),
        &cc,
    )?;
    let mut ds = Dataset::from_collected(collected);
    ds.manifest = split(&ds.manifest, &mut master.substream("split").substream(setting.name()))?;
    Ok(ds)
}

pub fn train_row(row: ApRow, ds: &Dataset, space: &ActionSpace, cfg: &ExperimentConfig, seed: u64) -> Result<(ModelParams, TrainHistory)> {
    let master = Rng::new(seed);
    let arch = ArchConfig::new(space, row.ablation());
    let p0 = ModelParams::init(&arch, &mut master.substream("init").substream(row.ablation().name()))?;
    let tc = reveal_core::model::TrainConfig {
        seed: master.substream("train").seed(),
        ..row.train_config(&cfg.train)
    };
    Ok(train(&p0, &ds.split_samples(Split::Train), &ds.split_samples(Split::Val), space, &tc)?)
}

pub fn run_offline_ap(cfg: &ExperimentConfig, seed: u64) -> Result<OfflineResult> {
    let datasets: Vec<(ApDataset, Dataset)> = cfg
        .offline
        .datasets
        .iter()
        .map(|&d| Ok((d, build_dataset(d, cfg.dataset.samples, &cfg.dataset.collect, seed)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, ApRow)> = (0..datasets.len())
        .flat_map(|i| cfg.offline.rows.iter().map(move |&r| (i, r)))
        .collect();
    let runs: Vec<OfflineRun> = jobs
        .into_par_iter()
        .map(|(i, row)| {
            let (which, ds) = &datasets[i];
            let space = which.setting().space();
            let (params, history) = train_row(row, ds, &space, cfg, seed)?;
            let test_ap = evaluate_ap(&params, &ds.split_samples(Split::Test))?;
            Ok(OfflineRun {
                dataset: *which,
                row,
                test_ap,
                params,
                history,
            })
        })
        .collect::<Result<_>>()?;
    let mut header = vec!["model"];
    header.extend(cfg.offline.datasets.iter().map(|d| d.name()));
    let mut table = Table::new(&header);
    for &row in &cfg.offline.rows {
        let mut cells = vec![row.name().to_string()];
        for &d in &cfg.offline.datasets {
            let r = runs.iter().find(|r| r.dataset == d && r.row == row).expect("every job ran");
            cells.push(fmt_f(r.test_ap));
        }
        table.push(cells)?;
    }
    Ok(OfflineResult { table, runs, datasets })
}

// ------------------------------------------------------- dataset statistics

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionStats {
    pub theta: Vec<f64>,
    pub count: Vec<usize>,
    pub mean_reveal: Vec<f64>,
}

impl DirectionStats {
    /// Direction indices whose mean reveal is maximal.
    pub fn argmax(&self) -> Vec<usize> {
        let best = self.mean_reveal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.theta.len()).filter(|&i| self.mean_reveal[i] == best).collect()
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&["direction", "theta", "samples", "mean_reveal"]);
        for i in 0..self.theta.len() {
            t.push(vec![i.to_string(), fmt_f(self.theta[i]), self.count[i].to_string(), fmt_f(self.mean_reveal[i])])?;
        }
        Ok(t)
    }
}

/// Mean labeled reveal area per push direction.
pub fn reveal_by_direction(samples: &[&Sample], space: &ActionSpace) -> DirectionStats {
    let n = space.directions.len();
    let (mut count, mut total) = (vec![0usize; n], vec![0.0f64; n]);
    for s in samples {
        count[s.action.dir_index] += 1;
        total[s.action.dir_index] += s.label.count_true() as f64;
    }
    DirectionStats {
        theta: space.directions.clone(),
        mean_reveal: total.iter().zip(&count).map(|(t, &c)| if c == 0 { f64::NAN } else { t / c as f64 }).collect(),
        count,
    }
}

/// Labeled reveal of one strong-direction push and one uniformly drawn push
/// from each of `n` fresh plants.
pub fn strong_vs_uniform(setting: Setting, n: usize, cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let space = setting.space();
    let center = nominal_center(&space);
    let all = space.all_actions();
    let ep = EpisodeConfig {
        reveal_from: RevealFrom::Labels,
        ..cfg.episode_config()
    };
    let master = Rng::new(seed).substream("action-stats");
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rng = trial_rng(&master, setting, i);
            let state = trial_plant(setting, &rng)?;
            let strong = restricted_random(&space, center, &mut rng.substream("strong"))?;
            let uniform = all[rng.substream("uniform").gen_range(0..all.len())];
            let area = |a: &ActionSpec| -> Result<f64> {
                let next = apply_push(&state, a, &space, &mut rng.substream("sim"))?;
                let m = realized_reveal(&state, &next, &render(&state), &render(&next), &ep)?;
                Ok(m.count_true() as f64)
            };
            Ok((area(&strong)?, area(&uniform)?))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

// ------------------------------------------------------------ single action

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ppg,
    RestrictedRandom,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Ppg, Method::RestrictedRandom];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ppg => "ppg",
            Method::RestrictedRandom => "restricted-random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Position in the interleaved execution order.
    pub order: usize,
    pub trial: usize,
    pub method: Method,
    pub action: ActionSpec,
    pub predicted: Option<f64>,
    pub area: usize,
}

#[derive(Debug, Clone)]
pub struct SingleActionResult {
    pub setting: Setting,
    pub records: Vec<TrialRecord>,
    pub ppg: Vec<f64>,
    pub random: Vec<f64>,
    pub ppg_ci: Interval,
    pub random_ci: Interval,
    /// Paired difference ppg - restricted-random.
    pub diff_ci: Interval,
}

impl SingleActionResult {
    pub fn relative_improvement(&self) -> f64 {
        self.ppg_ci.mean / self.random_ci.mean - 1.0
    }

    pub fn trials_table(&self) -> Result<Table> {
        let mut t = Table::new(&["order", "trial", "method", "x", "y", "direction", "z", "length", "predicted", "area"]);
        for r in &self.records {
            t.push(vec![
                r.order.to_string(),
                r.trial.to_string(),
                r.method.name().into(),
                fmt_f(r.action.x),
                fmt_f(r.action.y),
                r.action.dir_index.to_string(),
                r.action.z_index.to_string(),
                fmt_f(r.action.length),
                r.predicted.map(fmt_f).unwrap_or_default(),
                r.area.to_string(),
            ])?;
        }
        Ok(t)
    }

    pub fn summary_table(&self) -> Result<Table> {
        let mut t = Table::new(&["setting", "method", "trials", "mean", "ci_low", "ci_high"]);
        let rows = [
            (Method::Ppg.name(), self.ppg.len(), self.ppg_ci),
            (Method::RestrictedRandom.name(), self.random.len(), self.random_ci),
            ("ppg-minus-restricted-random", self.ppg.len(), self.diff_ci),
        ];
        for (name, n, ci) in rows {
            t.push(vec![
                self.setting.name().into(),
                name.into(),
                n.to_string(),
                fmt_f(ci.mean),
                fmt_f(ci.low),
                fmt_f(ci.high),
            ])?;
        }
        Ok(t)
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out)?;
        self.trials_table()?.write(&out.join("trials.csv"))?;
        self.summary_table()?.write(&out.join("summary.csv"))
    }
}

fn single_trial(
    setting: Setting,
    method: Method,
    trial: usize,
    model: &ModelParams,
    cfg: &ExperimentConfig,
    master: &Rng,
) -> Result<(ActionSpec, Option<f64>, usize)> {
    let space = setting.space();
    let ep = cfg.episode_config();
    let rng = trial_rng(master, setting, trial);
    let state = trial_plant(setting, &rng)?;
    let obs = render(&state);
    let mut coverage = CoverageMap::from_mask(visible_background(&obs, setting.kind(), &cfg.labels));
    let (action, predicted) = match method {
        Method::Ppg => {
            let r = cem_select(&ModelPredictor(model), &obs, &coverage, &space, &cfg.cem, &mut rng.substream("planner"))?;
            (r.action, Some(r.score))
        }
        Method::RestrictedRandom => (
            restricted_random(&space, nominal_center(&space), &mut rng.substream("random"))?,
            None,
        ),
    };
    let next = apply_push(&state, &action, &space, &mut rng.substream("sim"))?;
    let revealed = realized_reveal(&state, &next, &obs, &render(&next), &ep)?;
    Ok((action, predicted, coverage.union(&revealed)?))
}

/// PPG against random strong-direction pushes, one push per fresh plant.
/// Method order is shuffled from the master seed alone.
pub fn run_single_action(cfg: &ExperimentConfig, setting: Setting, models: &Models, seed: u64) -> Result<SingleActionResult> {
    let trials = cfg.trials_or(MIN_SINGLE_ACTION_TRIALS);
    if trials < MIN_SINGLE_ACTION_TRIALS {
        return Err(input(format!("single-action runs need at least {MIN_SINGLE_ACTION_TRIALS} trials per method")));
    }
    let model = models.get(setting.kind(), false)?;
    let master = Rng::new(seed);
    let mut jobs: Vec<(usize, Method)> = (0..trials).flat_map(|t| Method::ALL.map(|m| (t, m))).collect();
    jobs.shuffle(&mut master.substream("interleave"));
    let outcomes: Vec<(ActionSpec, Option<f64>, usize)> = jobs
        .par_iter()
        .map(|&(t, m)| single_trial(setting, m, t, model, cfg, &master))
        .collect::<Result<_>>()?;
    let mut ppg = vec![0.0; trials];
    let mut random = vec![0.0; trials];
    let mut records = Vec::with_capacity(jobs.len());
    for (order, (&(trial, method), (action, predicted, area))) in jobs.iter().zip(outcomes).enumerate() {
        match method {
            Method::Ppg => ppg[trial] = area as f64,
            Method::RestrictedRandom => random[trial] = area as f64,
        }
        records.push(TrialRecord {
            order,
            trial,
            method,
            action,
            predicted,
            area,
        });
    }
    let boot = master.substream("bootstrap");
    Ok(SingleActionResult {
        setting,
        ppg_ci: bootstrap_ci(&ppg, cfg.resamples, cfg.confidence, &mut boot.substream("ppg")),
        random_ci: bootstrap_ci(&random, cfg.resamples, cfg.confidence, &mut boot.substream("random")),
        diff_ci: paired_bootstrap_ci(&ppg, &random, cfg.resamples, cfg.confidence, &mut boot.substream("paired")),
        ppg,
        random,
        records,
    })
}

// ------------------------------------------------------------------- growth

#[derive(Debug, Clone)]
pub struct GrowthResult {
    pub single: SingleActionResult,
    pub checkpoint_sha256: String,
}

impl GrowthResult {
    pub fn write(&self, out: &Path) -> Result<()> {
        self.single.write(out)?;
        fs::write(out.join("checkpoint.sha256"), format!("{}\n", self.checkpoint_sha256))?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Evaluates the configured Dracaena checkpoint on grown plants without
/// retraining; fails if the checkpoint file changes during the run.
pub fn run_growth(cfg: &ExperimentConfig, seed: u64) -> Result<GrowthResult> {
    let path = cfg
        .checkpoints
        .get(PlantKind::Dracaena, false)
        .ok_or_else(|| input("growth needs checkpoints.dracaena"))?;
    if !path.is_file() {
        return Err(input(format!("checkpoint {} does not exist", path.display())));
    }
    let before = sha256_file(path)?;
    let mut models = Models::new();
    models.insert(PlantKind::Dracaena, false, load_params(path)?)?;
    let single = run_single_action(cfg, Setting::GrownDracaena, &models, seed)?;
    let after = sha256_file(path)?;
    if before != after {
        return Err(input("checkpoint changed during the growth evaluation"));
    }
    Ok(GrowthResult {
        single,
        checkpoint_sha256: before,
    })
}

// ---------------------------------------------------------------- episodes

#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub setting: Setting,
    pub policy: Policy,
    pub trial: usize,
    pub trace: EpisodeTrace,
}

#[allow(clippy::too_many_arguments)]
fn run_matrix(
    settings: &[Setting],
    policies: &[Policy],
    trials: usize,
    steps: usize,
    initial: Option<&CoverageMap>,
    cfg: &ExperimentConfig,
    models: &Models,
    seed: u64,
) -> Result<Vec<EpisodeRun>> {
    let master = Rng::new(seed);
    let ep = cfg.episode_config();
    let jobs: Vec<(Setting, Policy, usize)> = settings
        .iter()
        .flat_map(|&s| policies.iter().flat_map(move |&p| (0..trials).map(move |t| (s, p, t))))
        .collect();
    jobs.into_par_iter()
        .map(|(setting, policy, trial)| {
            let rng = trial_rng(&master, setting, trial);
            let state = trial_plant(setting, &rng)?;
            let pred = predictor(policy, setting.kind(), models)?;
            let trace = run_episode(
                &state,
                &setting.space(),
                pred.as_deref(),
                policy,
                steps,
                initial.cloned(),
                &ep,
                &rng.substream("episode"),
            )?;
            Ok(EpisodeRun {
                setting,
                policy,
                trial,
                trace,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CurveSet {
    pub runs: Vec<EpisodeRun>,
    /// setting, policy, t, trials, mean, ci_low, ci_high.
    pub curves: Table,
    pub steps: usize,
}

impl CurveSet {
    fn build(runs: Vec<EpisodeRun>, settings: &[Setting], policies: &[Policy], steps: usize, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let boot = Rng::new(seed).substream("bootstrap");
        let mut curves = Table::new(&["setting", "policy", "t", "trials", "mean", "ci_low", "ci_high"]);
        for &s in settings {
            for &p in policies {
                let group: Vec<Vec<usize>> = runs
                    .iter()
                    .filter(|r| r.setting == s && r.policy == p)
                    .map(|r| r.trace.curve())
                    .collect();
                for t in 0..=steps {
                    let xs: Vec<f64> = group.iter().map(|c| c[t] as f64).collect();
                    let mut rng = boot.substream(s.name()).substream(p.name()).fork(t as u64);
                    let ci = bootstrap_ci(&xs, cfg.resamples, cfg.confidence, &mut rng);
                    curves.push(vec![
                        s.name().into(),
                        p.name().into(),
                        t.to_string(),
                        xs.len().to_string(),
                        fmt_f(ci.mean),
                        fmt_f(ci.low),
                        fmt_f(ci.high),
                    ])?;
                }
            }
        }
        Ok(Self { runs, curves, steps })
    }

    /// Cumulative reveal at the last step, one value per trial.
    pub fn finals(&self, setting: Setting, policy: Policy) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.setting == setting && r.policy == policy)
            .map(|r| r.trace.cumulative() as f64)
            .collect()
    }

    pub fn final_mean(&self, setting: Setting, policy: Policy) -> f64 {
        mean(&self.finals(setting, policy))
    }

    pub fn episodes_table(&self) -> Result<Table> {
        let mut t = Table::new(&["setting", "policy", "trial", "initial_area", "cumulative"]);
        for r in &self.runs {
            t.push(vec![
                r.setting.name().into(),
                r.policy.name().into(),
                r.trial.to_string(),
                r.trace.header.initial_area.to_string(),
                r.trace.cumulative().to_string(),
            ])?;
        }
        Ok(t)
    }

    pub fn plot(&self, setting: Setting, title: &str) -> LinePlot {
        let idx = |name: &str| self.curves.column(name).expect("curve column");
        let (si, pi, mi, lo, hi) = (idx("setting"), idx("policy"), idx("mean"), idx("ci_low"), idx("ci_high"));
        let mut series: Vec<Series> = Vec::new();
        for row in self.curves.rows.iter().filter(|r| r[si] == setting.name()) {
            if series.last().is_none_or(|s| s.name != row[pi]) {
                series.push(Series {
                    name: row[pi].clone(),
                    x: Vec::new(),
                    y: Vec::new(),
                    band: Some((Vec::new(), Vec::new())),
                });
            }
            let s = series.last_mut().expect("just pushed");
            let num = |i: usize| row[i].parse::<f64>().expect("formatted number");
            s.x.push(s.x.len() as f64);
            s.y.push(num(mi));
            let band = s.band.as_mut().expect("band");
            band.0.push(num(lo));
            band.1.push(num(hi));
        }
        LinePlot {
            title: title.into(),
            x_label: "step t".into(),
            y_label: "cumulative revealed cells".into(),
            series,
        }
    }

    pub fn write(&self, out: &Path, curves_file: &str, title: &str) -> Result<()> {
        fs::create_dir_all(out.join("traces"))?;
        self.curves.write(&out.join(curves_file))?;
        self.episodes_table()?.write(&out.join("episodes.csv"))?;
        let mut settings: Vec<Setting> = self.runs.iter().map(|r| r.setting).collect();
        settings.dedup();
        for s in settings {
            fs::write(out.join(format!("{}.svg", s.name())), self.plot(s, &format!("{title}: {}", s.name())).render())?;
        }
        for r in &self.runs {
            let name = format!("{}-{}-{:03}.jsonl", r.setting.name(), r.policy.name(), r.trial);
            fs::write(out.join("traces").join(name), r.trace.to_jsonl()?)?;
        }
        Ok(())
    }
}

pub const LONG_HORIZON_TRIALS: usize = 10;

pub fn run_long_horizon(cfg: &ExperimentConfig, models: &Models, seed: u64) -> Result<CurveSet> {
    let policies = cfg.policies_or(&Policy::ALL);
    let trials = cfg.trials_or(LONG_HORIZON_TRIALS);
    let runs = run_matrix(&cfg.settings, &policies, trials, cfg.steps, None, cfg, models, seed)?;
    CurveSet::build(runs, &cfg.settings, &policies, cfg.steps, cfg, seed)
}

pub const TARGETED_POLICIES: [Policy; 3] = [Policy::Ppg, Policy::HandcraftedPpg, Policy::BlindPpg];

/// Coverage starts as the complement of `target`, so every counted cell
/// lies inside it.
pub fn run_targeted(cfg: &ExperimentConfig, target: &Grid2D<bool>, models: &Models, seed: u64) -> Result<CurveSet> {
    let policies = cfg.policies_or(&TARGETED_POLICIES);
    if policies.contains(&Policy::Tiling) {
        return Err(input("targeted runs compare planner variants only"));
    }
    let space = cfg.setting.space();
    target.check_shape((space.grid_height, space.grid_width))?;
    let initial = targeted_init(target)?;
    let trials = cfg.trials_or(LONG_HORIZON_TRIALS);
    let settings = [cfg.setting];
    let runs = run_matrix(&settings, &policies, trials, cfg.steps, Some(&initial), cfg, models, seed)?;
    CurveSet::build(runs, &settings, &policies, cfg.steps, cfg, seed)
}

/// One episode on `cfg.setting`, trial 0 of the master seed.
pub fn run_single_episode(
    cfg: &ExperimentConfig,
    policy: Policy,
    steps: usize,
    target: Option<&Grid2D<bool>>,
    models: &Models,
    seed: u64,
) -> Result<EpisodeTrace> {
    let setting = cfg.setting;
    let space = setting.space();
    let initial = match target {
        Some(t) => {
            t.check_shape((space.grid_height, space.grid_width))?;
            Some(targeted_init(t)?)
        }
        None => None,
    };
    let rng = trial_rng(&Rng::new(seed), setting, 0);
    let state = trial_plant(setting, &rng)?;
    let pred = predictor(policy, setting.kind(), models)?;
    Ok(run_episode(
        &state,
        &space,
        pred.as_deref(),
        policy,
        steps,
        initial,
        &cfg.episode_config(),
        &rng.substream("episode"),
    )?)
}

/// Plant kinds and policies an experiment touches, for checkpoint loading.
pub fn requirements(cfg: &ExperimentConfig, kind: ExperimentKind) -> (Vec<PlantKind>, Vec<Policy>) {
    let mut kinds: Vec<PlantKind> = match kind {
        ExperimentKind::LongHorizon => cfg.settings.iter().map(|s| s.kind()).collect(),
        _ => vec![cfg.setting.kind()],
    };
    kinds.dedup();
    let policies = match kind {
        ExperimentKind::LongHorizon => cfg.policies_or(&Policy::ALL),
        ExperimentKind::Targeted => cfg.policies_or(&TARGETED_POLICIES),
        ExperimentKind::SingleAction => vec![Policy::Ppg],
        ExperimentKind::OfflineAp | ExperimentKind::Growth => Vec::new(),
    };
    (kinds, policies)
}
