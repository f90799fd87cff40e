//! Action selection by the cross-entropy method and the greedy coverage
//! loop, including targeted revealing.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{handcrafted_dracaena_predict, handcrafted_vine_predict, tiling_next, TilingPlan};
use crate::error::{Error, Result};
use crate::grid::{encode_runs, Grid2D};
use crate::labels::{extract_dracaena, extract_vine, visible_background, LabelConfig, VineRule};
use crate::model::{predict_reveal_batch, ModelParams, INFER_CHUNK};
use crate::rng::Rng;
use crate::sim::{apply_push, render, truth_reveal, Observation, PlantState};
use crate::space::{angle_distance, clip_action, wrap_angle, ActionSpace, ActionSpec, CoverageMap, PlantKind};

/// Anything that maps candidate actions to workspace-frame reveal
/// probabilities.
pub trait RevealPredictor: Sync {
    fn predict(&self, obs: &Observation, actions: &[ActionSpec], space: &ActionSpace) -> Result<Vec<Grid2D<f32>>>;
}

/// A trained network. Candidates are split into fixed-size chunks evaluated
/// in parallel, so results do not depend on the thread count.
pub struct ModelPredictor<'a>(pub &'a ModelParams);

impl RevealPredictor for ModelPredictor<'_> {
    fn predict(&self, obs: &Observation, actions: &[ActionSpec], space: &ActionSpace) -> Result<Vec<Grid2D<f32>>> {
        let parts: Vec<Vec<Grid2D<f32>>> = actions
            .par_chunks(INFER_CHUNK)
            .map(|c| predict_reveal_batch(self.0, obs, c, space))
            .collect::<Result<_>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

/// Spaghetti models; probability 1 on predicted cells.
pub struct HandcraftedPredictor {
    /// Plant center used by the radial model.
    pub center: (f64, f64),
}

impl RevealPredictor for HandcraftedPredictor {
    fn predict(&self, _obs: &Observation, actions: &[ActionSpec], space: &ActionSpace) -> Result<Vec<Grid2D<f32>>> {
        Ok(actions
            .iter()
            .map(|a| {
                let m = match space.kind {
                    PlantKind::Vine => handcrafted_vine_predict(a, space),
                    PlantKind::Dracaena => handcrafted_dracaena_predict(a, self.center, space),
                };
                m.map(|&b| if b { 1.0 } else { 0.0 })
            })
            .collect())
    }
}

/// Adapts a per-action function, mostly for tests.
pub struct FnPredictor<F>(pub F);

impl<F: Fn(&ActionSpec) -> Grid2D<f32> + Sync> RevealPredictor for FnPredictor<F> {
    fn predict(&self, _obs: &Observation, actions: &[ActionSpec], _space: &ActionSpace) -> Result<Vec<Grid2D<f32>>> {
        Ok(actions.iter().map(|a| (self.0)(a)).collect())
    }
}

/// Expected number of newly revealed cells: `sum pred * (1 - coverage)`.
pub fn objective(pred: &Grid2D<f32>, coverage: &CoverageMap) -> Result<f64> {
    pred.check_shape(coverage.revealed.shape())?;
    Ok(pred
        .iter()
        .zip(coverage.revealed.iter())
        .filter(|(_, &c)| !c)
        .map(|(&p, _)| p as f64)
        .sum())
}

/// Coverage for revealing only inside `target`.
pub fn targeted_init(target: &Grid2D<bool>) -> Result<CoverageMap> {
    if !target.any() {
        return Err(Error::DegenerateTarget);
    }
    Ok(CoverageMap::from_mask(target.map(|&t| !t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub iterations: usize,
    pub samples: usize,
    pub elite_fraction: f64,
    /// Initial mean over (x, y, theta[, z index]); default: center of the space.
    pub init_mean: Option<Vec<f64>>,
    /// Initial std; default: half the range of each dimension.
    pub init_std: Option<Vec<f64>>,
    /// Std floors for (x, y) in cm, theta in rad, z in index units.
    pub floor_xy: f64,
    pub floor_theta: f64,
    pub floor_z: f64,
    /// Redraws allowed for an infeasible sample before it is skipped.
    pub max_redraws: usize,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            samples: 300,
            elite_fraction: 0.2,
            init_mean: None,
            init_std: None,
            floor_xy: 0.5,
            floor_theta: 0.2,
            floor_z: 0.3,
            max_redraws: 10,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.samples == 0 {
            return Err(Error::Config("CEM needs at least one iteration and one sample".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config(format!("elite fraction {} not in (0, 1]", self.elite_fraction)));
        }
        if !(self.floor_xy > 0.0 && self.floor_theta > 0.0 && self.floor_z > 0.0) {
            return Err(Error::Config("std floors must be positive".into()));
        }
        Ok(())
    }

    fn dims(space: &ActionSpace) -> usize {
        if space.z_levels.len() > 1 {
            4
        } else {
            3
        }
    }

    fn floors(&self, dims: usize) -> Vec<f64> {
        [self.floor_xy, self.floor_xy, self.floor_theta, self.floor_z][..dims].to_vec()
    }

    fn initial(&self, space: &ActionSpace) -> Result<(Vec<f64>, Vec<f64>)> {
        let dims = Self::dims(space);
        let r = &space.reachable;
        let (tmin, tmax) = space
            .directions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        let nz = (space.z_levels.len() - 1) as f64;
        let mean = self.init_mean.clone().unwrap_or_else(|| {
            [(r.x0 + r.x1) / 2.0, (r.y0 + r.y1) / 2.0, (tmin + tmax) / 2.0, nz / 2.0][..dims].to_vec()
        });
        let std = self.init_std.clone().unwrap_or_else(|| {
            [r.width() / 2.0, r.height() / 2.0, (tmax - tmin) / 2.0, nz / 2.0][..dims].to_vec()
        });
        if mean.len() != dims || std.len() != dims {
            return Err(Error::Config(format!("CEM mean/std need {dims} entries")));
        }
        let floors = self.floors(dims);
        Ok((mean, std.iter().zip(&floors).map(|(s, f)| s.max(*f)).collect()))
    }
}

/// Nearest legal action to a continuous draw, or `None` if it cannot be
/// executed. Ties go to the lower coordinate or index.
pub fn discretize(space: &ActionSpace, centers: &[(f64, f64)], v: &[f64]) -> Option<ActionSpec> {
    let mut best: Option<((f64, f64), f64)> = None;
    for &(x, y) in centers {
        let d = (x - v[0]).powi(2) + (y - v[1]).powi(2);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some(((x, y), d));
        }
    }
    let ((x, y), _) = best?;
    let theta = wrap_angle(v[2]);
    let mut dir = 0;
    for (i, &t) in space.directions.iter().enumerate() {
        if angle_distance(t, theta) < angle_distance(space.directions[dir], theta) {
            dir = i;
        }
    }
    let z = match v.get(3) {
        Some(&z) => {
            let top = (space.z_levels.len() - 1) as f64;
            // Round half down.
            (z.clamp(0.0, top) - 0.5).ceil().max(0.0) as usize
        }
        None => 0,
    };
    clip_action(space, x, y, dir, z).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    pub action: ActionSpec,
    pub score: f64,
    /// Distinct actions scored.
    pub evaluations: usize,
}

fn circular_fit(angles: &[f64]) -> (f64, f64) {
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let mean = s.atan2(c);
    let var = angles.iter().map(|&a| angle_distance(a, mean).powi(2)).sum::<f64>() / angles.len() as f64;
    (mean, var.sqrt())
}

pub fn cem_select(
    predictor: &dyn RevealPredictor,
    obs: &Observation,
    coverage: &CoverageMap,
    space: &ActionSpace,
    cfg: &CemConfig,
    rng: &mut Rng,
) -> Result<CemResult> {
    cfg.validate()?;
    let dims = CemConfig::dims(space);
    let floors = cfg.floors(dims);
    let (mut mean, mut std) = cfg.initial(space)?;
    let centers = space.start_centers();
    let mut cache: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    let mut best: Option<(f64, ActionSpec)> = None;
    for _ in 0..cfg.iterations {
        let mut draws = Vec::with_capacity(cfg.samples);
        for _ in 0..cfg.samples {
            for _ in 0..=cfg.max_redraws {
                let v: Vec<f64> = (0..dims)
                    .map(|d| mean[d] + std[d] * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if let Some(a) = discretize(space, &centers, &v) {
                    draws.push(a);
                    break;
                }
            }
        }
        if draws.is_empty() {
            continue;
        }
        let mut fresh = Vec::new();
        for a in &draws {
            let k = space.action_key(a);
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(k) {
                e.insert(f64::NAN);
                fresh.push(*a);
            }
        }
        let preds = predictor.predict(obs, &fresh, space)?;
        if preds.len() != fresh.len() {
            return Err(Error::Dimension {
                expected: format!("{} predictions", fresh.len()),
                found: preds.len().to_string(),
            });
        }
        for (a, p) in fresh.iter().zip(&preds) {
            cache.insert(space.action_key(a), objective(p, coverage)?);
        }
        let scores: Vec<f64> = draws.iter().map(|a| cache[&space.action_key(a)]).collect();
        for (a, &s) in draws.iter().zip(&scores) {
            let better = match &best {
                None => true,
                Some((bs, ba)) => s > *bs || (s == *bs && space.action_key(a) < space.action_key(ba)),
            };
            if better {
                best = Some((s, *a));
            }
        }
        let mut order: Vec<usize> = (0..draws.len()).collect();
        order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
        let n_elite = ((cfg.elite_fraction * draws.len() as f64).round() as usize).clamp(1, draws.len());
        let elites: Vec<&ActionSpec> = order[..n_elite].iter().map(|&i| &draws[i]).collect();
        let column = |f: &dyn Fn(&ActionSpec) -> f64| elites.iter().map(|a| f(a)).collect::<Vec<f64>>();
        let fit = |xs: Vec<f64>| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
            (m, var.sqrt())
        };
        let mut fits = vec![fit(column(&|a| a.x)), fit(column(&|a| a.y)), circular_fit(&column(&|a| space.theta(a)))];
        if dims == 4 {
            fits.push(fit(column(&|a| a.z_index as f64)));
        }
        for (d, (m, s)) in fits.into_iter().enumerate() {
            mean[d] = m;
            std[d] = s.max(floors[d]);
        }
    }
    let (score, action) = best.ok_or_else(|| Error::PlanningFailure("no feasible action was drawn".into()))?;
    Ok(CemResult {
        action,
        score,
        evaluations: cache.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// CEM over the learned model.
    Ppg,
    Tiling,
    /// CEM over the spaghetti model.
    #[serde(rename = "handcrafted")]
    HandcraftedPpg,
    /// CEM over the blind model.
    #[serde(rename = "blind")]
    BlindPpg,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Ppg, Policy::Tiling, Policy::HandcraftedPpg, Policy::BlindPpg];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Ppg => "ppg",
            Policy::Tiling => "tiling",
            Policy::HandcraftedPpg => "handcrafted",
            Policy::BlindPpg => "blind",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy '{s}'")))
    }
}

/// Where realized reveals come from during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevealFrom {
    /// Label extractors on before/after observations.
    Labels,
    /// Simulator ground truth.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub cem: CemConfig,
    pub reveal_from: RevealFrom,
    pub labels: LabelConfig,
    pub vine_rule: VineRule,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            cem: CemConfig::default(),
            reveal_from: RevealFrom::Labels,
            labels: LabelConfig::default(),
            vine_rule: VineRule::BoardColor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Digest of the observation the action was chosen from, hex.
    pub obs_digest: String,
    pub action: ActionSpec,
    /// Planner's expected new cells; absent for tiling.
    pub predicted: Option<f64>,
    /// Run-length encoded reveal mask.
    pub revealed: Vec<u32>,
    pub revealed_area: usize,
    pub new_area: usize,
    pub coverage: Vec<u32>,
    pub coverage_area: usize,
    pub cumulative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub policy: Policy,
    pub kind: PlantKind,
    pub height: usize,
    pub width: usize,
    pub reveal_from: RevealFrom,
    pub initial: Vec<u32>,
    pub initial_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn cumulative(&self) -> usize {
        self.steps.last().map_or(0, |s| s.cumulative)
    }

    /// Cumulative area after each step, starting from 0 at t = 0.
    pub fn curve(&self) -> Vec<usize> {
        std::iter::once(0).chain(self.steps.iter().map(|s| s.cumulative)).collect()
    }

    /// Header line, then one line per step.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        let line = |v: &dyn erased::Json| v.to_line();
        writeln!(w, "{}", line(&self.header)?)?;
        for s in &self.steps {
            writeln!(w, "{}", line(s)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }
}

mod erased {
    use crate::error::{Error, Result};

    pub trait Json {
        fn to_line(&self) -> Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_line(&self) -> Result<String> {
            serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
        }
    }
}

/// Plant center assumed by the hand-crafted model and tiling: the middle of
/// the workspace.
pub fn nominal_center(space: &ActionSpace) -> (f64, f64) {
    (space.grid_width as f64 / 2.0, space.grid_height as f64 / 2.0)
}

/// Reveal actually produced by a push, per `cfg.reveal_from`.
pub fn realized_reveal(
    before: &PlantState,
    after: &PlantState,
    ob: &Observation,
    oa: &Observation,
    cfg: &EpisodeConfig,
) -> Result<Grid2D<bool>> {
    Ok(match cfg.reveal_from {
        RevealFrom::Oracle => truth_reveal(before, after)?.revealed,
        RevealFrom::Labels => match before.kind() {
            PlantKind::Vine => extract_vine(ob, oa, cfg.vine_rule, &cfg.labels)?.revealed,
            PlantKind::Dracaena => extract_dracaena(ob, oa, cfg.labels.tau, &cfg.labels)?.revealed,
        },
    })
}

/// Greedy coverage loop. PPG-style policies plan with `predictor`; tiling
/// ignores it. `initial` defaults to the background visible at the start.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    state: &PlantState,
    space: &ActionSpace,
    predictor: Option<&dyn RevealPredictor>,
    policy: Policy,
    steps: usize,
    initial: Option<CoverageMap>,
    cfg: &EpisodeConfig,
    rng: &Rng,
) -> Result<EpisodeTrace> {
    if state.kind() != space.kind {
        return Err(Error::Config("plant kind does not match the action space".into()));
    }
    let mut sim_rng = rng.substream("sim");
    let mut plan_rng = rng.substream("planner");
    let mut state = state.clone();
    let mut obs = render(&state);
    let mut coverage = match initial {
        Some(c) => {
            c.revealed.check_shape(obs.shape())?;
            c
        }
        None => CoverageMap::from_mask(visible_background(&obs, space.kind, &cfg.labels)),
    };
    let header = EpisodeHeader {
        policy,
        kind: space.kind,
        height: obs.shape().0,
        width: obs.shape().1,
        reveal_from: cfg.reveal_from,
        initial: encode_runs(&coverage.revealed),
        initial_area: coverage.area(),
    };
    let mut tiling = match policy {
        Policy::Tiling => Some(TilingPlan::for_space(space, nominal_center(space))?),
        _ => None,
    };
    let mut records = Vec::with_capacity(steps);
    let mut cumulative = 0;
    for t in 0..steps {
        let (action, predicted) = match tiling.as_mut() {
            Some(plan) => (tiling_next(plan, &mut plan_rng), None),
            None => {
                let p = predictor.ok_or_else(|| {
                    Error::Config(format!("policy '{}' needs a reveal predictor", policy.name()))
                })?;
                let r = cem_select(p, &obs, &coverage, space, &cfg.cem, &mut plan_rng)?;
                (r.action, Some(r.score))
            }
        };
        let next = apply_push(&state, &action, space, &mut sim_rng)?;
        let next_obs = render(&next);
        let revealed = realized_reveal(&state, &next, &obs, &next_obs, cfg)?;
        let new_area = coverage.union(&revealed)?;
        cumulative += new_area;
        records.push(StepRecord {
            t,
            obs_digest: format!("{:016x}", obs.digest()),
            action,
            predicted,
            revealed_area: revealed.count_true(),
            revealed: encode_runs(&revealed),
            new_area,
            coverage: encode_runs(&coverage.revealed),
            coverage_area: coverage.area(),
            cumulative,
        });
        state = next;
        obs = next_obs;
    }
    Ok(EpisodeTrace { header, steps: records })
}
