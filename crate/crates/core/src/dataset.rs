//! Self-supervised data: crops around action starts, action encoding,
//! augmentation, splits, and the on-disk tensor store.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::labels::{dracaena_height_drop, extract_vine, LabelConfig, VineRule};
use crate::rng::Rng;
use crate::sim::{apply_push, render, sim_init, Observation, Rgb, Scenario, SimConfig};
use crate::space::{clip_action, ActionSpace, ActionSpec, PlantKind};

/// Crop side in cells.
pub const CROP: usize = 48;
const HALF: isize = (CROP / 2) as isize;
/// Upper clip for the stored height-drop target, cm.
pub const MAX_DROP: f32 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFeatures {
    pub dir_onehot: Vec<f32>,
    pub z_onehot: Vec<f32>,
    /// `(d cos θ, d sin θ)` in cm, viewer frame (y up).
    pub endpoint: (f32, f32),
}

impl ActionFeatures {
    /// Flat vector: direction one-hot, z one-hot, endpoint scaled by `scale`.
    pub fn to_vec(&self, scale: f32) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.dir_onehot.len() + self.z_onehot.len() + 2);
        v.extend_from_slice(&self.dir_onehot);
        v.extend_from_slice(&self.z_onehot);
        v.push(self.endpoint.0 * scale);
        v.push(self.endpoint.1 * scale);
        v
    }
}

pub fn encode_action(space: &ActionSpace, a: &ActionSpec) -> ActionFeatures {
    let mut dir_onehot = vec![0.0; space.directions.len()];
    dir_onehot[a.dir_index] = 1.0;
    let mut z_onehot = vec![0.0; space.z_levels.len()];
    z_onehot[a.z_index] = 1.0;
    let theta = space.theta(a);
    ActionFeatures {
        dir_onehot,
        z_onehot,
        endpoint: ((a.length * theta.cos()) as f32, (a.length * theta.sin()) as f32),
    }
}

/// One training example, in the crop frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub kind: PlantKind,
    pub action: ActionSpec,
    pub color: Grid2D<Rgb>,
    pub height: Grid2D<f32>,
    pub valid: Grid2D<bool>,
    pub action_feat: ActionFeatures,
    pub label: Grid2D<bool>,
    /// Aligned height decrease, cm; Dracaena only.
    pub aux_height_drop: Option<Grid2D<f32>>,
}

/// Top-left workspace cell of the crop around a start point. The start lies
/// on the top-left corner of crop cell `(CROP/2, CROP/2)`.
pub fn crop_origin(x: f64, y: f64) -> (isize, isize) {
    (y.floor() as isize - HALF, x.floor() as isize - HALF)
}

/// Crop of a workspace grid; cells outside the workspace take `fill`.
pub fn crop_grid<V: Clone>(g: &Grid2D<V>, x: f64, y: f64, fill: V) -> Grid2D<V> {
    let (r0, c0) = crop_origin(x, y);
    Grid2D::from_fn(CROP, CROP, |i, j| {
        g.get(r0 + i as isize, c0 + j as isize).cloned().unwrap_or_else(|| fill.clone())
    })
}

/// Places a crop back into a zeroed workspace-sized grid.
pub fn paste<V: Clone>(crop: &Grid2D<V>, x: f64, y: f64, height: usize, width: usize, fill: V) -> Result<Grid2D<V>> {
    crop.check_shape((CROP, CROP))?;
    let (r0, c0) = crop_origin(x, y);
    let mut out = Grid2D::filled(height, width, fill);
    for i in 0..CROP {
        for j in 0..CROP {
            let (r, c) = (r0 + i as isize, c0 + j as isize);
            if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                out[(r as usize, c as usize)] = crop[(i, j)].clone();
            }
        }
    }
    Ok(out)
}

pub struct CropView {
    pub color: Grid2D<Rgb>,
    pub height: Grid2D<f32>,
    pub valid: Grid2D<bool>,
}

pub fn crop_observation(obs: &Observation, x: f64, y: f64) -> CropView {
    CropView {
        color: crop_grid(&obs.color, x, y, [0.0; 3]),
        height: crop_grid(&obs.height, x, y, 0.0),
        valid: crop_grid(&obs.valid, x, y, false),
    }
}

/// Sample inputs for a candidate action (label fields empty).
pub fn query_sample(space: &ActionSpace, obs: &Observation, a: &ActionSpec) -> Sample {
    let view = crop_observation(obs, a.x, a.y);
    Sample {
        kind: space.kind,
        action: *a,
        color: view.color,
        height: view.height,
        valid: view.valid,
        action_feat: encode_action(space, a),
        label: Grid2D::filled(CROP, CROP, false),
        aux_height_drop: None,
    }
}

/// Labeled sample from a before/after pair.
pub fn make_sample(
    space: &ActionSpace,
    before: &Observation,
    after: &Observation,
    a: &ActionSpec,
    labels: &LabelConfig,
    vine_rule: VineRule,
) -> Result<Sample> {
    let mut s = query_sample(space, before, a);
    let (label, aux) = match space.kind {
        PlantKind::Vine => (extract_vine(before, after, vine_rule, labels)?.revealed, None),
        PlantKind::Dracaena => {
            let (drop, _) = dracaena_height_drop(before, after, labels)?;
            let label = drop.map(|&d| d as f64 >= labels.tau);
            (label, Some(drop.map(|&d| d.clamp(0.0, MAX_DROP))))
        }
    };
    let label = crop_grid(&label, a.x, a.y, false);
    s.label = label.zip_map(&s.valid, |&l, &v| l && v)?;
    s.aux_height_drop = aux.map(|g| {
        crop_grid(&g, a.x, a.y, 0.0)
            .zip_map(&s.valid, |&d, &v| if v { d } else { 0.0 })
            .expect("crop shape")
    });
    Ok(s)
}

/// Mirrors a sample about the vertical line through its action start.
pub fn augment_flip(space: &ActionSpace, s: &Sample) -> Result<Sample> {
    let theta = ActionSpace::mirror_theta(space.theta(&s.action));
    let dir_index = space
        .direction_index(theta)
        .ok_or_else(|| Error::InfeasibleAction(format!("direction {theta} has no mirror image")))?;
    let action = ActionSpec { dir_index, ..s.action };
    Ok(Sample {
        kind: s.kind,
        action,
        color: s.color.flip_horizontal(),
        height: s.height.flip_horizontal(),
        valid: s.valid.flip_horizontal(),
        action_feat: encode_action(space, &action),
        label: s.label.flip_horizontal(),
        aux_height_drop: s.aux_height_drop.as_ref().map(|g| g.flip_horizontal()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColorJitter {
    /// Brightness scale drawn from `[1 - b, 1 + b]`.
    pub brightness: f64,
    /// Hue shift drawn from `[-h, h]` degrees.
    pub hue_deg: f64,
}

impl Default for ColorJitter {
    fn default() -> Self {
        Self {
            brightness: 0.2,
            hue_deg: 10.0,
        }
    }
}

fn rgb_to_hsv([r, g, b]: Rgb) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

/// Random brightness scale and hue shift on the color crop only.
pub fn augment_color(s: &Sample, jitter: &ColorJitter, rng: &mut Rng) -> Sample {
    let scale = if jitter.brightness > 0.0 {
        rng.gen_range(1.0 - jitter.brightness..=1.0 + jitter.brightness)
    } else {
        1.0
    };
    let shift = if jitter.hue_deg > 0.0 {
        rng.gen_range(-jitter.hue_deg..=jitter.hue_deg)
    } else {
        0.0
    };
    let mut out = s.clone();
    if scale == 1.0 && shift == 0.0 {
        return out;
    }
    out.color = s.color.map(|&c| {
        let (h, sat, v) = rgb_to_hsv(c);
        let rgb = hsv_to_rgb(h + shift, sat, v * scale);
        rgb.map(|x| x.clamp(0.0, 255.0))
    });
    out
}

/// Invalidates a swath of cells, as if the arm blocked the camera.
pub fn arm_shadow(height: usize, width: usize, rng: &mut Rng) -> Grid2D<bool> {
    let p = (
        rng.gen_range(0.25..0.75) * width as f64,
        rng.gen_range(0.25..0.75) * height as f64,
    );
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let half_width = rng.gen_range(2.0..5.0);
    let (ux, uy) = (phi.cos(), phi.sin());
    Grid2D::from_fn(height, width, |r, c| {
        let (dx, dy) = (c as f64 + 0.5 - p.0, r as f64 + 0.5 - p.1);
        let along = dx * ux + dy * uy;
        let across = (-dx * uy + dy * ux).abs();
        along >= 0.0 && across <= half_width
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    /// Pushes per plant before a fresh plant is drawn.
    pub reset_every: usize,
    pub shadow_fraction: f64,
    pub vine_rule: VineRule,
    pub labels: LabelConfig,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            reset_every: 10,
            shadow_fraction: 0.2,
            vine_rule: VineRule::BoardColor,
            labels: LabelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: u64,
    pub kind: PlantKind,
    pub action: ActionSpec,
    pub scenario: Scenario,
    /// Seed of the plant episode the record came from.
    pub seed: u64,
    pub offset: u64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].split == Some(split))
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r).map_err(|e| Error::Format(e.to_string()))?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let f = BufReader::new(fs::File::open(path)?);
        let mut records = Vec::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("manifest: {e}")))?);
        }
        Ok(Self { records })
    }
}

/// Seeded shuffle, then contiguous 80/10/10 assignment.
pub fn split(manifest: &DatasetManifest, rng: &mut Rng) -> Result<DatasetManifest> {
    let n = manifest.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("split needs at least 10 records, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = (0.1 * n as f64).round() as usize;
    let mut out = manifest.clone();
    for (rank, &i) in order.iter().enumerate() {
        out.records[i].split = Some(if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        });
    }
    Ok(out)
}

/// A collected record before it is written.
#[derive(Debug, Clone)]
pub struct Collected {
    pub sample: Sample,
    pub scenario: Scenario,
    pub seed: u64,
}

/// Runs random pushes and builds labeled samples, in memory.
///
/// Plants are reset every `reset_every` pushes; each plant episode draws
/// from its own forked stream, so episodes are independent and may be
/// generated in parallel without changing the result.
pub fn collect_samples(cfg: &SimConfig, space: &ActionSpace, n: usize, rng: &Rng, cc: &CollectConfig) -> Result<Vec<Collected>> {
    if n == 0 {
        return Err(Error::InsufficientData("collect needs n >= 1".into()));
    }
    if space.kind != cfg.kind {
        return Err(Error::Config("action space does not match plant kind".into()));
    }
    let per = cc.reset_every.max(1);
    let episodes = n.div_ceil(per);
    let starts = space.start_centers();
    let chunks: Vec<Result<Vec<Collected>>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut erng = rng.fork(e as u64);
            let seed = erng.seed();
            let mut state = sim_init(cfg, &mut erng)?;
            let count = per.min(n - e * per);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let (x, y) = starts[erng.gen_range(0..starts.len())];
                let dir = erng.gen_range(0..space.directions.len());
                let z = erng.gen_range(0..space.z_levels.len());
                let a = clip_action(space, x, y, dir, z)?;
                let next = apply_push(&state, &a, space, &mut erng)?;
                let mut before = render(&state);
                if erng.gen_bool(cc.shadow_fraction.clamp(0.0, 1.0)) {
                    let (h, w) = before.shape();
                    before = before.with_shadow(&arm_shadow(h, w, &mut erng))?;
                }
                let after = render(&next);
                let sample = make_sample(space, &before, &after, &a, &cc.labels, cc.vine_rule)?;
                out.push(Collected {
                    sample,
                    scenario: cfg.scenario,
                    seed,
                });
                state = next;
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

pub const STORE_FILE: &str = "store.ppgd";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
const STORE_MAGIC: &[u8; 4] = b"PPGD";
const STORE_VERSION: u32 = 1;

fn put_tensor(w: &mut Writer, dims: &[usize], data: impl IntoIterator<Item = f32>) {
    w.u16(dims.len() as u16);
    for &d in dims {
        w.u16(d as u16);
    }
    for v in data {
        w.f32(v);
    }
}

fn get_tensor(r: &mut Reader, expected: &[usize]) -> Result<Vec<f32>> {
    let rank = r.u16()? as usize;
    let dims: Vec<usize> = (0..rank).map(|_| r.u16().map(|d| d as usize)).collect::<Result<_>>()?;
    if dims != expected {
        return Err(Error::Format(format!("tensor dims {dims:?}, expected {expected:?}")));
    }
    r.f32s(dims.iter().product())
}

pub fn encode_record(w: &mut Writer, s: &Sample) {
    let a = &s.action;
    w.u8(s.kind.code())
        .f32(a.x as f32)
        .f32(a.y as f32)
        .u16(a.dir_index as u16)
        .u16(a.z_index as u16)
        .f32(a.length as f32);
    let n = CROP * CROP;
    let color = (0..3).flat_map(|ch| s.color.iter().map(move |c| c[ch]));
    put_tensor(w, &[3, CROP, CROP], color);
    put_tensor(w, &[CROP, CROP], s.height.iter().copied());
    put_tensor(w, &[CROP, CROP], s.valid.iter().map(|&v| v as u8 as f32));
    let labels = s.label.iter().map(|&l| l as u8 as f32);
    match &s.aux_height_drop {
        Some(aux) => put_tensor(w, &[2, CROP, CROP], labels.chain(aux.iter().copied())),
        None => put_tensor(w, &[1, CROP, CROP], labels),
    }
    debug_assert_eq!(s.label.len(), n);
}

pub fn decode_record(bytes: &[u8], offset: usize, space: &ActionSpace) -> Result<Sample> {
    let mut r = Reader::at(bytes, offset);
    let kind = PlantKind::from_code(r.u8()?)?;
    if kind != space.kind {
        return Err(Error::Format("record kind does not match action space".into()));
    }
    let action = ActionSpec {
        x: r.f32()? as f64,
        y: r.f32()? as f64,
        dir_index: r.u16()? as usize,
        z_index: r.u16()? as usize,
        length: r.f32()? as f64,
    };
    if action.dir_index >= space.directions.len() || action.z_index >= space.z_levels.len() {
        return Err(Error::Format("record action out of range".into()));
    }
    let n = CROP * CROP;
    let color = get_tensor(&mut r, &[3, CROP, CROP])?;
    let height = get_tensor(&mut r, &[CROP, CROP])?;
    let valid = get_tensor(&mut r, &[CROP, CROP])?;
    let k = if kind == PlantKind::Dracaena { 2 } else { 1 };
    let target = get_tensor(&mut r, &[k, CROP, CROP])?;
    let color = Grid2D::from_fn(CROP, CROP, |i, j| {
        let p = i * CROP + j;
        [color[p], color[n + p], color[2 * n + p]]
    });
    Ok(Sample {
        kind,
        action,
        color,
        height: Grid2D::from_vec(CROP, CROP, height)?,
        valid: Grid2D::from_vec(CROP, CROP, valid.iter().map(|&v| v != 0.0).collect())?,
        action_feat: encode_action(space, &action),
        label: Grid2D::from_vec(CROP, CROP, target[..n].iter().map(|&v| v != 0.0).collect())?,
        aux_height_drop: (k == 2).then(|| Grid2D::from_vec(CROP, CROP, target[n..].to_vec())).transpose()?,
    })
}

/// Tensor store bytes and the record offsets into it.
pub fn encode_store(samples: &[Sample]) -> (Vec<u8>, Vec<u64>) {
    let mut w = Writer::new();
    w.magic(STORE_MAGIC).u32(STORE_VERSION);
    let mut offsets = Vec::with_capacity(samples.len());
    for s in samples {
        offsets.push(w.len() as u64);
        encode_record(&mut w, s);
    }
    (w.into_bytes(), offsets)
}

fn check_store_header(bytes: &[u8]) -> Result<()> {
    let mut r = Reader::new(bytes);
    r.expect_magic(STORE_MAGIC)?;
    let v = r.u32()?;
    if v != STORE_VERSION {
        return Err(Error::Format(format!("unsupported store version {v}")));
    }
    Ok(())
}

/// Writes store and manifest into `out`, removing partial files on failure.
pub fn write_dataset(out: &Path, collected: &[Collected]) -> Result<DatasetManifest> {
    let samples: Vec<Sample> = collected.iter().map(|c| c.sample.clone()).collect();
    let (bytes, offsets) = encode_store(&samples);
    let manifest = DatasetManifest {
        records: collected
            .iter()
            .zip(&offsets)
            .enumerate()
            .map(|(i, (c, &offset))| ManifestRecord {
                id: i as u64,
                kind: c.sample.kind,
                action: c.sample.action,
                scenario: c.scenario,
                seed: c.seed,
                offset,
                split: None,
            })
            .collect(),
    };
    let store_path = out.join(STORE_FILE);
    let manifest_path = out.join(MANIFEST_FILE);
    let result = (|| -> Result<()> {
        fs::create_dir_all(out)?;
        fs::write(&store_path, &bytes)?;
        manifest.write_jsonl(&manifest_path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&store_path);
        let _ = fs::remove_file(&manifest_path);
        return Err(e);
    }
    Ok(manifest)
}

/// Collects `n` samples and writes them under `out`.
pub fn collect(cfg: &SimConfig, space: &ActionSpace, n: usize, rng: &Rng, out: &Path, cc: &CollectConfig) -> Result<DatasetManifest> {
    let collected = collect_samples(cfg, space, n, rng, cc)?;
    write_dataset(out, &collected)
}

/// A dataset loaded into memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn from_collected(collected: Vec<Collected>) -> Self {
        let records = collected
            .iter()
            .enumerate()
            .map(|(i, c)| ManifestRecord {
                id: i as u64,
                kind: c.sample.kind,
                action: c.sample.action,
                scenario: c.scenario,
                seed: c.seed,
                offset: 0,
                split: None,
            })
            .collect();
        Self {
            manifest: DatasetManifest { records },
            samples: collected.into_iter().map(|c| c.sample).collect(),
        }
    }

    pub fn load(dir: &Path, space: &ActionSpace) -> Result<Self> {
        let manifest = DatasetManifest::read_jsonl(&dir.join(MANIFEST_FILE))?;
        let bytes = fs::read(dir.join(STORE_FILE))?;
        check_store_header(&bytes)?;
        let samples = manifest
            .records
            .iter()
            .map(|rec| decode_record(&bytes, rec.offset as usize, space))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, samples })
    }

    pub fn split_samples(&self, split: Split) -> Vec<&Sample> {
        self.manifest.indices(split).into_iter().map(|i| &self.samples[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PlantState;
    use crate::space::mirror_action;

    fn vine_sample(seed: u64) -> Sample {
        let cfg = SimConfig::vine(Scenario::Base);
        let space = ActionSpace::vine();
        let cc = CollectConfig::default();
        collect_samples(&cfg, &space, 1, &Rng::new(seed), &cc).unwrap().remove(0).sample
    }

    #[test]
    fn action_encoding_examples() {
        let space = ActionSpace::vine();
        let a = clip_action(&space, 41.0, 41.0, 0, 0).unwrap();
        let f = encode_action(&space, &a);
        assert_eq!(f.dir_onehot, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.endpoint, (15.0, 0.0));
        let up = encode_action(&space, &ActionSpec { dir_index: 3, ..a });
        assert!(up.endpoint.0.abs() < 1e-6 && (up.endpoint.1 - 15.0).abs() < 1e-6);
        let short = encode_action(&space, &ActionSpec { dir_index: 1, length: 12.0, ..a });
        assert!((short.endpoint.0 - 6.0 * 3f32.sqrt()).abs() < 1e-5);
        assert!((short.endpoint.1 - 6.0).abs() < 1e-5);
        let d = ActionSpace::dracaena();
        let f = encode_action(&d, &clip_action(&d, 21.0, 21.0, 3, 2).unwrap());
        assert_eq!(f.z_onehot, vec![0.0, 0.0, 1.0]);
        assert_eq!(f.dir_onehot.iter().sum::<f32>(), 1.0);
    }

    #[test]
    fn crop_center_maps_to_action_start() {
        let g = Grid2D::from_fn(80, 80, |r, c| (r * 1000 + c) as i64);
        let crop = crop_grid(&g, 41.0, 23.0, -1);
        assert_eq!(crop[(CROP / 2, CROP / 2)], 23 * 1000 + 41);
        // rows above the workspace are padded
        assert_eq!(crop[(0, 0)], -1);
        let back = paste(&crop, 41.0, 23.0, 80, 80, -1).unwrap();
        for r in 0..80 {
            for c in 0..80 {
                let inside = (17..65).contains(&c) && r < 47;
                assert_eq!(back[(r, c)], if inside { g[(r, c)] } else { -1 });
            }
        }
    }

    #[test]
    fn labels_stay_inside_valid_cells() {
        for seed in 0..10 {
            let s = vine_sample(seed);
            for (l, v) in s.label.iter().zip(s.valid.iter()) {
                assert!(!l || *v);
            }
        }
    }

    #[test]
    fn flip_is_an_involution_and_mirrors_direction() {
        let space = ActionSpace::vine();
        let s = vine_sample(3);
        let f = augment_flip(&space, &s).unwrap();
        assert_eq!(augment_flip(&space, &f).unwrap(), s);
        assert_eq!(f.action_feat.endpoint.0, -s.action_feat.endpoint.0);
        let mut zero = s.clone();
        zero.action.dir_index = 0;
        zero.action_feat = encode_action(&space, &zero.action);
        let fz = augment_flip(&space, &zero).unwrap();
        assert_eq!(fz.action.dir_index, 6);
        for r in 0..CROP {
            for c in 0..CROP {
                assert_eq!(s.label[(r, c)], f.label[(r, CROP - 1 - c)]);
            }
        }
    }

    #[test]
    fn flip_matches_mirrored_world() {
        let cfg = SimConfig {
            color_noise: 0.0,
            ..SimConfig::vine(Scenario::Base)
        };
        let space = ActionSpace::vine();
        let labels = LabelConfig::default();
        let PlantState::Vine(v) = sim_init(&cfg, &mut Rng::new(12)).unwrap() else {
            unreachable!()
        };
        let m = crate::sim::mirror_vine(&v, 40.0);
        let a = clip_action(&space, 33.0, 35.0, 1, 0).unwrap();
        let ma = mirror_action(&space, &a, 40.0).unwrap();
        let run = |state: PlantState, a: &ActionSpec| {
            let next = apply_push(&state, a, &space, &mut Rng::new(0)).unwrap();
            make_sample(&space, &render(&state), &render(&next), a, &labels, VineRule::BoardColor).unwrap()
        };
        let s = run(PlantState::Vine(v), &a);
        let ms = run(PlantState::Vine(m), &ma);
        let f = augment_flip(&space, &s).unwrap();
        assert_eq!(f.action_feat, ms.action_feat);
        assert_eq!(f.label, ms.label);
        assert_eq!(f.height, ms.height);
        assert_eq!(f.color, ms.color);
        assert!(f.label.any());
    }

    #[test]
    fn color_jitter_properties() {
        let s = vine_sample(1);
        let none = ColorJitter {
            brightness: 0.0,
            hue_deg: 0.0,
        };
        assert_eq!(augment_color(&s, &none, &mut Rng::new(0)), s);
        let strong = ColorJitter {
            brightness: 0.9,
            hue_deg: 40.0,
        };
        for seed in 0..5 {
            let j = augment_color(&s, &strong, &mut Rng::new(seed));
            assert!(j.color.iter().all(|c| c.iter().all(|&v| (0.0..=255.0).contains(&v))));
            assert_eq!(j.label, s.label);
            assert_eq!(j.height, s.height);
            assert_eq!(j.valid, s.valid);
            assert_eq!(j.action, s.action);
        }
    }

    #[test]
    fn hsv_roundtrip() {
        for c in [[10.0, 200.0, 30.0], [196.0, 164.0, 118.0], [0.0, 0.0, 0.0], [255.0, 255.0, 255.0]] {
            let (h, s, v) = rgb_to_hsv(c);
            let back = hsv_to_rgb(h, s, v);
            for i in 0..3 {
                assert!((back[i] - c[i]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn split_proportions_and_determinism() {
        let make = |n: usize| DatasetManifest {
            records: (0..n)
                .map(|i| ManifestRecord {
                    id: i as u64,
                    kind: PlantKind::Vine,
                    action: ActionSpec {
                        x: 21.0,
                        y: 21.0,
                        dir_index: 0,
                        z_index: 0,
                        length: 15.0,
                    },
                    scenario: Scenario::Base,
                    seed: 0,
                    offset: 0,
                    split: None,
                })
                .collect(),
        };
        for (n, want) in [(100, (80, 10, 10)), (1000, (800, 100, 100))] {
            let m = split(&make(n), &mut Rng::new(4)).unwrap();
            let got = (
                m.indices(Split::Train).len(),
                m.indices(Split::Val).len(),
                m.indices(Split::Test).len(),
            );
            assert_eq!(got, want);
            assert_eq!(m, split(&make(n), &mut Rng::new(4)).unwrap());
        }
        assert!(matches!(split(&make(9), &mut Rng::new(0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn store_roundtrip_is_exact() {
        let space = ActionSpace::dracaena();
        let cfg = SimConfig::dracaena(Scenario::Base);
        let collected = collect_samples(&cfg, &space, 3, &Rng::new(2), &CollectConfig::default()).unwrap();
        let samples: Vec<Sample> = collected.iter().map(|c| c.sample.clone()).collect();
        let (bytes, offsets) = encode_store(&samples);
        assert_eq!(&bytes[..4], b"PPGD");
        for (s, &o) in samples.iter().zip(&offsets) {
            assert_eq!(&decode_record(&bytes, o as usize, &space).unwrap(), s);
        }
        assert!(decode_record(&bytes[..bytes.len() - 4], offsets[2] as usize, &space).is_err());
    }
}
