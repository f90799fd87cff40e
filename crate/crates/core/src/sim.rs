//! Procedural stand-ins for hanging vines (viewed fronto-parallel against a
//! board) and a Dracaena (viewed top-down), with push dynamics and a
//! ground-truth reveal oracle.
//!
//! All dynamics constants live in [`SimConfig`] so experiments are
//! reproducible from their config file.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::{dist_to_segment, Capsule, RigidTransform2D};
use crate::grid::Grid2D;
use crate::labels::{RevealMask, RevealSource};
use crate::rng::Rng;
use crate::space::{push_direction, ActionSpace, ActionSpec, PlantKind};

pub type Rgb = [f32; 3];

pub const BOARD_COLOR: Rgb = [196.0, 164.0, 118.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Base,
    SparseVines,
    SeparatedVines,
    GrownDracaena,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Base => "base",
            Scenario::SparseVines => "sparse-vines",
            Scenario::SeparatedVines => "separated-vines",
            Scenario::GrownDracaena => "grown-dracaena",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub kind: PlantKind,
    pub scenario: Scenario,
    /// Inclusive strand count range.
    pub strand_count: (usize, usize),
    /// Strand width range in cells.
    pub strand_width: (u32, u32),
    /// Distance of a strand in front of the board, cm.
    pub strand_depth: (f64, f64),
    /// Per-row decay of a lateral push below the contact row.
    pub strand_stiffness: (f64, f64),
    /// Amplitude of the rest-shape wiggle, cm.
    pub strand_wiggle: f64,
    pub anchor_range: (f64, f64),
    pub separated_bands: usize,
    pub separated_band_width: f64,
    pub entanglement: f64,
    /// Per-push spring-back of vine strands toward rest.
    pub relaxation: f64,
    pub leaf_count: (usize, usize),
    pub leaf_length: (f64, f64),
    pub leaf_width: (f64, f64),
    /// Height falloff of a leaf per cm of radius.
    pub leaf_droop: (f64, f64),
    /// Leaf length multiplier for the grown scenario.
    pub growth_factor: f64,
    /// Per-channel uniform color noise amplitude (0-255 scale).
    pub color_noise: f64,
    pub effector_radius: f64,
    /// Height decrease (cm) counted as revealed for the Dracaena oracle.
    pub tau_reveal: f64,
    pub wobble_rotation_deg: f64,
    pub wobble_shift: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::vine(Scenario::Base)
    }
}

impl SimConfig {
    pub fn vine(scenario: Scenario) -> Self {
        Self {
            kind: PlantKind::Vine,
            scenario,
            strand_count: (40, 60),
            strand_width: (1, 3),
            strand_depth: (2.0, 15.0),
            strand_stiffness: (0.84, 0.95),
            strand_wiggle: 1.5,
            anchor_range: (8.0, 72.0),
            separated_bands: 3,
            separated_band_width: 10.0,
            entanglement: 0.3,
            relaxation: 0.15,
            leaf_count: (12, 18),
            leaf_length: (14.0, 30.0),
            leaf_width: (3.0, 6.0),
            leaf_droop: (0.15, 0.35),
            growth_factor: 1.3,
            color_noise: 6.0,
            effector_radius: 2.0,
            tau_reveal: 3.0,
            wobble_rotation_deg: 2.0,
            wobble_shift: 1.0,
        }
    }

    pub fn dracaena(scenario: Scenario) -> Self {
        Self {
            kind: PlantKind::Dracaena,
            ..Self::vine(scenario)
        }
    }

    pub fn for_kind(kind: PlantKind, scenario: Scenario) -> Self {
        match kind {
            PlantKind::Vine => Self::vine(scenario),
            PlantKind::Dracaena => Self::dracaena(scenario),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid sim config: {what}")));
        if self.strand_count.0 > self.strand_count.1 {
            return bad("strand_count range is empty");
        }
        if self.strand_width.0 == 0 || self.strand_width.0 > self.strand_width.1 {
            return bad("strand_width range");
        }
        for (name, (lo, hi)) in [
            ("strand_depth", self.strand_depth),
            ("strand_stiffness", self.strand_stiffness),
            ("anchor_range", self.anchor_range),
            ("leaf_length", self.leaf_length),
            ("leaf_width", self.leaf_width),
            ("leaf_droop", self.leaf_droop),
        ] {
            if !(lo <= hi) {
                return bad(name);
            }
        }
        if !(self.strand_stiffness.0 > 0.0 && self.strand_stiffness.1 <= 1.0) {
            return bad("stiffness must lie in (0, 1]");
        }
        if self.leaf_count.0 > self.leaf_count.1 || self.leaf_count.1 == 0 {
            return bad("leaf_count range");
        }
        if !(self.leaf_length.0 > 0.0) {
            return bad("leaf length must be positive");
        }
        if !(self.effector_radius > 0.0) {
            return bad("effector radius must be positive");
        }
        if !(0.0..1.0).contains(&self.entanglement) || !(0.0..=1.0).contains(&self.relaxation) {
            return bad("entanglement must lie in [0,1) and relaxation in [0,1]");
        }
        let valid_scenario = match self.kind {
            PlantKind::Vine => matches!(
                self.scenario,
                Scenario::Base | Scenario::SparseVines | Scenario::SeparatedVines
            ),
            PlantKind::Dracaena => matches!(self.scenario, Scenario::Base | Scenario::GrownDracaena),
        };
        if !valid_scenario {
            return bad("scenario does not match plant kind");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strand {
    pub anchor_x: f64,
    pub width: u32,
    pub depth: f64,
    pub stiffness: f64,
    pub color: Rgb,
    /// Rest-shape lateral offset per row.
    pub rest: Vec<f64>,
    /// Current lateral offset per row.
    pub offsets: Vec<f64>,
}

impl Strand {
    pub fn position(&self, row: usize) -> f64 {
        self.anchor_x + self.offsets[row]
    }

    /// Half-open coverage test for a cell center at `x`.
    pub fn covers(&self, row: usize, x: f64) -> bool {
        let s = self.position(row);
        let hw = self.width as f64 / 2.0;
        x >= s - hw && x < s + hw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VineState {
    pub height: usize,
    pub width: usize,
    pub strands: Vec<Strand>,
    pub board_color: Rgb,
    pub entanglement: f64,
    pub relaxation: f64,
    pub effector_radius: f64,
    pub color_noise: f64,
    pub noise_seed: u64,
    /// Set on mirrored states so the per-cell noise pattern mirrors too.
    pub noise_flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    /// Rest angle, counterclockwise as viewed from above.
    pub base_angle: f64,
    pub deflection: f64,
    pub length: f64,
    pub width: f64,
    pub z_band: usize,
    pub base_height: f64,
    pub droop: f64,
    pub color: Rgb,
    pub inner_radius: f64,
}

impl Leaf {
    pub fn angle(&self) -> f64 {
        self.base_angle + self.deflection
    }

    pub fn height_at(&self, radius: f64) -> f64 {
        (self.base_height - self.droop * radius).max(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DracaenaState {
    pub height: usize,
    pub width: usize,
    pub center: (f64, f64),
    pub leaves: Vec<Leaf>,
    pub stem_radius: f64,
    pub stem_height: f64,
    pub stem_color: Rgb,
    pub ground_color: Rgb,
    /// Whole-plant wobble: rotation about `center`, then a shift.
    pub wobble_angle: f64,
    pub wobble_shift: (f64, f64),
    pub effector_radius: f64,
    pub color_noise: f64,
    pub noise_seed: u64,
    pub tau_reveal: f64,
    pub wobble_rotation_max: f64,
    pub wobble_shift_max: f64,
}

impl DracaenaState {
    pub fn wobble_pose(&self) -> RigidTransform2D {
        RigidTransform2D::about(self.wobble_angle, self.center.0, self.center.1, self.wobble_shift)
    }

    /// Workspace point of a leaf axis at `radius`, before wobble.
    fn leaf_point(&self, angle: f64, radius: f64) -> (f64, f64) {
        (
            self.center.0 + radius * angle.cos(),
            self.center.1 - radius * angle.sin(),
        )
    }

    /// Height of the top-most surface at a canonical (unwobbled) point,
    /// with the index of the leaf providing it (`usize::MAX` for the stem).
    fn surface_at(&self, p: (f64, f64)) -> Option<(f64, usize)> {
        let rx = p.0 - self.center.0;
        let ry = -(p.1 - self.center.1);
        let radius = (rx * rx + ry * ry).sqrt();
        let mut best: Option<(f64, usize)> = None;
        if radius <= self.stem_radius {
            best = Some((self.stem_height, usize::MAX));
        }
        for (i, leaf) in self.leaves.iter().enumerate() {
            let (s, c) = leaf.angle().sin_cos();
            let along = rx * c + ry * s;
            let perp = -rx * s + ry * c;
            if along >= leaf.inner_radius && along <= leaf.length && perp.abs() <= leaf.width / 2.0 {
                let h = leaf.height_at(along);
                if best.is_none_or(|(bh, _)| h > bh) {
                    best = Some((h, i));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantState {
    Vine(VineState),
    Dracaena(DracaenaState),
}

/// Per-cell rendering of a plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub color: Grid2D<Rgb>,
    /// cm above the board (vines) or the ground (Dracaena).
    pub height: Grid2D<f32>,
    pub valid: Grid2D<bool>,
}

impl Observation {
    pub fn shape(&self) -> (usize, usize) {
        self.color.shape()
    }

    /// Marks `shadow` cells invalid and overwrites them with sentinels.
    pub fn with_shadow(mut self, shadow: &Grid2D<bool>) -> Result<Self> {
        self.valid.check_shape(shadow.shape())?;
        for i in 0..shadow.len() {
            if shadow.data()[i] {
                self.valid.data_mut()[i] = false;
                self.color.data_mut()[i] = [0.0; 3];
                self.height.data_mut()[i] = 0.0;
            }
        }
        Ok(self)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self {
            color: self.color.flip_horizontal(),
            height: self.height.flip_horizontal(),
            valid: self.valid.flip_horizontal(),
        }
    }

    pub fn digest(&self) -> u64 {
        let colors = self.color.iter().flat_map(|c| c.iter().flat_map(|v| v.to_le_bytes()));
        let heights = self.height.iter().flat_map(|v| v.to_le_bytes());
        let valid = self.valid.iter().map(|&b| b as u8);
        crate::codec::fnv1a64(colors.chain(heights).chain(valid))
    }
}

fn cell_noise(seed: u64, r: usize, c: usize, ch: usize) -> f32 {
    let mut z = seed ^ ((r as u64) << 40) ^ ((c as u64) << 20) ^ ch as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ((z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32
}

fn noisy(color: Rgb, amp: f64, seed: u64, r: usize, c: usize) -> Rgb {
    let a = amp as f32;
    let mut out = color;
    for (ch, v) in out.iter_mut().enumerate() {
        *v = (*v + a * cell_noise(seed, r, c, ch)).clamp(0.0, 255.0);
    }
    out
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn green(rng: &mut Rng, lightness: f64) -> Rgb {
    let l = lightness.clamp(0.0, 1.0);
    [
        (35.0 + 45.0 * l + rng.gen_range(-8.0..8.0)) as f32,
        (105.0 + 70.0 * l + rng.gen_range(-8.0..8.0)) as f32,
        (25.0 + 35.0 * l + rng.gen_range(-6.0..6.0)) as f32,
    ]
}

/// Fresh plant for `cfg`, deterministic in `(cfg, rng seed)`.
pub fn sim_init(cfg: &SimConfig, rng: &mut Rng) -> Result<PlantState> {
    cfg.validate()?;
    let space = ActionSpace::for_kind(cfg.kind);
    Ok(match cfg.kind {
        PlantKind::Vine => PlantState::Vine(init_vine(cfg, &space, rng)),
        PlantKind::Dracaena => PlantState::Dracaena(init_dracaena(cfg, &space, rng)),
    })
}

fn init_vine(cfg: &SimConfig, space: &ActionSpace, rng: &mut Rng) -> VineState {
    let (height, width) = (space.grid_height, space.grid_width);
    let mut count = rng.gen_range(cfg.strand_count.0..=cfg.strand_count.1);
    if cfg.scenario == Scenario::SparseVines {
        count /= 2;
    }
    let bands: Vec<f64> = if cfg.scenario == Scenario::SeparatedVines {
        let n = cfg.separated_bands.max(1);
        let (lo, hi) = cfg.anchor_range;
        let span = hi - lo - cfg.separated_band_width;
        (0..n)
            .map(|i| lo + cfg.separated_band_width / 2.0 + span * (i as f64 + 0.5) / n as f64)
            .collect()
    } else {
        Vec::new()
    };
    let mut strands = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor_x = if bands.is_empty() {
            uniform(rng, cfg.anchor_range)
        } else {
            let b = bands[rng.gen_range(0..bands.len())];
            b + rng.gen_range(-0.5..0.5) * cfg.separated_band_width
        };
        let width = rng.gen_range(cfg.strand_width.0..=cfg.strand_width.1);
        let depth = uniform(rng, cfg.strand_depth);
        let stiffness = uniform(rng, cfg.strand_stiffness);
        // Stiffer strands are darker.
        let (klo, khi) = cfg.strand_stiffness;
        let stiff_frac = if khi > klo { (stiffness - klo) / (khi - klo) } else { 0.5 };
        let color = green(rng, 1.0 - stiff_frac);
        let amp = rng.gen_range(0.0..=cfg.strand_wiggle);
        let wavelength = rng.gen_range(15.0..40.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let lean = rng.gen_range(-0.04..0.04);
        let rest: Vec<f64> = (0..height)
            .map(|r| {
                let y = r as f64 + 0.5;
                amp * ((2.0 * PI * y / wavelength + phase).sin() - phase.sin()) + lean * y
            })
            .collect();
        strands.push(Strand {
            anchor_x,
            width,
            depth,
            stiffness,
            color,
            offsets: rest.clone(),
            rest,
        });
    }
    VineState {
        height,
        width,
        strands,
        board_color: BOARD_COLOR,
        entanglement: cfg.entanglement,
        relaxation: cfg.relaxation,
        effector_radius: cfg.effector_radius,
        color_noise: cfg.color_noise,
        noise_seed: rng.next_seed(),
        noise_flipped: false,
    }
}

fn init_dracaena(cfg: &SimConfig, space: &ActionSpace, rng: &mut Rng) -> DracaenaState {
    let (height, width) = (space.grid_height, space.grid_width);
    let center = (
        width as f64 / 2.0 + rng.gen_range(-1.0..1.0),
        height as f64 / 2.0 + rng.gen_range(-1.0..1.0),
    );
    let grown = cfg.scenario == Scenario::GrownDracaena;
    let n = rng.gen_range(cfg.leaf_count.0..=cfg.leaf_count.1);
    let offset = rng.gen_range(0.0..2.0 * PI);
    let nz = space.z_levels.len();
    let mut leaves = Vec::with_capacity(n);
    for i in 0..n {
        let base_angle = offset + 2.0 * PI * i as f64 / n as f64 + rng.gen_range(-0.2..0.2);
        let mut length = uniform(rng, cfg.leaf_length);
        if grown {
            length *= cfg.growth_factor;
        }
        let z_band = rng.gen_range(0..nz);
        let base_height = space.z_levels[z_band] + rng.gen_range(0.5..3.0);
        let droop = uniform(rng, cfg.leaf_droop);
        let lightness = rng.gen_range(0.2..0.9);
        let mut color = green(rng, lightness);
        if grown {
            color = [color[0] * 0.85 + 30.0, color[1] * 0.85 + 20.0, color[2] * 0.85];
        }
        leaves.push(Leaf {
            base_angle,
            deflection: 0.0,
            length,
            width: uniform(rng, cfg.leaf_width),
            z_band,
            base_height,
            droop,
            color,
            inner_radius: 2.0,
        });
    }
    DracaenaState {
        height,
        width,
        center,
        leaves,
        stem_radius: 2.5,
        stem_height: 40.0,
        stem_color: [92.0, 120.0, 60.0],
        ground_color: [112.0, 82.0, 52.0],
        wobble_angle: 0.0,
        wobble_shift: (0.0, 0.0),
        effector_radius: cfg.effector_radius,
        color_noise: cfg.color_noise,
        noise_seed: rng.next_seed(),
        tau_reveal: cfg.tau_reveal,
        wobble_rotation_max: cfg.wobble_rotation_deg.to_radians(),
        wobble_shift_max: cfg.wobble_shift,
    }
}

impl PlantState {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantState::Vine(_) => PlantKind::Vine,
            PlantState::Dracaena(_) => PlantKind::Dracaena,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            PlantState::Vine(v) => (v.height, v.width),
            PlantState::Dracaena(d) => (d.height, d.width),
        }
    }
}

/// Renders the current plant.
pub fn render(state: &PlantState) -> Observation {
    match state {
        PlantState::Vine(v) => render_vine(v),
        PlantState::Dracaena(d) => render_dracaena(d, true),
    }
}

/// Index of the front-most strand covering each cell.
pub fn vine_front_strand(v: &VineState) -> Grid2D<Option<usize>> {
    let mut front: Grid2D<Option<usize>> = Grid2D::filled(v.height, v.width, None);
    for r in 0..v.height {
        for (i, s) in v.strands.iter().enumerate() {
            let pos = s.position(r);
            let hw = s.width as f64 / 2.0;
            // cells with center in [pos - hw, pos + hw)
            let c_lo = (pos - hw - 0.5).ceil().max(0.0) as isize;
            let c_hi = (pos + hw - 0.5).ceil() as isize - 1;
            for c in c_lo..=c_hi.min(v.width as isize - 1) {
                let cell = &mut front[(r, c as usize)];
                if cell.is_none_or(|j| s.depth > v.strands[j].depth) {
                    *cell = Some(i);
                }
            }
        }
    }
    front
}

fn render_vine(v: &VineState) -> Observation {
    let front = vine_front_strand(v);
    let noise_col = |c: usize| if v.noise_flipped { v.width - 1 - c } else { c };
    let color = Grid2D::from_fn(v.height, v.width, |r, c| {
        let base = match front[(r, c)] {
            Some(i) => v.strands[i].color,
            None => v.board_color,
        };
        noisy(base, v.color_noise, v.noise_seed, r, noise_col(c))
    });
    let height = front.map(|f| f.map_or(0.0, |i| v.strands[i].depth as f32));
    Observation {
        color,
        height,
        valid: Grid2D::filled(v.height, v.width, true),
    }
}

fn render_dracaena(d: &DracaenaState, wobbled: bool) -> Observation {
    let inv = if wobbled {
        d.wobble_pose().inverse()
    } else {
        RigidTransform2D::identity()
    };
    let mut color = Grid2D::filled(d.height, d.width, d.ground_color);
    let mut height = Grid2D::filled(d.height, d.width, 0.0f32);
    for r in 0..d.height {
        for c in 0..d.width {
            let p = inv.apply((c as f64 + 0.5, r as f64 + 0.5));
            let base = match d.surface_at(p) {
                Some((h, i)) => {
                    height[(r, c)] = h as f32;
                    if i == usize::MAX {
                        d.stem_color
                    } else {
                        d.leaves[i].color
                    }
                }
                None => d.ground_color,
            };
            color[(r, c)] = noisy(base, d.color_noise, d.noise_seed, r, c);
        }
    }
    Observation {
        color,
        height,
        valid: Grid2D::filled(d.height, d.width, true),
    }
}

/// Executes one push and returns the successor state.
pub fn apply_push(state: &PlantState, a: &ActionSpec, space: &ActionSpace, rng: &mut Rng) -> Result<PlantState> {
    if space.kind != state.kind() {
        return Err(Error::Config("action space does not match plant kind".into()));
    }
    space.validate(a)?;
    Ok(match state {
        PlantState::Vine(v) => PlantState::Vine(push_vine(v, a, space)),
        PlantState::Dracaena(d) => PlantState::Dracaena(push_dracaena(d, a, space, rng)),
    })
}

fn push_vine(v: &VineState, a: &ActionSpec, space: &ActionSpace) -> VineState {
    let mut next = v.clone();
    let theta = space.theta(a);
    let lateral = theta.cos();
    let sign = if lateral.abs() < 1e-9 { 0.0 } else { lateral.signum() };
    if sign != 0.0 {
        let cap = Capsule {
            a: (a.x, a.y),
            b: space.endpoint(a),
            radius: v.effector_radius,
        };
        let (ylo, yhi) = cap.y_range();
        let r_lo = ylo.floor().max(0.0) as usize;
        let r_hi = (yhi.ceil() as usize).min(v.height);
        // (contact row, signed increment) for each directly contacted strand
        let mut hits: Vec<Option<(usize, f64)>> = vec![None; v.strands.len()];
        for (j, s) in v.strands.iter().enumerate() {
            let hw = s.width as f64 / 2.0;
            let mut contact = None;
            let mut need: f64 = 0.0;
            for row in r_lo..r_hi {
                let Some((lo, hi)) = cap.row_span(row as f64 + 0.5) else {
                    continue;
                };
                let pos = s.position(row);
                if pos - hw < hi && pos + hw > lo {
                    contact.get_or_insert(row);
                    let n = if sign > 0.0 { hi + hw - pos } else { pos - (lo - hw) };
                    need = need.max(n);
                }
            }
            if let Some(c) = contact {
                hits[j] = Some((c, sign * need));
            }
        }
        let mut increments: Vec<Vec<(usize, f64)>> = vec![Vec::new(); v.strands.len()];
        for (j, hit) in hits.iter().enumerate() {
            let Some((c, inc)) = *hit else { continue };
            increments[j].push((c, inc));
            let pos = v.strands[j].position(c);
            for (k, other) in v.strands.iter().enumerate() {
                if k != j && hits[k].is_none() && (other.position(c) - pos).abs() <= 3.0 {
                    increments[k].push((c, v.entanglement * inc));
                }
            }
        }
        for (s, incs) in next.strands.iter_mut().zip(&increments) {
            for &(c, inc) in incs {
                let mut w = 1.0;
                for row in c..v.height {
                    s.offsets[row] += inc * w;
                    w *= s.stiffness;
                }
            }
        }
    }
    let keep = 1.0 - v.relaxation;
    for s in &mut next.strands {
        for (o, r) in s.offsets.iter_mut().zip(&s.rest) {
            *o = r + (*o - r) * keep;
        }
    }
    next
}

/// Distance along `u` from `p` before a disk of radius `r` at `c` is hit,
/// capped at `len`.
fn stem_stop(p: (f64, f64), u: (f64, f64), len: f64, c: (f64, f64), r: f64) -> f64 {
    let (dx, dy) = (p.0 - c.0, p.1 - c.1);
    let b = dx * u.0 + dy * u.1;
    let cc = dx * dx + dy * dy - r * r;
    if cc <= 0.0 {
        return 0.0;
    }
    let disc = b * b - cc;
    if disc < 0.0 || b > 0.0 {
        return len;
    }
    (-b - disc.sqrt()).clamp(0.0, len)
}

const BASE_LEVER: f64 = 8.0;

fn push_dracaena(d: &DracaenaState, a: &ActionSpec, space: &ActionSpace, rng: &mut Rng) -> DracaenaState {
    let mut next = d.clone();
    let start = (a.x, a.y);
    let (ux, uy) = push_direction(space.theta(a));
    let pose = d.wobble_pose();
    let reach = d.effector_radius;
    // The stem is rigid: the effector stops where it meets it.
    let stem = pose.apply(d.center);
    let travel = stem_stop(start, (ux, uy), a.length, stem, d.stem_radius + reach);
    let end = (start.0 + travel * ux, start.1 + travel * uy);
    for leaf in next.leaves.iter_mut() {
        if leaf.z_band != a.z_index {
            continue;
        }
        let psi = leaf.angle();
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut rho = leaf.inner_radius;
        while rho <= leaf.length {
            let p = pose.apply(d.leaf_point(psi, rho));
            if dist_to_segment(p, start, end) <= reach + leaf.width / 2.0 {
                sum += rho;
                n += 1;
            }
            rho += 0.5;
        }
        if n == 0 {
            continue;
        }
        let rho_c = sum / n as f64;
        let contact = pose.apply(d.leaf_point(psi, rho_c));
        // Counterclockwise tangent of the wobbled leaf, workspace frame.
        let visual = psi - d.wobble_angle;
        let (tx, ty) = (-visual.sin(), -visual.cos());
        // Tangential offset of the effector's final position from the leaf.
        let offset = (end.0 - contact.0) * tx + (end.1 - contact.1) * ty;
        let along = ux * tx + uy * ty;
        let clear = reach + leaf.width / 2.0;
        // Carried with the effector until it clears the end disk, in
        // proportion to the tangential part of the push; radial pushes slide
        // along the leaf.
        let s = along.signum();
        let shift = s * (s * offset + clear).max(0.0) * (along.abs() / 0.7).min(1.0);
        // Leaves are stiff near the base: the lever arm never drops below
        // `BASE_LEVER` cm.
        let delta = shift / rho_c.max(BASE_LEVER);
        leaf.deflection = (leaf.deflection + delta).clamp(-FRAC_PI_2, FRAC_PI_2);
    }
    let jitter = d.wobble_rotation_max;
    next.wobble_angle = (d.wobble_angle + rng.gen_range(-jitter..=jitter)).clamp(-2.0 * jitter, 2.0 * jitter);
    let s = d.wobble_shift_max;
    let (mut sx, mut sy) = (
        d.wobble_shift.0 + rng.gen_range(-s..=s),
        d.wobble_shift.1 + rng.gen_range(-s..=s),
    );
    let norm = (sx * sx + sy * sy).sqrt();
    let cap = 2.0 * s;
    if norm > cap {
        sx *= cap / norm;
        sy *= cap / norm;
    }
    next.wobble_shift = (sx, sy);
    next
}

/// Cells covered by any strand.
pub fn vine_occupancy(v: &VineState) -> Grid2D<bool> {
    vine_front_strand(v).map(|f| f.is_some())
}

/// Top-surface height with the wobble removed.
pub fn canonical_height(d: &DracaenaState) -> Grid2D<f32> {
    render_dracaena(d, false).height
}

/// Height of `d` rendered under another plant's wobble pose.
fn height_under_pose(d: &DracaenaState, pose: &RigidTransform2D) -> Grid2D<f32> {
    let inv = pose.inverse();
    Grid2D::from_fn(d.height, d.width, |r, c| {
        d.surface_at(inv.apply((c as f64 + 0.5, r as f64 + 0.5)))
            .map_or(0.0, |(h, _)| h as f32)
    })
}

/// Simulator ground truth for the space revealed between two states.
///
/// Masks are in the frame of the `before` observation. For Dracaena the
/// after-state is rendered under the before-state's wobble, so only leaf
/// motion counts.
pub fn truth_reveal(before: &PlantState, after: &PlantState) -> Result<RevealMask> {
    let revealed = match (before, after) {
        (PlantState::Vine(b), PlantState::Vine(a)) => {
            vine_occupancy(b).zip_map(&vine_occupancy(a), |&was, &is| was && !is)?
        }
        (PlantState::Dracaena(b), PlantState::Dracaena(a)) => {
            let tau = b.tau_reveal as f32;
            let pose = b.wobble_pose();
            height_under_pose(b, &pose).zip_map(&height_under_pose(a, &pose), |&hb, &ha| hb - ha >= tau)?
        }
        _ => return Err(Error::Config("states are of different plant kinds".into())),
    };
    Ok(RevealMask {
        revealed,
        source: RevealSource::Oracle,
        warning: false,
    })
}

/// Horizontal mirror of a vine state about `x = axis_x`.
pub fn mirror_vine(v: &VineState, axis_x: f64) -> VineState {
    let mut m = v.clone();
    for s in &mut m.strands {
        s.anchor_x = 2.0 * axis_x - s.anchor_x;
        s.rest.iter_mut().for_each(|o| *o = -*o);
        s.offsets.iter_mut().for_each(|o| *o = -*o);
    }
    m.noise_flipped = !v.noise_flipped;
    m
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"PPGS";
const SNAPSHOT_VERSION: u32 = 1;

fn put_rgb(w: &mut Writer, c: Rgb) {
    w.f32(c[0]).f32(c[1]).f32(c[2]);
}

fn get_rgb(r: &mut Reader) -> Result<Rgb> {
    Ok([r.f32()?, r.f32()?, r.f32()?])
}

/// Versioned little-endian snapshot of a plant state.
pub fn encode_state(state: &PlantState) -> Vec<u8> {
    let mut w = Writer::new();
    w.magic(SNAPSHOT_MAGIC).u32(SNAPSHOT_VERSION).u8(state.kind().code());
    match state {
        PlantState::Vine(v) => {
            w.u32(v.height as u32).u32(v.width as u32);
            put_rgb(&mut w, v.board_color);
            w.f64(v.entanglement)
                .f64(v.relaxation)
                .f64(v.effector_radius)
                .f64(v.color_noise)
                .u64(v.noise_seed)
                .u8(v.noise_flipped as u8)
                .u32(v.strands.len() as u32);
            for s in &v.strands {
                w.f64(s.anchor_x).u32(s.width).f64(s.depth).f64(s.stiffness);
                put_rgb(&mut w, s.color);
                w.f64s(&s.rest).f64s(&s.offsets);
            }
        }
        PlantState::Dracaena(d) => {
            w.u32(d.height as u32)
                .u32(d.width as u32)
                .f64(d.center.0)
                .f64(d.center.1)
                .f64(d.stem_radius)
                .f64(d.stem_height);
            put_rgb(&mut w, d.stem_color);
            put_rgb(&mut w, d.ground_color);
            w.f64(d.wobble_angle)
                .f64(d.wobble_shift.0)
                .f64(d.wobble_shift.1)
                .f64(d.effector_radius)
                .f64(d.color_noise)
                .u64(d.noise_seed)
                .f64(d.tau_reveal)
                .f64(d.wobble_rotation_max)
                .f64(d.wobble_shift_max)
                .u32(d.leaves.len() as u32);
            for l in &d.leaves {
                w.f64(l.base_angle)
                    .f64(l.deflection)
                    .f64(l.length)
                    .f64(l.width)
                    .u32(l.z_band as u32)
                    .f64(l.base_height)
                    .f64(l.droop);
                put_rgb(&mut w, l.color);
                w.f64(l.inner_radius);
            }
        }
    }
    w.into_bytes()
}

pub fn decode_state(bytes: &[u8]) -> Result<PlantState> {
    let mut r = Reader::new(bytes);
    r.expect_magic(SNAPSHOT_MAGIC)?;
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let state = match PlantKind::from_code(r.u8()?)? {
        PlantKind::Vine => {
            let height = r.u32()? as usize;
            let width = r.u32()? as usize;
            let board_color = get_rgb(&mut r)?;
            let entanglement = r.f64()?;
            let relaxation = r.f64()?;
            let effector_radius = r.f64()?;
            let color_noise = r.f64()?;
            let noise_seed = r.u64()?;
            let noise_flipped = r.u8()? != 0;
            let n = r.u32()? as usize;
            let mut strands = Vec::with_capacity(n);
            for _ in 0..n {
                let anchor_x = r.f64()?;
                let width = r.u32()?;
                let depth = r.f64()?;
                let stiffness = r.f64()?;
                let color = get_rgb(&mut r)?;
                let rest = r.f64s()?;
                let offsets = r.f64s()?;
                if rest.len() != height || offsets.len() != height {
                    return Err(Error::Format("strand does not span the board".into()));
                }
                strands.push(Strand {
                    anchor_x,
                    width,
                    depth,
                    stiffness,
                    color,
                    rest,
                    offsets,
                });
            }
            PlantState::Vine(VineState {
                height,
                width,
                strands,
                board_color,
                entanglement,
                relaxation,
                effector_radius,
                color_noise,
                noise_seed,
                noise_flipped,
            })
        }
        PlantKind::Dracaena => {
            let height = r.u32()? as usize;
            let width = r.u32()? as usize;
            let center = (r.f64()?, r.f64()?);
            let stem_radius = r.f64()?;
            let stem_height = r.f64()?;
            let stem_color = get_rgb(&mut r)?;
            let ground_color = get_rgb(&mut r)?;
            let wobble_angle = r.f64()?;
            let wobble_shift = (r.f64()?, r.f64()?);
            let effector_radius = r.f64()?;
            let color_noise = r.f64()?;
            let noise_seed = r.u64()?;
            let tau_reveal = r.f64()?;
            let wobble_rotation_max = r.f64()?;
            let wobble_shift_max = r.f64()?;
            let n = r.u32()? as usize;
            let mut leaves = Vec::with_capacity(n);
            for _ in 0..n {
                leaves.push(Leaf {
                    base_angle: r.f64()?,
                    deflection: r.f64()?,
                    length: r.f64()?,
                    width: r.f64()?,
                    z_band: r.u32()? as usize,
                    base_height: r.f64()?,
                    droop: r.f64()?,
                    color: get_rgb(&mut r)?,
                    inner_radius: r.f64()?,
                });
            }
            PlantState::Dracaena(DracaenaState {
                height,
                width,
                center,
                leaves,
                stem_radius,
                stem_height,
                stem_color,
                ground_color,
                wobble_angle,
                wobble_shift,
                effector_radius,
                color_noise,
                noise_seed,
                tau_reveal,
                wobble_rotation_max,
                wobble_shift_max,
            })
        }
    };
    if !r.is_done() {
        return Err(Error::Format("trailing bytes after snapshot".into()));
    }
    Ok(state)
}
