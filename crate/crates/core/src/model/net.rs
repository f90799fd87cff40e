//! Encoder/decoder network with skip connections and an action branch.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{self, conv_backward, conv_forward, im2col, relu, relu_back, tconv_backward, tconv_forward, Geo};
use super::tensor::{matmul, Scalar, Tensor};
use crate::dataset::{Sample, CROP, MAX_DROP};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::space::{ActionSpace, PlantKind};

const KERNEL: usize = 3;
const PAD: usize = 1;
pub const RGB_SCALE: f32 = 1.0 / 255.0;
pub const HEIGHT_SCALE: f32 = 1.0 / 50.0;
/// Endpoint features are divided by the push length.
pub const ENDPOINT_SCALE: f32 = 1.0 / 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoAction,
    NoRgb,
    NoHeight,
    Blind,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoAction,
        Ablation::NoRgb,
        Ablation::NoHeight,
        Ablation::Blind,
    ];

    pub fn uses_rgb(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoAction | Ablation::NoHeight)
    }

    pub fn uses_height(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoAction | Ablation::NoRgb)
    }

    pub fn uses_action(self) -> bool {
        self != Ablation::NoAction
    }

    pub fn input_channels(self) -> usize {
        3 * self.uses_rgb() as usize + self.uses_height() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoAction => "no-action",
            Ablation::NoRgb => "no-rgb",
            Ablation::NoHeight => "no-height",
            Ablation::Blind => "blind",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation '{s}'")))
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&a| a == self).unwrap() as u8
    }

    pub fn from_code(c: u8) -> Result<Self> {
        Self::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown ablation code {c}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub ablation: Ablation,
    /// Square input side.
    pub input_size: usize,
    pub encoder_channels: Vec<usize>,
    pub encoder_strides: Vec<usize>,
    /// Length of the flat action feature vector.
    pub action_dim: usize,
    pub action_channels: usize,
    /// 1 (reveal logit) or 2 (plus height-drop regression).
    pub out_channels: usize,
}

impl ArchConfig {
    /// Full-size predictor for a plant's action space.
    pub fn new(space: &ActionSpace, ablation: Ablation) -> Self {
        Self {
            ablation,
            input_size: CROP,
            encoder_channels: vec![16, 32, 64, 64, 64],
            encoder_strides: vec![2, 2, 2, 2, 1],
            action_dim: space.directions.len() + space.z_levels.len() + 2,
            action_channels: 32,
            out_channels: if space.kind == PlantKind::Dracaena { 2 } else { 1 },
        }
    }

    pub fn with_widths(mut self, channels: Vec<usize>, action_channels: usize) -> Self {
        self.encoder_channels = channels;
        self.action_channels = action_channels;
        self
    }

    pub fn input_channels(&self) -> usize {
        self.ablation.input_channels()
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial side before and after each encoder level.
    pub fn level_sizes(&self) -> Vec<(usize, usize)> {
        let mut s = self.input_size;
        self.encoder_strides
            .iter()
            .map(|&st| {
                let o = ops::conv_out(s, KERNEL, st, PAD);
                let r = (s, o);
                s = o;
                r
            })
            .collect()
    }

    pub fn bottleneck(&self) -> usize {
        self.level_sizes().last().map_or(self.input_size, |l| l.1)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels();
        if l == 0 || self.encoder_strides.len() != l {
            return Err(Error::Config("encoder channels and strides must be non-empty and equal length".into()));
        }
        if self.encoder_channels.contains(&0) || self.action_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(1..=2).contains(&self.out_channels) {
            return Err(Error::Config(format!("out_channels {} not in 1..=2", self.out_channels)));
        }
        if self.ablation.uses_action() && self.action_dim == 0 {
            return Err(Error::Config("action branch needs a non-empty feature vector".into()));
        }
        let mut s = self.input_size;
        for &st in &self.encoder_strides {
            if !(1..=2).contains(&st) || !s.is_multiple_of(st) || s < 2 {
                return Err(Error::Config(format!("stride {st} does not divide side {s}")));
            }
            s /= st;
        }
        Ok(())
    }

    fn dec_io(&self, j: usize) -> (usize, usize) {
        let l = self.levels();
        let ch = &self.encoder_channels;
        let cin = if j + 1 == l {
            ch[l - 1] + if self.ablation.uses_action() { self.action_channels } else { 0 }
        } else {
            2 * ch[j]
        };
        let cout = if j == 0 { self.out_channels } else { ch[j - 1] };
        (cin, cout)
    }

    fn enc_io(&self, i: usize) -> (usize, usize) {
        let cin = if i == 0 { self.input_channels() } else { self.encoder_channels[i - 1] };
        (cin, self.encoder_channels[i])
    }

    /// Parameter tensors in declaration order: name, dims, fan-in.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>, usize)> {
        let kk = KERNEL * KERNEL;
        let mut out = Vec::new();
        let mut push = |name: String, w: Vec<usize>, bias: usize, fan: usize| {
            out.push((format!("{name}.weight"), w, fan));
            out.push((format!("{name}.bias"), vec![bias], fan));
        };
        for i in 0..self.levels() {
            let (ci, co) = self.enc_io(i);
            push(format!("enc{i}"), vec![co, ci, KERNEL, KERNEL], co, ci * kk);
        }
        if self.ablation.uses_action() {
            let b = self.bottleneck();
            let (a, ca) = (self.action_dim, self.action_channels);
            push("act.dense".into(), vec![ca * b * b, a], ca * b * b, a);
            push("act.up0".into(), vec![ca, ca, KERNEL, KERNEL], ca, ca * kk);
            push("act.up1".into(), vec![ca, ca, KERNEL, KERNEL], ca, ca * kk);
        }
        for j in (0..self.levels()).rev() {
            let (ci, co) = self.dec_io(j);
            let s = self.encoder_strides[j];
            push(format!("dec{j}"), vec![ci, co, KERNEL, KERNEL], co, (ci * kk / (s * s)).max(1));
        }
        out
    }
}

/// Tensor indices (weight; bias is the next one).
struct Layout {
    enc: Vec<usize>,
    act: Option<[usize; 3]>,
    dec: Vec<usize>,
}

impl Layout {
    fn of(arch: &ArchConfig) -> Self {
        let l = arch.levels();
        let enc: Vec<usize> = (0..l).map(|i| 2 * i).collect();
        let mut next = 2 * l;
        let act = arch.ablation.uses_action().then(|| {
            let a = [next, next + 2, next + 4];
            next += 6;
            a
        });
        let mut dec = vec![0; l];
        for j in (0..l).rev() {
            dec[j] = next;
            next += 2;
        }
        Self { enc, act, dec }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub arch: ArchConfig,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// He-normal weights (unit-gain on the output layer), zero biases.
    pub fn init(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        let last = shapes.len() - 2;
        let tensors = shapes
            .iter()
            .enumerate()
            .map(|(i, (name, dims, fan))| {
                if name.ends_with(".bias") {
                    return Tensor::zeros(dims);
                }
                let gain = if i == last { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / (*fan).max(1) as f64).sqrt()).expect("finite std");
                let data = (0..dims.iter().product::<usize>()).map(|_| T::of(normal.sample(rng))).collect();
                Tensor::from_vec(dims, data).expect("shape")
            })
            .collect();
        Ok(Self { arch: arch.clone(), tensors })
    }

    pub fn from_tensors(arch: ArchConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::Dimension {
                expected: format!("{} tensors", shapes.len()),
                found: tensors.len().to_string(),
            });
        }
        for ((name, dims, _), t) in shapes.iter().zip(&tensors) {
            if t.dims() != dims.as_slice() {
                return Err(Error::Dimension {
                    expected: format!("{name} {dims:?}"),
                    found: format!("{:?}", t.dims()),
                });
            }
        }
        Ok(Self { arch, tensors })
    }

    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.dims())).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    fn w(&self, i: usize) -> &[T] {
        self.tensors[i].data()
    }
}

/// Network inputs and targets for a set of samples, channel-major.
#[derive(Debug, Clone)]
pub struct Batch<T = f32> {
    pub n: usize,
    /// `cin x n x S x S`, already multiplied by the valid mask.
    pub image: Vec<T>,
    /// `n x action_dim`.
    pub action: Vec<T>,
    pub valid: Vec<bool>,
    pub label: Vec<bool>,
    /// Height drop scaled to [0, 1]; present when every sample carries it.
    pub drop: Option<Vec<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(arch: &ArchConfig, samples: &[&Sample]) -> Result<Self> {
        let n = samples.len();
        let s = arch.input_size;
        let px = s * s;
        for smp in samples {
            smp.valid.check_shape((s, s))?;
            smp.color.check_shape((s, s))?;
            smp.height.check_shape((s, s))?;
            smp.label.check_shape((s, s))?;
            let a = smp.action_feat.dir_onehot.len() + smp.action_feat.z_onehot.len() + 2;
            if arch.ablation.uses_action() && a != arch.action_dim {
                return Err(Error::Config(format!(
                    "action features have length {a}, model expects {}",
                    arch.action_dim
                )));
            }
        }
        let cin = arch.input_channels();
        let mut image = vec![T::zero(); cin * n * px];
        let mut plane = |c: usize, i: usize, f: &dyn Fn(usize) -> f32| {
            let dst = &mut image[(c * n + i) * px..][..px];
            for (k, d) in dst.iter_mut().enumerate() {
                *d = T::of(f(k) as f64);
            }
        };
        for (i, smp) in samples.iter().enumerate() {
            let valid = smp.valid.data();
            let mut c = 0;
            if arch.ablation.uses_rgb() {
                for ch in 0..3 {
                    plane(c, i, &|k| if valid[k] { smp.color.data()[k][ch] * RGB_SCALE } else { 0.0 });
                    c += 1;
                }
            }
            if arch.ablation.uses_height() {
                plane(c, i, &|k| if valid[k] { smp.height.data()[k] * HEIGHT_SCALE } else { 0.0 });
            }
        }
        let action = if arch.ablation.uses_action() {
            samples
                .iter()
                .flat_map(|smp| smp.action_feat.to_vec(ENDPOINT_SCALE))
                .map(|v| T::of(v as f64))
                .collect()
        } else {
            Vec::new()
        };
        let drop = samples
            .iter()
            .map(|smp| smp.aux_height_drop.as_ref())
            .collect::<Option<Vec<_>>>()
            .map(|gs| {
                gs.iter()
                    .flat_map(|g| g.data().iter().map(|&d| T::of((d / MAX_DROP) as f64)))
                    .collect()
            });
        Ok(Self {
            n,
            image,
            action,
            valid: samples.iter().flat_map(|smp| smp.valid.data().iter().copied()).collect(),
            label: samples.iter().flat_map(|smp| smp.label.data().iter().copied()).collect(),
            drop,
        })
    }
}

#[derive(Debug, Clone, Default)]
struct Cache<T> {
    enc_cols: Vec<Vec<T>>,
    enc_out: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
    dec_in: Vec<Vec<T>>,
    dec_out: Vec<Vec<T>>,
}

/// Forward result: per-sample `S x S` maps stacked along the batch.
#[derive(Debug, Clone)]
pub struct Forward<T = f32> {
    pub logits: Vec<T>,
    pub aux: Option<Vec<T>>,
    cache: Option<Cache<T>>,
}

fn check_batch<T: Scalar>(p: &ModelParams<T>, b: &Batch<T>) -> Result<()> {
    let px = p.arch.input_size * p.arch.input_size;
    let want_img = p.arch.input_channels() * b.n * px;
    let want_act = if p.arch.ablation.uses_action() { b.n * p.arch.action_dim } else { 0 };
    if b.image.len() != want_img || b.action.len() != want_act || b.valid.len() != b.n * px {
        return Err(Error::Config(format!(
            "batch does not match the {} architecture",
            p.arch.ablation.name()
        )));
    }
    Ok(())
}

fn dense_to_cnhw<T: Scalar>(z: &[T], ca: usize, n: usize, pix: usize) -> Vec<T> {
    let mut y = vec![T::zero(); z.len()];
    for c in 0..ca {
        for q in 0..pix {
            for i in 0..n {
                y[(c * n + i) * pix + q] = z[(c * pix + q) * n + i];
            }
        }
    }
    y
}

fn cnhw_to_dense<T: Scalar>(y: &[T], ca: usize, n: usize, pix: usize) -> Vec<T> {
    let mut z = vec![T::zero(); y.len()];
    for c in 0..ca {
        for q in 0..pix {
            for i in 0..n {
                z[(c * pix + q) * n + i] = y[(c * n + i) * pix + q];
            }
        }
    }
    z
}

pub fn forward<T: Scalar>(p: &ModelParams<T>, b: &Batch<T>, keep: bool) -> Result<Forward<T>> {
    check_batch(p, b)?;
    let arch = &p.arch;
    let lay = Layout::of(arch);
    let sizes = arch.level_sizes();
    let n = b.n;
    let l = arch.levels();
    let mut cache = Cache::default();

    let mut x = b.image.clone();
    let mut enc_out = Vec::with_capacity(l);
    for i in 0..l {
        let (ci, co) = arch.enc_io(i);
        let (big, _) = sizes[i];
        let g = Geo::new(KERNEL, arch.encoder_strides[i], PAD, (big, big));
        let cols = im2col(&x, ci, n, &g);
        let mut y = conv_forward(&cols, p.w(lay.enc[i]), p.w(lay.enc[i] + 1), co, n * g.small.0 * g.small.1);
        relu(&mut y);
        if keep {
            cache.enc_cols.push(cols);
        }
        enc_out.push(y.clone());
        x = y;
    }

    let mut prev = enc_out[l - 1].clone();
    if let Some([wd, w0, w1]) = lay.act {
        let bs = arch.bottleneck();
        let (ca, pix, ad) = (arch.action_channels, bs * bs, arch.action_dim);
        let mut z = vec![T::zero(); ca * pix * n];
        matmul(ca * pix, ad, n, p.w(wd), false, &b.action, true, &mut z, false);
        ops::add_bias(&mut z, p.w(wd + 1));
        let mut a0 = dense_to_cnhw(&z, ca, n, pix);
        relu(&mut a0);
        let g = Geo::new(KERNEL, 1, PAD, (bs, bs));
        let mut a1 = tconv_forward(&a0, p.w(w0), p.w(w0 + 1), ca, ca, n, &g);
        relu(&mut a1);
        let mut a2 = tconv_forward(&a1, p.w(w1), p.w(w1 + 1), ca, ca, n, &g);
        relu(&mut a2);
        prev.extend_from_slice(&a2);
        if keep {
            cache.act = vec![a0, a1, a2];
        }
    }

    cache.dec_in = vec![Vec::new(); l];
    cache.dec_out = vec![Vec::new(); l];
    let mut out = Vec::new();
    for j in (0..l).rev() {
        let (ci, co) = arch.dec_io(j);
        let (big, _) = sizes[j];
        let g = Geo::new(KERNEL, arch.encoder_strides[j], PAD, (big, big));
        let mut y = tconv_forward(&prev, p.w(lay.dec[j]), p.w(lay.dec[j] + 1), ci, co, n, &g);
        if j > 0 {
            relu(&mut y);
        }
        let input = std::mem::take(&mut prev);
        if j > 0 {
            prev = [y.as_slice(), enc_out[j - 1].as_slice()].concat();
        }
        if keep {
            cache.dec_in[j] = input;
            if j > 0 {
                cache.dec_out[j] = y.clone();
            }
        }
        if j == 0 {
            out = y;
        }
    }
    if keep {
        cache.enc_out = enc_out;
    }

    let plane = n * arch.input_size * arch.input_size;
    let aux = (arch.out_channels == 2).then(|| out[plane..].to_vec());
    out.truncate(plane);
    Ok(Forward {
        logits: out,
        aux,
        cache: keep.then_some(cache),
    })
}

/// Parameter gradients given output gradients of a cached forward pass.
pub fn backward<T: Scalar>(
    p: &ModelParams<T>,
    b: &Batch<T>,
    f: &Forward<T>,
    dlogits: &[T],
    daux: Option<&[T]>,
) -> Result<Vec<Tensor<T>>> {
    let cache = f
        .cache
        .as_ref()
        .ok_or_else(|| Error::Config("backward needs a forward pass run with keep = true".into()))?;
    let arch = &p.arch;
    let lay = Layout::of(arch);
    let sizes = arch.level_sizes();
    let n = b.n;
    let l = arch.levels();
    let ch = &arch.encoder_channels;
    let mut grads = p.zeros_like();
    let mut denc: Vec<Vec<T>> = cache.enc_out.iter().map(|e| vec![T::zero(); e.len()]).collect();

    let mut dy = dlogits.to_vec();
    if arch.out_channels == 2 {
        match daux {
            Some(d) => dy.extend_from_slice(d),
            None => dy.extend(std::iter::repeat_n(T::zero(), dlogits.len())),
        }
    }
    let mut dact = Vec::new();
    for j in 0..l {
        let (ci, co) = arch.dec_io(j);
        let (big, _) = sizes[j];
        let g = Geo::new(KERNEL, arch.encoder_strides[j], PAD, (big, big));
        if j > 0 {
            relu_back(&mut dy, &cache.dec_out[j]);
        }
        let (gw, rest) = grads.split_at_mut(lay.dec[j] + 1);
        let dx = tconv_backward(
            &dy,
            &cache.dec_in[j],
            p.w(lay.dec[j]),
            ci,
            co,
            n,
            &g,
            gw[lay.dec[j]].data_mut(),
            rest[0].data_mut(),
        );
        let skip = if j + 1 == l { l - 1 } else { j };
        let k = denc[skip].len();
        // Decoder input is [upsampled, skip] except at the bottleneck: [encoder, action].
        if j + 1 == l {
            add_into(&mut denc[skip], &dx[..k]);
            dact = dx[k..].to_vec();
        } else {
            let up = dx.len() - k;
            debug_assert_eq!(up, ch[j] * n * sizes[j].1 * sizes[j].1);
            add_into(&mut denc[skip], &dx[up..]);
            dy = dx[..up].to_vec();
        }
    }

    if let Some([wd, w0, w1]) = lay.act {
        let bs = arch.bottleneck();
        let (ca, pix, ad) = (arch.action_channels, bs * bs, arch.action_dim);
        let g = Geo::new(KERNEL, 1, PAD, (bs, bs));
        let mut d2 = dact;
        relu_back(&mut d2, &cache.act[2]);
        let (gw, rest) = grads.split_at_mut(w1 + 1);
        let mut d1 = tconv_backward(&d2, &cache.act[1], p.w(w1), ca, ca, n, &g, gw[w1].data_mut(), rest[0].data_mut());
        relu_back(&mut d1, &cache.act[1]);
        let (gw, rest) = grads.split_at_mut(w0 + 1);
        let mut d0 = tconv_backward(&d1, &cache.act[0], p.w(w0), ca, ca, n, &g, gw[w0].data_mut(), rest[0].data_mut());
        relu_back(&mut d0, &cache.act[0]);
        let dz = cnhw_to_dense(&d0, ca, n, pix);
        matmul(ca * pix, n, ad, &dz, false, &b.action, false, grads[wd].data_mut(), true);
        ops::bias_grad(&dz, grads[wd + 1].data_mut());
    }

    for i in (0..l).rev() {
        let (ci, co) = arch.enc_io(i);
        let (big, small) = sizes[i];
        let g = Geo::new(KERNEL, arch.encoder_strides[i], PAD, (big, big));
        let mut d = std::mem::take(&mut denc[i]);
        relu_back(&mut d, &cache.enc_out[i]);
        let (gw, rest) = grads.split_at_mut(lay.enc[i] + 1);
        let dcols = conv_backward(
            &d,
            &cache.enc_cols[i],
            p.w(lay.enc[i]),
            co,
            n * small * small,
            gw[lay.enc[i]].data_mut(),
            rest[0].data_mut(),
            i > 0,
        );
        if let Some(dc) = dcols {
            let dx = ops::col2im(&dc, ci, n, &g);
            add_into(&mut denc[i - 1], &dx);
        }
    }
    Ok(grads)
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
