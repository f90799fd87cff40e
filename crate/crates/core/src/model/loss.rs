use serde::{Deserialize, Serialize};

use super::net::Batch;
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub huber_delta: f64,
    pub aux_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 0.1,
            aux_weight: 1.0,
        }
    }
}

/// Sigmoid cross-entropy of one logit.
pub fn bce<T: Scalar>(z: T, y: bool) -> T {
    let zero = T::zero();
    let t = if y { z } else { zero };
    z.max(zero) - t + (T::one() + (-z.abs()).exp()).ln()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn huber<T: Scalar>(r: T, delta: T) -> T {
    let a = r.abs();
    if a <= delta {
        T::of(0.5) * r * r
    } else {
        delta * (a - T::of(0.5) * delta)
    }
}

#[derive(Debug, Clone)]
pub struct LossOut<T> {
    pub loss: T,
    pub dlogits: Vec<T>,
    pub daux: Option<Vec<T>>,
}

/// Mean over the batch of each sample's mean valid-cell loss, with gradients
/// in logit space. Invalid cells contribute nothing.
pub fn batch_loss<T: Scalar>(logits: &[T], aux: Option<&[T]>, b: &Batch<T>, cfg: &LossConfig) -> Result<LossOut<T>> {
    if b.n == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let px = b.valid.len() / b.n;
    let drop = match aux {
        Some(_) => Some(
            b.drop
                .as_ref()
                .ok_or_else(|| Error::Config("auxiliary head needs height-drop targets".into()))?,
        ),
        None => None,
    };
    let delta = T::of(cfg.huber_delta);
    let wa = T::of(cfg.aux_weight);
    let mut total = T::zero();
    let mut dlogits = vec![T::zero(); logits.len()];
    let mut daux = aux.map(|a| vec![T::zero(); a.len()]);
    for s in 0..b.n {
        let cells = s * px..(s + 1) * px;
        let v = b.valid[cells.clone()].iter().filter(|&&x| x).count();
        if v == 0 {
            return Err(Error::DegenerateSample);
        }
        let scale = T::one() / T::of((v * b.n) as f64);
        let mut sum = T::zero();
        for k in cells.filter(|&k| b.valid[k]) {
            let y = b.label[k];
            sum = sum + bce(logits[k], y);
            let t = if y { T::one() } else { T::zero() };
            dlogits[k] = (sigmoid(logits[k]) - t) * scale;
            if let (Some(a), Some(d), Some(da)) = (aux, drop, daux.as_mut()) {
                let r = a[k] - d[k];
                sum = sum + wa * huber(r, delta);
                da[k] = wa * r.max(-delta).min(delta) * scale;
            }
        }
        total = total + sum * scale;
    }
    Ok(LossOut {
        loss: total,
        dlogits,
        daux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_zero_is_ln2() {
        assert!((bce(0.0f64, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce(0.0f64, false) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_saturates() {
        assert!(bce(40.0f64, true) < 1e-10);
        assert!(bce(-40.0f64, false) < 1e-10);
        assert!((bce(-40.0f64, true) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn huber_pieces() {
        assert!((huber(0.05f64, 0.1) - 0.00125).abs() < 1e-15);
        assert!((huber(-0.3f64, 0.1) - 0.1 * (0.3 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.3f64) + sigmoid(-0.3) - 1.0).abs() < 1e-15);
    }
}
