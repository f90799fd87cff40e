use super::loss::LossConfig;
use super::net::ModelParams;
use super::train::loss_and_grad;
use crate::dataset::Sample;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` over the checked entries.
    pub rel_error: f64,
    pub checked: usize,
    /// Entries whose difference quotient straddles a rectifier kink.
    pub kinked: usize,
}

/// Compares analytic gradients with central differences of step `h`.
///
/// An entry is treated as kinked, and left out, when the difference quotients
/// at `h` and `h / 1000` disagree; that test uses only loss values, so it
/// cannot mask an error in the analytic gradient.
pub fn check_gradients(p: &ModelParams<f64>, samples: &[&Sample], cfg: &LossConfig, h: f64) -> Result<Vec<TensorCheck>> {
    let (_, grads) = loss_and_grad(p, samples, cfg)?;
    let mut q = p.clone();
    let loss = |q: &ModelParams<f64>| loss_and_grad(q, samples, cfg).map(|r| r.0);
    let mut out = Vec::new();
    for (ti, (name, _, _)) in p.arch.param_shapes().into_iter().enumerate() {
        let (mut diff2, mut na, mut nn) = (0.0, 0.0f64, 0.0f64);
        let (mut checked, mut kinked) = (0, 0);
        for k in 0..p.tensors[ti].len() {
            let orig = p.tensors[ti].data()[k];
            let mut quotient = |step: f64| -> Result<f64> {
                q.tensors[ti].data_mut()[k] = orig + step;
                let up = loss(&q)?;
                q.tensors[ti].data_mut()[k] = orig - step;
                let down = loss(&q)?;
                q.tensors[ti].data_mut()[k] = orig;
                Ok((up - down) / (2.0 * step))
            };
            let coarse = quotient(h)?;
            let fine = quotient(h * 1e-3)?;
            if (coarse - fine).abs() > 1e-4 * coarse.abs().max(fine.abs()).max(1e-8) {
                kinked += 1;
                continue;
            }
            let a = grads[ti].data()[k];
            diff2 += (a - coarse).powi(2);
            na += a * a;
            nn += coarse * coarse;
            checked += 1;
        }
        let denom = na.sqrt().max(nn.sqrt());
        let rel_error = if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom };
        out.push(TensorCheck {
            name,
            rel_error,
            checked,
            kinked,
        });
    }
    Ok(out)
}
