use super::loss::sigmoid;
use super::net::ModelParams;
use super::train::logits;
use crate::dataset::{paste, query_sample, Sample, CROP};
use crate::error::Result;
use crate::grid::Grid2D;
use crate::sim::Observation;
use crate::space::{ActionSpace, ActionSpec};

/// Reveal probabilities in the crop frame; zero on invalid cells.
pub fn predict_samples(p: &ModelParams, samples: &[&Sample]) -> Result<Vec<Grid2D<f32>>> {
    logits(p, samples)?
        .into_iter()
        .zip(samples)
        .map(|((z, _), s)| {
            let prob = z
                .iter()
                .zip(s.valid.data())
                .map(|(&zi, &v)| if v { sigmoid(zi) } else { 0.0 })
                .collect();
            Grid2D::from_vec(CROP, CROP, prob)
        })
        .collect()
}

/// Workspace-frame reveal probabilities for each candidate action.
pub fn predict_reveal_batch(
    p: &ModelParams,
    obs: &Observation,
    actions: &[ActionSpec],
    space: &ActionSpace,
) -> Result<Vec<Grid2D<f32>>> {
    for a in actions {
        space.validate(a)?;
    }
    let samples: Vec<Sample> = actions.iter().map(|a| query_sample(space, obs, a)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let (h, w) = obs.shape();
    predict_samples(p, &refs)?
        .iter()
        .zip(actions)
        .map(|(crop, a)| paste(crop, a.x, a.y, h, w, 0.0))
        .collect()
}

pub fn predict_reveal(p: &ModelParams, obs: &Observation, a: &ActionSpec, space: &ActionSpace) -> Result<Grid2D<f32>> {
    Ok(predict_reveal_batch(p, obs, std::slice::from_ref(a), space)?.remove(0))
}
