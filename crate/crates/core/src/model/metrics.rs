use crate::error::{Error, Result};

/// Average precision: mean over positives of the precision at their rank,
/// ranking by descending score with ties broken by input index.
pub fn average_precision(scores: &[f32], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: format!("{} labels", scores.len()),
            found: labels.len().to_string(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("no positive labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(average_precision(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]).unwrap(), 1.0);
    }

    #[test]
    fn ties_follow_input_order() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(matches!(average_precision(&[0.1], &[false]), Err(Error::UndefinedMetric(_))));
    }
}
