use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, NodeId, Result, Tape, Tensor};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the worst coordinate, when any was checked.
    pub failing_index: Option<usize>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Checks d(loss)/d(input) element-by-element against central finite
/// differences with the given step. Inputs with more than 1000 elements are
/// subsampled at 100 seeded-random coordinates. The relative error of a pair
/// (a, n) is |a − n| / max(|a|, |n|, 1).
pub fn grad_check<F>(builder: F, input: &Tensor, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if step <= 0.0 {
        return Err(AutodiffError::InvalidInput {
            op: "grad_check",
            detail: format!("step must be positive, got {step}"),
        });
    }
    let mut tape = Tape::new();
    let input_id = tape.leaf(input.clone(), true)?;
    let loss = builder(&mut tape, input_id)?;
    if !tape.value(loss).is_scalar() {
        return Err(AutodiffError::InvalidInput {
            op: "grad_check",
            detail: "builder must produce a scalar loss".into(),
        });
    }
    let analytic = tape.backward(loss)?.get_or_zeros(input_id);

    let n = input.numel();
    let indices: Vec<usize> = if n > 1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, n, 100).into_iter().collect()
    } else {
        (0..n).collect()
    };

    let eval = |point: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let id = t.leaf(point.clone(), false)?;
        let l = builder(&mut t, id)?;
        Ok(t.value(l).scalar_value())
    };

    let mut max_rel_err = 0.0f64;
    let mut failing_index = None;
    let mut point = input.clone();
    for &idx in &indices {
        let orig = point.data()[idx];
        point.data_mut()[idx] = orig + step;
        let plus = eval(&point)?;
        point.data_mut()[idx] = orig - step;
        let minus = eval(&point)?;
        point.data_mut()[idx] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.data()[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        if rel > max_rel_err {
            max_rel_err = rel;
            failing_index = Some(idx);
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        failing_index,
        checked: indices.len(),
    })
}
