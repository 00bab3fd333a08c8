//! Central finite-difference gradient verification.
//!
//! The numeric side re-runs the forward pass from scratch on perturbed
//! inputs and never touches the analytic backward path.

use super::tape::{Tape, Tensor};

pub const DEFAULT_H: f64 = 1e-5;

/// Rebuilds the graph via `forward` (which must return a scalar), runs
/// backward once for analytic gradients, then perturbs every coordinate
/// of every input by ±h and compares. Returns the max relative error.
pub fn max_rel_error<F>(inputs: &[(Vec<usize>, Vec<f64>)], h: f64, forward: F) -> f64
where
    F: Fn(&Tape, &[Tensor]) -> Tensor,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor> =
        inputs.iter().map(|(s, v)| tape.leaf(s, v.clone())).collect();
    let loss = forward(&tape, &leaves);
    assert_eq!(loss.len(), 1, "gradient check needs a scalar loss");
    tape.backward(&loss).expect("backward failed during gradient check");
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
        .collect();

    let eval = |data: &[(Vec<usize>, Vec<f64>)]| -> f64 {
        let t = Tape::new();
        let ls: Vec<Tensor> = data.iter().map(|(s, v)| t.constant(s, v.clone())).collect();
        forward(&t, &ls).scalar()
    };

    let mut worst = 0.0_f64;
    let mut work: Vec<(Vec<usize>, Vec<f64>)> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].1.len() {
            let orig = work[i].1[j];
            work[i].1[j] = orig + h;
            let up = eval(&work);
            work[i].1[j] = orig - h;
            let down = eval(&work);
            work[i].1[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}
