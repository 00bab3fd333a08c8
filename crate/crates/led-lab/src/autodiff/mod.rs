//! Reverse-mode automatic differentiation core.

pub mod adam;
pub mod check;
pub mod conv;
pub mod lstm;
pub mod param;
pub mod tape;

pub use adam::AdamState;
pub use conv::{conv2d, deconv2d, dynamic_conv1x1};
pub use lstm::{bilstm_encode, LstmDirWeights};
pub use param::{ParamData, ParamRef, ParamSet};
pub use tape::{AdError, Tape, Tensor};

#[cfg(test)]
mod grad_tests {
    //! Finite-difference checks over the differentiable ops.

    use super::check::{max_rel_error, DEFAULT_H};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rand_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
    }

    #[test]
    fn conv2d_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let inputs = vec![
            (vec![2, 2, 5, 5], rand_vec(100, &mut rng)),
            (vec![3, 2, 3, 3], rand_vec(54, &mut rng)),
            (vec![3], rand_vec(3, &mut rng)),
        ];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            conv2d(&ls[0], &ls[1], &ls[2], 2, 1).unwrap().sum()
        });
        assert!(err < 1e-4, "conv2d max rel error {err}");
    }

    #[test]
    fn deconv2d_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let inputs = vec![
            (vec![1, 3, 3, 3], rand_vec(27, &mut rng)),
            (vec![3, 2, 3, 3], rand_vec(54, &mut rng)),
            (vec![2], rand_vec(2, &mut rng)),
        ];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            // square the output so the gradient is input-dependent
            let y = deconv2d(&ls[0], &ls[1], &ls[2], 2, 1).unwrap();
            y.mul(&y).sum()
        });
        assert!(err < 1e-4, "deconv2d max rel error {err}");
    }

    #[test]
    fn dynamic_conv1x1_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let inputs = vec![
            (vec![2, 3, 4, 4], rand_vec(96, &mut rng)),
            (vec![2, 2, 3], rand_vec(12, &mut rng)),
        ];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            let y = dynamic_conv1x1(&ls[0], &ls[1]).unwrap();
            y.mul(&y).sum()
        });
        assert!(err < 1e-4, "dynamic_conv1x1 max rel error {err}");
    }

    #[test]
    fn bilstm_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (t_len, e, h) = (4usize, 3usize, 2usize);
        let inputs = vec![
            (vec![t_len, e], rand_vec(t_len * e, &mut rng)),
            (vec![4 * h, e], rand_vec(4 * h * e, &mut rng)),
            (vec![4 * h, h], rand_vec(4 * h * h, &mut rng)),
            (vec![4 * h], rand_vec(4 * h, &mut rng)),
            (vec![4 * h, e], rand_vec(4 * h * e, &mut rng)),
            (vec![4 * h, h], rand_vec(4 * h * h, &mut rng)),
            (vec![4 * h], rand_vec(4 * h, &mut rng)),
        ];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            let fwd = LstmDirWeights { w_ih: &ls[1], w_hh: &ls[2], b: &ls[3] };
            let bwd = LstmDirWeights { w_ih: &ls[4], w_hh: &ls[5], b: &ls[6] };
            let (states, summary) = bilstm_encode(&ls[0], &fwd, &bwd, h).unwrap();
            states.sum().add(&summary.mul(&summary).sum())
        });
        assert!(err < 1e-4, "bilstm max rel error {err}");
    }

    #[test]
    fn softmax_and_kl_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut target = rand_vec(6, &mut rng).iter().map(|v| v.abs() + 0.05).collect::<Vec<_>>();
        let s: f64 = target.iter().sum();
        target.iter_mut().for_each(|v| *v /= s);
        let inputs = vec![(vec![6], rand_vec(6, &mut rng))];
        let err = max_rel_error(&inputs, DEFAULT_H, |t, ls| {
            let tgt = t.constant(&[6], target.clone());
            Tensor::kl_div(&tgt, &ls[0].log_softmax_flat()).unwrap()
        });
        assert!(err < 1e-4, "log_softmax+kl max rel error {err}");
    }

    #[test]
    fn primitive_suite_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let inputs = vec![
            (vec![5], rand_vec(5, &mut rng)),
            (vec![4, 5], rand_vec(20, &mut rng)),
            (vec![4], rand_vec(4, &mut rng)),
        ];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            let y = ls[0].linear(&ls[1], Some(&ls[2]));
            let r = y.relu().add(&y.tanh()).mul(&y.sigmoid());
            Tensor::concat(&[&r, &ls[2]], 0).softmax_flat().narrow(0, 1, 3).sum()
        });
        assert!(err < 1e-4, "primitive chain max rel error {err}");
    }

    #[test]
    fn embedding_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let inputs = vec![(vec![5, 3], rand_vec(15, &mut rng))];
        let err = max_rel_error(&inputs, DEFAULT_H, |_, ls| {
            let e = Tensor::embedding_lookup(&ls[0], &[1, 3, 1, 0]);
            e.mul(&e).sum()
        });
        assert!(err < 1e-4, "embedding max rel error {err}");
    }

    #[test]
    fn same_seed_same_gradients() {
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(23);
            let t = Tape::new();
            let x = t.leaf(&[1, 2, 4, 4], (0..32).map(|_| rng.gen::<f64>()).collect());
            let w = t.leaf(&[2, 2, 3, 3], (0..36).map(|_| rng.gen::<f64>()).collect());
            let b = t.leaf(&[2], vec![0.1, -0.2]);
            let y = conv2d(&x, &w, &b, 1, 1).unwrap();
            let mut drng = ChaCha12Rng::seed_from_u64(99);
            let y = y.dropout(0.3, true, &mut drng).unwrap();
            let loss = y.mul(&y).sum();
            t.backward(&loss).unwrap();
            (loss.scalar(), x.grad().unwrap(), w.grad().unwrap())
        };
        let (l1, gx1, gw1) = run();
        let (l2, gx2, gw2) = run();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(gx1.iter().zip(&gx2).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(gw1.iter().zip(&gw2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
