mod common;

use cplda::linalg::{top_k_svd, Matrix};
use cplda::tensor::{cp_compose, frob_norm, inner, outer, ModeMatrix};
use cplda::tnorm::SimRng;
use cplda::{CpModel, DenseTensor};
use proptest::prelude::*;

use common::*;

fn tensor_strategy() -> impl Strategy<Value = (Vec<usize>, u64)> {
    (prop::collection::vec(1usize..5, 1..5), any::<u64>())
}

#[test]
fn mode_unfolding_matches_index_formula_on_2x3x2() {
    let x = DenseTensor::new(vec![2, 3, 2], (1..=12).map(f64::from).collect()).unwrap();
    for m in 0..3 {
        let got = x.mat_m(m).unwrap();
        assert_eq!(got.matrix, unfold_oracle(&x, &[m]), "mode {m}");
    }
    // Mode 1 (second mode): column j enumerates (i₁, i₃) with i₁ fastest.
    let m2 = x.mat_m(1).unwrap().matrix;
    assert_eq!((m2.rows(), m2.cols()), (3, 4));
    for idx in multi_indices(&[2, 3, 2]) {
        let col = idx[0] + 2 * idx[2];
        assert_eq!(m2[(idx[1], col)], entry(&x, &idx));
    }
}

#[test]
fn two_mode_unfolding_stacks_slices() {
    let x = DenseTensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
    let m = x.mat_s(&[0, 1]).unwrap().matrix;
    assert_eq!((m.rows(), m.cols()), (4, 2));
    for c in 0..2 {
        assert_eq!(m.col(c), &x.as_slice()[4 * c..4 * c + 4]);
    }
}

#[test]
fn mode_product_on_3x4x2() {
    let mut rng = SimRng::new(11);
    let x = random_tensor(&[3, 4, 2], &mut rng);
    let a = random_matrix(5, 4, &mut rng);
    let got = x.mode_product(1, &a).unwrap();
    let want = mode_product_oracle(&x, 1, &a);
    assert_eq!(got.dims(), &[3, 5, 2]);
    for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
        assert!((g - w).abs() < 1e-13);
    }
}

#[test]
fn inner_matches_flat_dot() {
    let mut rng = SimRng::new(12);
    let x = random_tensor(&[2, 2, 2], &mut rng);
    let y = random_tensor(&[2, 2, 2], &mut rng);
    let flat: f64 = x.vec().iter().zip(y.vec()).map(|(a, b)| a * b).sum();
    assert!((inner(&x, &y).unwrap() - flat).abs() < 1e-14);
    assert!((frob_norm(&x) - inner_oracle(&x, &x).sqrt()).abs() < 1e-14);
}

#[test]
fn cp_compose_matches_outer_product_loop() {
    let mut rng = SimRng::new(13);
    let dims = [3, 4, 2];
    let bases = perturbed_bases(&dims, 2, 0.6, &mut rng);
    let model = model_from(vec![2.0, 0.7], bases);
    let b = cp_compose(&model).unwrap();
    for idx in multi_indices(&dims) {
        let want: f64 = (0..2)
            .map(|r| model.weights[r] * (0..3).map(|m| model.bases[r][m][idx[m]]).product::<f64>())
            .sum();
        assert!((entry(&b, &idx) - want).abs() < 1e-14);
    }
}

#[test]
fn compose_of_rank_factorization_is_idempotent() {
    let mut rng = SimRng::new(14);
    let dims = [4, 3];
    let x = random_tensor(&dims, &mut rng);
    let svd = top_k_svd(&x.mat_m(0).unwrap().matrix, 3).unwrap();
    let model = CpModel::new(
        svd.singular_values.clone(),
        (0..3)
            .map(|r| vec![svd.left.col(r).to_vec(), svd.right.col(r).to_vec()])
            .collect(),
    )
    .unwrap();
    let back = cp_compose(&model).unwrap();
    let err = frob_norm(&back.sub(&x).unwrap()) / frob_norm(&x);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn outer_rejects_empty_input() {
    assert!(outer(&[]).is_err());
}

proptest! {
    #[test]
    fn every_unfolding_folds_back_bitwise((dims, seed) in tensor_strategy(), mask in any::<u8>()) {
        let x = random_tensor(&dims, &mut SimRng::new(seed));
        let m = dims.len();
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.is_empty() || rows.len() == m && m > 1 {
            return Ok(());
        }
        let unf = x.mat_s(&rows).unwrap();
        prop_assert_eq!(&unf.matrix, &unfold_oracle(&x, &rows));
        prop_assert_eq!(unf.fold(), x.clone());
        let rebuilt = ModeMatrix::new(unf.matrix.clone(), &rows, &dims).unwrap();
        prop_assert_eq!(rebuilt.fold(), x);
    }

    #[test]
    fn unfolding_preserves_norm((dims, seed) in tensor_strategy()) {
        let x = random_tensor(&dims, &mut SimRng::new(seed));
        let v = x.vec();
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // Mode 0 keeps the vec order, so the summation is identical.
        prop_assert_eq!(x.mat_m(0).unwrap().matrix.frob_norm(), frob_norm(&x));
        for m in 1..dims.len() {
            let n = x.mat_m(m).unwrap().matrix.frob_norm();
            prop_assert!((n - frob_norm(&x)).abs() <= 1e-15 * vn.max(1.0));
        }
        prop_assert!((frob_norm(&x) - vn).abs() <= 1e-14 * vn.max(1.0));
    }

    #[test]
    fn mode_products_on_distinct_modes_commute(
        dims in prop::collection::vec(1usize..5, 2..5),
        seed in any::<u64>(),
        pick in any::<(u8, u8)>(),
    ) {
        let mut rng = SimRng::new(seed);
        let x = random_tensor(&dims, &mut rng);
        let m = pick.0 as usize % dims.len();
        let l = (m + 1 + pick.1 as usize % (dims.len() - 1)) % dims.len();
        let a = random_matrix(3, dims[m], &mut rng);
        let b = random_matrix(2, dims[l], &mut rng);
        let ab = x.mode_product(m, &a).unwrap().mode_product(l, &b).unwrap();
        let ba = x.mode_product(l, &b).unwrap().mode_product(m, &a).unwrap();
        let scale = frob_norm(&ab).max(1.0);
        prop_assert!(frob_norm(&ab.sub(&ba).unwrap()) <= 1e-12 * scale);
    }

    #[test]
    fn identity_mode_product_is_a_no_op((dims, seed) in tensor_strategy()) {
        let x = random_tensor(&dims, &mut SimRng::new(seed));
        for m in 0..dims.len() {
            prop_assert_eq!(x.mode_product(m, &Matrix::identity(dims[m])).unwrap(), x.clone());
        }
    }
}
