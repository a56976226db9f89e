mod common;

use cplda::classify::{basis_error, misclassification_rate, rel_tensor_error, LdaRule};
use cplda::linalg::Matrix;
use cplda::tensor::{cp_compose, frob_norm};
use cplda::tnorm::{bayes_error, sample_tgmm, Label, SimRng, TgmmParams};
use cplda::DenseTensor;

use common::*;

#[test]
fn cp_bayes_rule_attains_bayes_error() {
    let dims = [4, 3, 3];
    let mut rng = SimRng::new(51);
    let bases = perturbed_bases(&dims, 2, 0.3, &mut rng);
    let truth = model_from(vec![1.5, 1.0], bases);
    let b = cp_compose(&truth).unwrap();
    // Identity covariances: Δ = ‖B‖, rescaled to 2.
    let b = b.scale(2.0 / frob_norm(&b));
    let params = TgmmParams {
        mean1: DenseTensor::zeros(&dims).unwrap(),
        mean2: b.clone(),
        covs: dims.iter().map(|&d| Matrix::identity(d)).collect(),
        prior1: 0.5,
        prior2: 0.5,
    };
    let rule = LdaRule::new(b.clone(), b.scale(0.5), 0.0).unwrap();
    let data = sample_tgmm(&params, 10_000, &mut rng).unwrap();
    let (c1, c2): (Vec<_>, Vec<_>) = data.into_iter().partition(|s| s.y == Label::One);
    let x1: Vec<_> = c1.into_iter().map(|s| s.x).collect();
    let x2: Vec<_> = c2.into_iter().map(|s| s.x).collect();
    let rate = misclassification_rate(&rule, &x1, &x2).unwrap();
    assert!((rate - bayes_error(2.0, 0.5, 0.5).unwrap()).abs() < 0.02, "{rate}");
}

#[test]
fn shifting_input_and_midpoint_together_keeps_labels() {
    let mut rng = SimRng::new(52);
    let dims = [3, 2, 2];
    let rule = LdaRule::new(random_tensor(&dims, &mut rng), random_tensor(&dims, &mut rng), 0.3).unwrap();
    let shift = random_tensor(&dims, &mut rng).scale(10.0);
    let moved = LdaRule::new(rule.discriminant.clone(), rule.midpoint.add(&shift).unwrap(), 0.3).unwrap();
    for _ in 0..200 {
        let z = random_tensor(&dims, &mut rng);
        assert_eq!(rule.predict(&z).unwrap(), moved.predict(&z.add(&shift).unwrap()).unwrap());
    }
}

#[test]
fn rotated_basis_has_error_sin_of_angle() {
    let mut rng = SimRng::new(53);
    let dims = [4, 4, 4];
    let q: Vec<Vec<Vec<f64>>> = dims.iter().map(|&d| orthonormal_columns(d, 3, &mut rng)).collect();
    let comps = |m0_first: Vec<f64>| -> Vec<Vec<Vec<f64>>> {
        (0..2)
            .map(|r| {
                (0..3)
                    .map(|m| if r == 0 && m == 0 { m0_first.clone() } else { q[m][r].clone() })
                    .collect()
            })
            .collect()
    };
    let truth = model_from(vec![2.0, 1.0], comps(q[0][0].clone()));
    let t = std::f64::consts::FRAC_PI_6;
    // Rotate a_11 toward a third orthonormal direction.
    let rotated: Vec<f64> = q[0][0].iter().zip(&q[0][2]).map(|(a, b)| t.cos() * a + t.sin() * b).collect();
    let est = model_from(vec![2.0, 1.0], comps(rotated));
    assert!((basis_error(&est, &truth).unwrap() - 0.5).abs() < 1e-12);
    assert!(basis_error(&truth, &truth).unwrap() < 1e-15);
}

#[test]
fn relative_tensor_error() {
    let b = DenseTensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 4.0]).unwrap();
    let e = DenseTensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 3.0]).unwrap();
    assert!((rel_tensor_error(&e, &b).unwrap() - 0.2).abs() < 1e-15);
    assert!(rel_tensor_error(&e, &DenseTensor::zeros(&[2, 2]).unwrap()).is_err());
}
