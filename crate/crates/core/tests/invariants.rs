//! Property tests for the cross-module invariants, plus the two
//! population-level identification checks behind the estimators.

use nnsdr::baselines::kernel_weights;
use nnsdr::dataset::DataSet;
use nnsdr::linalg::{orthonormality_defect, polar_retract, Matrix, StiefelMatrix};
use nnsdr::metrics::subspace_error;
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = (usize, usize)> {
    (2usize..9).prop_flat_map(|p| (Just(p), 1usize..p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polar_retraction_is_orthonormal_and_idempotent(
        (p, k) in dims_strategy(),
        seed in 0u64..1_000_000,
    ) {
        let mut state = seed;
        let mut next = || {
            state = nnsdr::seed::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let m = Matrix::from_fn(p, k, |_, _| next());
        if let Ok(v) = polar_retract(&m) {
            prop_assert!(orthonormality_defect(v.matrix()) < 1e-10);
            let again = polar_retract(v.matrix()).unwrap();
            prop_assert!(again.matrix().sub(v.matrix()).frob_norm() < 1e-10);
            // Positive rescaling does not change the retraction.
            let mut scaled = m.clone();
            scaled.scale(3.5);
            let from_scaled = polar_retract(&scaled).unwrap();
            prop_assert!(from_scaled.matrix().sub(v.matrix()).frob_norm() < 1e-9);
        }
    }

    #[test]
    fn subspace_error_is_bounded_and_symmetric(
        (p, k) in dims_strategy(),
        seed in 0u64..1_000_000,
    ) {
        let mut state = seed;
        let mut next = || {
            state = nnsdr::seed::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let a = polar_retract(&Matrix::from_fn(p, k, |_, _| next()));
        let b = polar_retract(&Matrix::from_fn(p, k, |_, _| next()));
        if let (Ok(a), Ok(b)) = (a, b) {
            let ab = subspace_error(&a, &b).unwrap();
            let ba = subspace_error(&b, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(subspace_error(&a, &a).unwrap() < 1e-12);
        }
    }

    #[test]
    fn dataset_csv_roundtrips(
        rows in proptest::collection::vec(
            proptest::collection::vec(-1e6f64..1e6, 3),
            1..20,
        ),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
        let ds = DataSet::new(Matrix::from_rows(&x).unwrap(), y).unwrap();
        let back = DataSet::from_csv_str(&ds.to_csv_string()).unwrap();
        prop_assert_eq!(ds, back);
    }

    #[test]
    fn kernel_weights_normalize_and_commute_with_permutation(
        vals in proptest::collection::vec(-5.0f64..5.0, 12),
        h in 0.2f64..3.0,
    ) {
        let z = Matrix::from_fn(6, 2, |i, j| vals[i * 2 + j]);
        let w = kernel_weights(&z, 2, h).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // Reverse the sample order; the anchor moves with it.
        let zr = Matrix::from_fn(6, 2, |i, j| z.get(5 - i, j));
        let wr = kernel_weights(&zr, 3, h).unwrap();
        for i in 0..6 {
            prop_assert!((w[i] - wr[5 - i]).abs() < 1e-12);
        }
    }
}

/// Identification through the objective: for the noiseless single-index
/// model `Y = cos(X_1)` with standard normal predictors in p = 3, the
/// population objective `T(V) = E(Y - E(Y | V'X))^2` over 1-D candidate
/// subspaces attains its minimum exactly at span(e1).
///
/// For a unit vector with first coordinate rho, the conditional mean is
/// `E(cos X_1 | V'X = t) = cos(rho t) exp(-(1-rho^2)/2)`, and Gaussian
/// moment identities give T in closed form.
#[test]
fn objective_identifies_the_subspace_on_a_grid() {
    fn t_closed_form(rho: f64) -> f64 {
        let r2 = rho * rho;
        let e_cos2 = (1.0 + (-2.0f64).exp()) / 2.0;
        let cross = (-(1.0 - r2) / 2.0).exp()
            * (((-(1.0 - r2) / 2.0).exp() + (-(1.0 + 3.0 * r2) / 2.0).exp()) / 2.0);
        let msq = (-(1.0 - r2)).exp() * (1.0 + (-2.0 * r2).exp()) / 2.0;
        e_cos2 - 2.0 * cross + msq
    }

    // Endpoint sanity of the closed form.
    assert!(t_closed_form(1.0).abs() < 1e-12);
    let var_cos = (1.0 + (-2.0f64).exp()) / 2.0 - (-1.0f64).exp();
    assert!((t_closed_form(0.0) - var_cos).abs() < 1e-12);

    // Monte Carlo estimate of T(V) with common random numbers, using the
    // analytic conditional mean, over a grid of unit vectors in p = 3.
    use rand::prelude::*;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_000);
    let n = 20_000;
    let xs: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ]
        })
        .collect();

    let mut best: Option<(f64, [f64; 3])> = None;
    for i_theta in 0..=12 {
        let theta = std::f64::consts::FRAC_PI_2 * i_theta as f64 / 12.0;
        for i_phi in 0..6 {
            let phi = std::f64::consts::PI * i_phi as f64 / 6.0;
            let v = [theta.cos(), theta.sin() * phi.cos(), theta.sin() * phi.sin()];
            let rho = v[0];
            let shrink = (-(1.0 - rho * rho) / 2.0).exp();
            let mut acc = 0.0;
            for x in &xs {
                let t = v[0] * x[0] + v[1] * x[1] + v[2] * x[2];
                let m = (rho * t).cos() * shrink;
                let r = x[0].cos() - m;
                acc += r * r;
            }
            let t_mc = acc / n as f64;
            // The Monte Carlo curve matches the closed form.
            assert!(
                (t_mc - t_closed_form(rho)).abs() < 0.02,
                "rho {rho}: MC {t_mc} vs closed form {}",
                t_closed_form(rho)
            );
            if best.as_ref().is_none_or(|(b, _)| t_mc < *b) {
                best = Some((t_mc, v));
            }
        }
    }
    let (_, v_star) = best.unwrap();
    let e1 = StiefelMatrix::canonical(3, 1);
    let v_star =
        StiefelMatrix::new(Matrix::from_rows(&[vec![v_star[0]], vec![v_star[1]], vec![v_star[2]]]).unwrap())
            .unwrap();
    let err = subspace_error(&e1, &v_star).unwrap();
    assert!(err < 1e-12, "grid argmin off the true subspace by {err}");
}

/// The network-based and local-linear gradient fields target the same
/// population object: on noiseless linear single-index data the two
/// estimators agree.
#[test]
fn opg_and_nn_sigma_estimates_agree_on_linear_data() {
    use nnsdr::baselines::{opg_fit, KernelConfig};
    use nnsdr::nnsdr::{fit_stage1, NnSdrConfig};
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31_337);
    let n = 1000;
    let p = 5;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let dir = {
        let raw = [1.0, -2.0, 0.5, 0.0, 1.5];
        let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.map(|v| v / norm)
    };
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&dir).map(|(a, b)| a * b).sum())
        .collect();
    let data = DataSet::new(Matrix::from_rows(&rows).unwrap(), y).unwrap();

    let b_opg = opg_fit(&data, 1, &KernelConfig::default()).unwrap();

    let mut cfg = NnSdrConfig::new(1).with_seed(9).with_hidden(vec![64]);
    cfg.stage1.epochs = 60;
    let b_nn = fit_stage1(&data, &cfg).unwrap().b_hat;

    let err = subspace_error(&b_opg, &b_nn).unwrap();
    assert!(err < 0.1, "estimators disagree: {err}");
}
