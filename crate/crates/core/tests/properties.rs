use cedr::copula::{copula_term, EcdfModel};
use cedr::estimators::{cedr, dr_ate, naive_dr, IdentificationCheck, ModelSpec, StudyData};
use cedr::glm::{ols_fit, probit_fit, probit_gradient, probit_log_likelihood, ColumnRole, DesignSpec};
use cedr::numerics::{cholesky, std_normal_cdf, std_normal_quantile, Matrix, RngHandle};
use cedr::simulation::{generate, standardized_chi2_from_latent, DgpConfig, Scenario};
use proptest::prelude::*;

fn arm(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n).prop_map(|mut t| {
        t[0] = true;
        t[1] = false;
        t
    })
}

proptest! {
    #[test]
    fn dr_ate_shift_and_label_swap(
        n in 4usize..40,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = RngHandle::new(seed);
        let t: Vec<bool> = (0..n).map(|i| i == 0 || (i > 1 && rng.bernoulli(0.5))).collect();
        let y: Vec<f64> = (0..n).map(|_| 3.0 * rng.standard_normal()).collect();
        let e: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
        let m1: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let m0: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let base = dr_ate(&y, &t, &e, &m1, &m0).unwrap();

        let add = |v: &[f64]| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        let shifted = dr_ate(&add(&y), &t, &e, &add(&m1), &add(&m0)).unwrap();
        prop_assert!((shifted - base).abs() <= 1e-8 * (1.0 + base.abs() + shift.abs()));

        let flipped: Vec<bool> = t.iter().map(|v| !v).collect();
        let e_flip: Vec<f64> = e.iter().map(|v| 1.0 - v).collect();
        let swapped = dr_ate(&y, &flipped, &e_flip, &m0, &m1).unwrap();
        prop_assert!((swapped + base).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn dr_ate_with_exact_outcome_models(t in arm(30), tau in -5.0f64..5.0, seed in any::<u64>()) {
        // With m1 and m0 equal to the potential outcomes, any propensity gives tau.
        let mut rng = RngHandle::new(seed);
        let m0: Vec<f64> = (0..30).map(|_| rng.standard_normal()).collect();
        let m1: Vec<f64> = m0.iter().map(|v| v + tau).collect();
        let y: Vec<f64> = (0..30).map(|i| if t[i] { m1[i] } else { m0[i] }).collect();
        let e: Vec<f64> = (0..30).map(|_| 0.02 + 0.96 * rng.uniform()).collect();
        let ate = dr_ate(&y, &t, &e, &m1, &m0).unwrap();
        prop_assert!((ate - tau).abs() < 1e-9);
    }

    #[test]
    fn cholesky_reconstructs(d in 1usize..7, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let a = Matrix::new(d, d, (0..d * d).map(|_| rng.standard_normal()).collect()).unwrap();
        let s = a.transpose().matmul(&a).unwrap();
        let mut data = s.as_slice().to_vec();
        for i in 0..d {
            data[i * d + i] += 0.1;
        }
        let s = Matrix::new(d, d, data).unwrap();
        let l = cholesky(&s).unwrap();
        prop_assert!(l.is_lower_triangular());
        prop_assert!(l.matmul(&l.transpose()).unwrap().max_abs_diff(&s) <= 1e-10 * (1.0 + d as f64));
    }

    #[test]
    // Above ~5 the double nearest Phi(x) is too coarse for a 1e-8 round trip.
    fn normal_cdf_quantile_round_trip(x in -8.0f64..5.0) {
        let back = std_normal_quantile(std_normal_cdf(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * (1.0 + x.abs()));
    }

    #[test]
    fn ecdf_stays_interior(sample in prop::collection::vec(-1e3f64..1e3, 2..200), probe in -2e3f64..2e3) {
        let model = EcdfModel::fit(&sample).unwrap();
        let (lo, hi) = model.range();
        let v = model.eval(probe);
        prop_assert!(v >= lo && v <= hi && v > 0.0 && v < 1.0);
        prop_assert!(copula_term(&sample).unwrap().iter().all(|c| c.is_finite()));
    }

    #[test]
    fn copula_term_depends_only_on_ranks(sample in prop::collection::vec(-5.0f64..5.0, 2..200)) {
        let a = copula_term(&sample).unwrap();
        let cubed: Vec<f64> = sample.iter().map(|v| 2.0 * v * v * v + 7.0).collect();
        prop_assert_eq!(a, copula_term(&cubed).unwrap());
    }

    #[test]
    fn chi2_transform_is_increasing(mut z in prop::collection::vec(-7.0f64..7.0, 2..100)) {
        z.sort_by(f64::total_cmp);
        let x = standardized_chi2_from_latent(&z);
        prop_assert!(x.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(x.iter().all(|v| *v >= -3.0 / 6f64.sqrt()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probit_gradient_matches_differences(seed in any::<u64>(), b0 in -1.0f64..1.0, b1 in -2.0f64..2.0) {
        let mut rng = RngHandle::new(seed);
        let n = 300;
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let t: Vec<bool> = x.iter().map(|v| b0 + b1 * v + rng.standard_normal() > 0.0).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x]).unwrap();
        let beta = [b0 + 0.2 * rng.standard_normal(), b1 + 0.2 * rng.standard_normal()];
        let g = probit_gradient(&design, &t, &beta);
        for j in 0..2 {
            let h = 1e-5;
            let mut up = beta;
            let mut dn = beta;
            up[j] += h;
            dn[j] -= h;
            let fd = (probit_log_likelihood(&design, &t, &up) - probit_log_likelihood(&design, &t, &dn)) / (2.0 * h);
            prop_assert!((g[j] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "j={} g={} fd={}", j, g[j], fd);
        }
    }

    #[test]
    fn probit_fit_zeroes_the_score(seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let t: Vec<bool> = x.iter().map(|v| 0.2 + 0.8 * v + rng.standard_normal() > 0.0).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x]).unwrap();
        let spec = DesignSpec::with_intercept([("x", ColumnRole::Exogenous)]).unwrap();
        let fit = probit_fit(&design, &spec, &t).unwrap();
        let g = probit_gradient(&design, &t, &fit.coefficients);
        prop_assert!(fit.converged && g.iter().all(|v| v.abs() <= 1e-6));
    }

    #[test]
    fn ols_residuals_are_orthogonal(seed in any::<u64>(), n in 10usize..200) {
        let mut rng = RngHandle::new(seed);
        let x1: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.uniform() * 10.0).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + x1[i] - 0.3 * x2[i] + rng.standard_normal()).collect();
        let design = Matrix::from_columns(n, &[&vec![1.0; n], &x1, &x2]).unwrap();
        let spec = DesignSpec::with_intercept([("x1", ColumnRole::Exogenous), ("x2", ColumnRole::Exogenous)]).unwrap();
        let fit = ols_fit(&design, &spec, &y).unwrap();
        let fitted = design.mul_vec(&fit.coefficients);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        for j in 0..3 {
            let col = design.column(j);
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let scale: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt() * resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(dot.abs() <= 1e-9 * scale.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimates_ignore_endogenous_column_order(seed in any::<u64>()) {
        let cfg = DgpConfig::new(Scenario::Two, 1500, 0.3).calibrated().unwrap();
        let (data, _) = generate(&cfg, &mut RngHandle::new(seed)).unwrap();
        let endo = data.endogenous();
        let reversed = StudyData::new(
            data.y().to_vec(),
            data.t().to_vec(),
            data.exogenous().clone(),
            data.exogenous_names().to_vec(),
            endo.select_columns(&[1, 0]),
            data.endogenous_names().iter().rev().cloned().collect(),
        )
        .unwrap();
        let spec = ModelSpec::all_columns(&data);
        let mut spec_rev = spec.clone();
        spec_rev.ps_columns.reverse();
        spec_rev.outcome_columns.reverse();
        let a = cedr(&data, &spec, IdentificationCheck::Skip).unwrap().ate;
        let b = cedr(&reversed, &spec_rev, IdentificationCheck::Skip).unwrap().ate;
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{} vs {}", a, b);
        let na = naive_dr(&data, &spec).unwrap().ate;
        let nb = naive_dr(&reversed, &spec_rev).unwrap().ate;
        prop_assert!((na - nb).abs() <= 1e-8 * (1.0 + na.abs()));
    }
}
