use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::special::norm_quantile;
use crate::truncated::GibbsConfig;

fn normals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k)
        .map(|_| norm_quantile(rng.sample::<f64, _>(Open01)))
        .collect()
}

/// Log-normal rows `exp(ln μ + L z)` with `L L' = Σ` for a 2×2 `Σ`.
fn lognormal_rows(mu: [f64; 2], s: [[f64; 2]; 2], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let l11 = s[0][0].sqrt();
    let l21 = s[1][0] / l11;
    let l22 = (s[1][1] - l21 * l21).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z = normals(&mut rng, 2);
            vec![
                mu[0] * (l11 * z[0]).exp(),
                mu[1] * (l21 * z[0] + l22 * z[1]).exp(),
            ]
        })
        .collect()
}

fn point(family: DgfKind, eta: &[f64], mu: &[f64], lambda: &[f64], sigma: &[&[f64]]) -> ParamPoint {
    ParamPoint {
        family,
        eta: eta.to_vec(),
        mu: mu.to_vec(),
        lambda: lambda.to_vec(),
        sigma: sigma.iter().map(|r| r.to_vec()).collect(),
    }
}

#[test]
fn lognormal_density_at_the_median() {
    let theta = point(DgfKind::Normal, &[], &[1.0], &[0.0], &[&[1.0]]);
    let l = loglik(&theta, &[vec![1.0]]).unwrap();
    assert!((l + 0.918_938_533_204_672_7).abs() < 1e-12, "{l}");
}

#[test]
fn single_observation_at_mu() {
    let theta = point(
        DgfKind::Normal,
        &[],
        &[2.0, 5.0],
        &[0.0, 0.0],
        &[&[0.5, 0.1], &[0.1, 0.4]],
    );
    let l = loglik(&theta, &[vec![2.0, 5.0]]).unwrap();
    let det: f64 = 0.5 * 0.4 - 0.01;
    let expected = -0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln() - 2f64.ln() - 5f64.ln();
    assert!((l - expected).abs() < 1e-12, "{l} vs {expected}");
}

#[test]
fn zero_lambda_closed_form_matches_the_integral() {
    let data = lognormal_rows([3.0, 2.0], [[0.4, 0.1], [0.1, 0.3]], 50, 4);
    for (family, eta) in [(DgfKind::Normal, vec![]), (DgfKind::StudentT, vec![4.0])] {
        let theta = point(
            family,
            &eta,
            &[3.0, 2.0],
            &[0.0, 0.0],
            &[&[0.4, 0.1], &[0.1, 0.3]],
        );
        let closed = loglik(&theta, &data).unwrap();
        let general = loglik_general(&theta, &data, &IntegrationOptions::default()).unwrap();
        assert!(
            (closed - general).abs() < 1e-6,
            "{family}: {closed} vs {general}"
        );
    }
}

#[test]
fn data_and_parameter_errors() {
    let theta = point(DgfKind::Normal, &[], &[1.0], &[0.0], &[&[1.0]]);
    match loglik(&theta, &[vec![1.0], vec![0.0]]) {
        Err(Error::Input(msg)) => assert!(msg.contains("row 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(loglik(&theta, &[vec![1.0, 2.0]]).is_err());
    let bad = point(
        DgfKind::Normal,
        &[],
        &[1.0, 1.0],
        &[0.0, 0.0],
        &[&[1.0, 2.0], &[2.0, 1.0]],
    );
    assert!(matches!(
        bad.validate(),
        Err(Error::NotPositiveDefinite { .. })
    ));
}

#[test]
fn labels_and_parameter_counts() {
    let mbt = FitSpec::new(DgfKind::StudentT, LambdaConstraint::Free);
    let mlt = FitSpec::new(DgfKind::StudentT, LambdaConstraint::FixedAtZero);
    assert_eq!(Layout::new(&mbt, 2).n_params(), 8);
    assert_eq!(Layout::new(&mlt, 2).n_params(), 6);
    assert_eq!(
        Layout::new(&FitSpec::new(DgfKind::Normal, LambdaConstraint::Free), 3).n_params(),
        12
    );
    assert_eq!(mbt.label(2), "MBT2");
    assert_eq!(mlt.clone().independent().label(2), "Ind-MLT2");
    assert_eq!(
        FitSpec::new(DgfKind::Normal, LambdaConstraint::FixedAtZero).label(2),
        "MLN2"
    );
}

#[test]
fn layout_round_trips() {
    let spec = FitSpec::new(DgfKind::StudentT, LambdaConstraint::Free);
    let layout = Layout::new(&spec, 2);
    let pt = point(
        DgfKind::StudentT,
        &[6.0],
        &[20.0, 15.0],
        &[0.4, 0.3],
        &[&[0.4, 0.1], &[0.1, 0.3]],
    );
    let back = layout.point_from_theta(&layout.to_theta(&pt).unwrap());
    for (a, b) in back.sigma.iter().flatten().zip(pt.sigma.iter().flatten()) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!((back.mu[0] - 20.0).abs() < 1e-12 && (back.eta[0] - 6.0).abs() < 1e-12);
    assert_eq!(layout.point_from_natural(&layout.to_natural(&pt)), pt);
}

#[test]
fn lognormal_fit_matches_closed_form_mle() {
    let data = lognormal_rows([8.0, 8.0], [[0.8, -0.5], [-0.5, 1.0]], 500, 21);
    let spec = FitSpec::new(DgfKind::Normal, LambdaConstraint::FixedAtZero);
    let res = fit(&data, &spec).unwrap();
    assert!(res.converged, "{res:?}");
    let n = data.len() as f64;
    let logs: Vec<Vec<f64>> = data
        .iter()
        .map(|r| r.iter().map(|v| v.ln()).collect())
        .collect();
    let m: Vec<f64> = (0..2)
        .map(|k| logs.iter().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    for k in 0..2 {
        assert!(
            (res.estimates.mu[k] - m[k].exp()).abs() < 1e-5 * m[k].exp(),
            "{:?}",
            res.estimates
        );
        for j in 0..2 {
            let s = logs
                .iter()
                .map(|r| (r[k] - m[k]) * (r[j] - m[j]))
                .sum::<f64>()
                / n;
            assert!(
                (res.estimates.sigma[k][j] - s).abs() < 1e-5,
                "{:?}",
                res.estimates
            );
        }
    }
    // observed information of a log-normal mean: se(μ_k) = μ_k √(σ_kk/n)
    let se = res.standard_errors.as_ref().unwrap();
    let expected = res.estimates.mu[0] * (res.estimates.sigma[0][0] / n).sqrt();
    assert!(
        (se.mu[0] - expected).abs() < 1e-3 * expected,
        "{} vs {expected}",
        se.mu[0]
    );
    assert_eq!(res.n_params, 5);
    assert_eq!(res.aic, 2.0 * res.n_params as f64 - 2.0 * res.loglik);
    let truth = loglik(&res.estimates, &data).unwrap();
    assert!((truth - res.loglik).abs() < 1e-8);
}

#[test]
fn rescaled_data_rescales_mu() {
    let data = lognormal_rows([3.0, 2.0], [[0.3, 0.1], [0.1, 0.2]], 200, 5);
    let scaled: Vec<Vec<f64>> = data.iter().map(|r| vec![r[0] * 2.0, r[1] * 0.5]).collect();
    let spec = FitSpec::new(DgfKind::Normal, LambdaConstraint::Free).without_se();
    let a = fit(&data, &spec).unwrap();
    let b = fit(&scaled, &spec).unwrap();
    assert!((b.estimates.mu[0] / a.estimates.mu[0] - 2.0).abs() < 1e-4);
    assert!((b.estimates.mu[1] / a.estimates.mu[1] - 0.5).abs() < 1e-4);
    for k in 0..2 {
        assert!((a.estimates.lambda[k] - b.estimates.lambda[k]).abs() < 1e-4);
    }
    assert!((a.loglik - b.loglik - data.len() as f64 * (2f64.ln() + 0.5f64.ln())).abs() < 1e-5);
}

#[test]
fn box_cox_t_fit_improves_on_truth() {
    let truth = point(
        DgfKind::StudentT,
        &[6.0],
        &[20.0, 15.0],
        &[0.4, 0.3],
        &[&[0.4, 0.1], &[0.1, 0.3]],
    );
    let dist = truth.distribution().unwrap();
    let data = dist.sample(400, &GibbsConfig::with_seed(8)).unwrap();
    let res = fit(
        &data,
        &FitSpec::new(DgfKind::StudentT, LambdaConstraint::Free),
    )
    .unwrap();
    assert!(res.converged, "{res:?}");
    assert!(res.loglik >= loglik(&truth, &data).unwrap() - 1e-6);
    assert!(
        (res.estimates.mu[0] - 20.0).abs() < 3.0,
        "{:?}",
        res.estimates
    );
    assert!(
        (res.estimates.lambda[1] - 0.3).abs() < 0.5,
        "{:?}",
        res.estimates
    );
    let se = res.standard_errors.expect("standard errors");
    assert!(se.mu.iter().all(|s| *s > 0.0) && se.eta[0].unwrap() > 0.0);
    let accurate = loglik(&res.estimates, &data).unwrap();
    assert!(
        (accurate - res.loglik).abs() < 1e-4 * accurate.abs(),
        "{accurate} vs {}",
        res.loglik
    );
}

#[test]
fn initial_values_rules() {
    let data = lognormal_rows([3.0, 2.0], [[0.3, 0.1], [0.1, 0.2]], 100, 9);
    let start = initial_values(
        &data,
        &FitSpec::new(DgfKind::StudentT, LambdaConstraint::Free),
    )
    .unwrap();
    assert_eq!(start.sigma[0][1], 0.0);
    assert_eq!(start.sigma[1][0], 0.0);
    assert!(start.eta[0] > 0.0);
    let constant = vec![vec![2.0, 2.0]; 10];
    let spec = FitSpec::new(DgfKind::Normal, LambdaConstraint::Free);
    assert!(matches!(
        initial_values(&constant, &spec),
        Err(Error::Initialization(_))
    ));
    assert!(matches!(
        initial_values(&data[..3], &spec),
        Err(Error::Initialization(_))
    ));
}

#[test]
fn tau_profile_recovers_degrees_of_freedom() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x: Vec<Vec<f64>> = (0..3000)
        .map(|_| {
            let z = normals(&mut rng, 2);
            let chi: f64 = normals(&mut rng, 5).iter().map(|v| v * v).sum();
            let r = (chi / 5.0).sqrt();
            vec![z[0] / r, (0.5 * z[0] + z[1]) / r]
        })
        .collect();
    let tau = profile_tau(&x).unwrap();
    assert!((3.5..=7.5).contains(&tau), "{tau}");
}

#[test]
fn independence_fit_sums_the_margins() {
    let data = lognormal_rows([3.0, 2.0], [[0.3, 0.2], [0.2, 0.3]], 200, 2);
    let spec = FitSpec::new(DgfKind::Normal, LambdaConstraint::FixedAtZero);
    let ind = fit(&data, &spec.clone().independent()).unwrap();
    assert_eq!(ind.components.len(), 2);
    assert_eq!(ind.n_params, 4);
    assert!((ind.loglik - ind.components.iter().map(|c| c.loglik).sum::<f64>()).abs() < 1e-9);
    let table = aic_table(&data, &[spec.clone(), spec.clone().independent()]).unwrap();
    assert_eq!(table.best().unwrap().model, "MLN2");
    assert!(aic_table(&data, std::slice::from_ref(&spec)).is_err());
    let mut broken = spec.clone();
    broken.fixed_eta = Some(vec![1.0]);
    let table = aic_table(&data, &[spec, broken]).unwrap();
    assert!(table.entries[1].error.is_some() && table.entries[1].rank.is_none());
}

#[test]
fn gradient_is_stable_across_steps() {
    let data = lognormal_rows([3.0, 2.0], [[0.3, 0.1], [0.1, 0.2]], 100, 12);
    let spec = FitSpec::new(DgfKind::StudentT, LambdaConstraint::Free);
    let layout = Layout::new(&spec, 2);
    let ln_y = ln_rows(&data);
    let objective = Objective::new(&ln_y, &spec, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let th: Vec<f64> = (0..8)
            .map(|i| {
                let u: f64 = rng.sample(Open01);
                match i {
                    0 | 1 => 0.5 + u,
                    2 | 3 => u - 0.5,
                    7 => 1.0 + u,
                    _ => 0.4 * (u - 0.5),
                }
            })
            .collect();
        let f = |t: &[f64]| objective.loglik(&layout.point_from_theta(t)) / data.len() as f64;
        for i in 0..th.len() {
            let d = |h: f64| {
                let mut a = th.clone();
                let mut b = th.clone();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            };
            let (g3, g4, g5) = (d(1e-3), d(1e-4), d(1e-5));
            let scale = g4.abs().max(1e-2);
            assert!(
                (g3 - g4).abs() < 1e-3 * scale && (g4 - g5).abs() < 1e-3 * scale,
                "{i}: {g3} {g4} {g5}"
            );
        }
    }
}
