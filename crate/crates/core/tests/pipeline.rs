use bce_core::dgf::DgfKind;
use bce_core::io::{read_dataset, write_csv};
use bce_core::mle::{aic_table, FitSpec, LambdaConstraint, ParamPoint};
use bce_core::truncated::GibbsConfig;

fn truth() -> ParamPoint {
    ParamPoint {
        family: DgfKind::Normal,
        eta: vec![],
        mu: vec![6.0, 2.0],
        lambda: vec![0.6, -0.4],
        sigma: vec![vec![0.2, 0.08], vec![0.08, 0.15]],
    }
}

#[test]
fn sample_write_read_and_select_a_model() {
    let rows = truth()
        .distribution()
        .unwrap()
        .sample(600, &GibbsConfig::with_seed(42))
        .unwrap();
    let mut buf = Vec::new();
    let header = vec!["a".to_string(), "b".to_string()];
    write_csv(&mut buf, "seed=42", &header, &rows).unwrap();
    let data = read_dataset(&buf[..]).unwrap();
    assert_eq!(data.rows, rows);

    let specs = vec![
        FitSpec::new(DgfKind::Normal, LambdaConstraint::FixedAtZero),
        FitSpec::new(DgfKind::Normal, LambdaConstraint::Free),
        FitSpec::new(DgfKind::Normal, LambdaConstraint::Free).independent(),
    ];
    let table = aic_table(&data.rows, &specs).unwrap();
    assert_eq!(table.best().unwrap().model, "MBN2");
    let fit = table.get("MBN2").unwrap().result.as_ref().unwrap();
    assert!(fit.converged);
    let se = fit.standard_errors.as_ref().unwrap();
    let t = truth();
    for k in 0..2 {
        assert!((fit.estimates.mu[k] - t.mu[k]).abs() < 4.0 * se.mu[k]);
        assert!((fit.estimates.lambda[k] - t.lambda[k]).abs() < 4.0 * se.lambda[k].unwrap());
    }
    assert_eq!(fit.n_params, 7);
    let ind = table.get("Ind-MBN2").unwrap().result.as_ref().unwrap();
    assert!(ind.estimates.sigma[0][1] == 0.0 && ind.aic > fit.aic);
}
