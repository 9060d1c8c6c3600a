//! Parameter-recovery studies: repeated sampling and refitting of bivariate
//! log-normal, log-t, Box-Cox normal and Box-Cox t models.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgf::DgfKind;
use crate::error::{domain, Error, Result};
use crate::mle::{fit, FitSpec, LambdaConstraint, ParamPoint};
use crate::truncated::{split_seed, GibbsConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    LogNormal2,
    LogT2,
    BoxCoxNormal2,
    BoxCoxT2,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::LogNormal2,
        Scenario::LogT2,
        Scenario::BoxCoxNormal2,
        Scenario::BoxCoxT2,
    ];

    /// Generating parameters.
    pub fn truth(self) -> ParamPoint {
        let (family, eta, mu, lambda, sigma) = match self {
            Scenario::LogNormal2 => (
                DgfKind::Normal,
                vec![],
                [8.0, 8.0],
                [0.0, 0.0],
                [[0.8, -0.5], [-0.5, 1.0]],
            ),
            Scenario::LogT2 => (
                DgfKind::StudentT,
                vec![5.0],
                [7.0, 10.0],
                [0.0, 0.0],
                [[1.2, 0.6], [0.6, 1.4]],
            ),
            Scenario::BoxCoxNormal2 => (
                DgfKind::Normal,
                vec![],
                [5.0, 4.0],
                [-1.0, 0.5],
                [[0.6, 0.2], [0.2, 0.8]],
            ),
            Scenario::BoxCoxT2 => (
                DgfKind::StudentT,
                vec![6.0],
                [20.0, 15.0],
                [0.4, 0.3],
                [[0.4, 0.1], [0.1, 0.3]],
            ),
        };
        ParamPoint {
            family,
            eta,
            mu: mu.to_vec(),
            lambda: lambda.to_vec(),
            sigma: sigma.iter().map(|r| r.to_vec()).collect(),
        }
    }

    pub fn free_lambda(self) -> bool {
        matches!(self, Scenario::BoxCoxNormal2 | Scenario::BoxCoxT2)
    }

    /// The model fitted to each replicate: the generating family, with λ
    /// fixed at zero for the log models.
    pub fn spec(self) -> FitSpec {
        let c = if self.free_lambda() {
            LambdaConstraint::Free
        } else {
            LambdaConstraint::FixedAtZero
        };
        FitSpec::new(self.truth().family, c).without_se()
    }

    /// Names of the summarized parameters, in [`Scenario::values`] order.
    pub fn param_names(self) -> Vec<&'static str> {
        let mut v = vec!["mu1", "mu2"];
        if self.free_lambda() {
            v.extend(["lambda1", "lambda2"]);
        }
        v.extend(["sigma11", "sigma12", "sigma22"]);
        if self.truth().family == DgfKind::StudentT {
            v.push("tau");
        }
        v
    }

    pub fn values(self, pt: &ParamPoint) -> Vec<f64> {
        let mut v = pt.mu.clone();
        if self.free_lambda() {
            v.extend(&pt.lambda);
        }
        v.extend([pt.sigma[0][0], pt.sigma[0][1], pt.sigma[1][1]]);
        v.extend(&pt.eta);
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::LogNormal2 => "lognormal2",
            Scenario::LogT2 => "logt2",
            Scenario::BoxCoxNormal2 => "boxcoxnormal2",
            Scenario::BoxCoxT2 => "boxcoxt2",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown scenario '{s}' (lognormal2, logt2, boxcoxnormal2, boxcoxt2)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// Worker threads; `BCE_THREADS` or the rayon default when unset.
    pub threads: Option<usize>,
}

impl StudyConfig {
    pub fn new(scenario: Scenario, n: usize, replicates: usize, master_seed: u64) -> Self {
        Self {
            scenario,
            n,
            replicates,
            master_seed,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub median: f64,
    /// Median bias, `median(θ̂) - θ`.
    pub mb: f64,
    /// `median |θ̂ - median(θ̂)|`.
    pub mad: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: Scenario,
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub params: Vec<ParamSummary>,
    /// Estimates of the successful replicates, in replicate order.
    pub estimates: Vec<Vec<f64>>,
    pub wall_time_secs: f64,
}

impl StudySummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(name: &str, truth: f64, values: &[f64]) -> ParamSummary {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let median = quantile_sorted(&s, 0.5);
    let mut dev: Vec<f64> = s.iter().map(|v| (v - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    ParamSummary {
        name: name.to_string(),
        truth,
        median,
        mb: median - truth,
        mad: quantile_sorted(&dev, 0.5),
        iqr: quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25),
    }
}

fn replicate(config: &StudyConfig, i: usize) -> Result<Vec<f64>> {
    let sc = config.scenario;
    let seed = split_seed(config.master_seed, i as u64);
    let dist = sc.truth().distribution()?;
    let data = dist.sample(config.n, &GibbsConfig::with_seed(seed))?;
    let mut spec = sc.spec();
    spec.seed = seed;
    let res = fit(&data, &spec)?;
    if !res.converged {
        return Err(Error::Domain(format!(
            "replicate {i} did not converge (gradient norm {:e})",
            res.grad_norm
        )));
    }
    Ok(sc.values(&res.estimates))
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var("BCE_THREADS")
        .ok()?
        .parse()
        .ok()
        .filter(|n| *n > 0)
}

/// Samples and refits `replicates` data sets of size `n`. Replicate `i`
/// uses the seed `split_seed(master_seed, i)`, so results do not depend on
/// the number of threads.
pub fn run_study(config: &StudyConfig) -> Result<StudySummary> {
    if config.replicates < 10 {
        return domain(format!(
            "a study needs at least 10 replicates, got {}",
            config.replicates
        ));
    }
    if config.n < 4 {
        return domain(format!("sample size {} is too small", config.n));
    }
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads.or_else(threads_from_env) {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|i| replicate(config, i))
            .collect()
    });
    let mut estimates = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => estimates.push(v),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let failures = errors.len();
    if failures * 5 > config.replicates {
        return Err(Error::StudyFailed {
            failures,
            replicates: config.replicates,
            detail: errors.first().cloned().unwrap_or_default(),
        });
    }
    let sc = config.scenario;
    let truth = sc.values(&sc.truth());
    let params = sc
        .param_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
            summarize(name, truth[j], &col)
        })
        .collect();
    Ok(StudySummary {
        scenario: sc,
        n: config.n,
        replicates: config.replicates,
        failures,
        params,
        estimates,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
