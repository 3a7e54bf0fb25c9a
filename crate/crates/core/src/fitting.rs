//! Robust multi-start fitting of scaling-law coefficients.
//!
//! The objective is the mean Huber loss of `T(L_pred) - T(L_obs)` over all
//! records, with `T = ln` for the language-style configuration and the
//! identity otherwise. Every free parameter is optimized as its logarithm,
//! which keeps it strictly positive, using BFGS from a set of log-uniform
//! random starts. Parameters listed in [`FitConfig::frozen`] keep their given
//! values bit-for-bit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{ScalingLawCoefficients, SweepDataset};
use crate::optim::{bfgs, BfgsOptions};

/// `0.5 r^2` inside `[-delta, delta]`, `delta (|r| - delta / 2)` outside.
pub fn huber(delta: f64, r: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(delta: f64, r: f64) -> f64 {
    r.clamp(-delta, delta)
}

/// One of the seven free parameters of the joint law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "a_S")]
    SparsityCoef,
    #[serde(rename = "b_S")]
    SparsityExp,
    #[serde(rename = "c_S")]
    SparsityLimit,
    #[serde(rename = "b_N")]
    SizeExp,
    #[serde(rename = "a_D")]
    DataCoef,
    #[serde(rename = "b_D")]
    DataExp,
    #[serde(rename = "c")]
    Irreducible,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::SparsityCoef,
        Param::SparsityExp,
        Param::SparsityLimit,
        Param::SizeExp,
        Param::DataCoef,
        Param::DataExp,
        Param::Irreducible,
    ];

    /// The three parameters refit for a new sparsity pattern.
    pub const SPARSITY_TERM: [Param; 3] = [Param::SparsityCoef, Param::SparsityExp, Param::SparsityLimit];

    pub fn name(self) -> &'static str {
        match self {
            Param::SparsityCoef => "a_S",
            Param::SparsityExp => "b_S",
            Param::SparsityLimit => "c_S",
            Param::SizeExp => "b_N",
            Param::DataCoef => "a_D",
            Param::DataExp => "b_D",
            Param::Irreducible => "c",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn get(self, c: &ScalingLawCoefficients) -> f64 {
        match self {
            Param::SparsityCoef => c.a_s,
            Param::SparsityExp => c.b_s,
            Param::SparsityLimit => c.c_s,
            Param::SizeExp => c.b_n,
            Param::DataCoef => c.a_d,
            Param::DataExp => c.b_d,
            Param::Irreducible => c.c,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter name {s:?}")))
    }
}

/// Sampling interval for random starts: log-uniform when `lo > 0`,
/// uniform when `lo == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartRange {
    pub lo: f64,
    pub hi: f64,
}

impl StartRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        if self.lo > 0.0 {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            // floor keeps ln() finite
            (self.lo + u * (self.hi - self.lo)).max(self.hi * 1e-6)
        }
    }
}

pub fn default_start_ranges() -> BTreeMap<Param, StartRange> {
    BTreeMap::from([
        (Param::SparsityCoef, StartRange::new(1e-2, 1e4)),
        (Param::SparsityExp, StartRange::new(0.05, 3.0)),
        (Param::SparsityLimit, StartRange::new(1e-2, 1e4)),
        (Param::SizeExp, StartRange::new(0.05, 3.0)),
        (Param::DataCoef, StartRange::new(1e4, 1e12)),
        (Param::DataExp, StartRange::new(0.05, 3.0)),
        (Param::Irreducible, StartRange::new(0.0, 10.0)),
    ])
}

fn default_format_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub huber_delta: f64,
    /// Fit on `ln L` rather than `L`.
    pub log_loss: bool,
    pub num_starts: usize,
    #[serde(default = "default_start_ranges")]
    pub start_ranges: BTreeMap<Param, StartRange>,
    pub max_iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub frozen: BTreeMap<Param, f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self::language()
    }
}

impl FitConfig {
    /// Huber on `ln L` with `delta = 1e-3`.
    pub fn language() -> Self {
        Self {
            format_version: 1,
            huber_delta: 1e-3,
            log_loss: true,
            num_starts: 20,
            start_ranges: default_start_ranges(),
            max_iterations: 2000,
            seed: 0,
            frozen: BTreeMap::new(),
        }
    }

    /// Huber on raw `L` with `delta = 1e-2`.
    pub fn vision() -> Self {
        Self {
            huber_delta: 1e-2,
            log_loss: false,
            ..Self::language()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::InvalidInput(format!(
                "unsupported fit config format_version {}",
                self.format_version
            )));
        }
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::InvalidInput(format!("huber_delta must be positive, got {}", self.huber_delta)));
        }
        if self.num_starts == 0 {
            return Err(Error::InvalidInput("num_starts must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        for p in Param::ALL {
            if self.frozen.contains_key(&p) {
                continue;
            }
            let r = self
                .start_ranges
                .get(&p)
                .ok_or_else(|| Error::InvalidInput(format!("missing start range for {p}")))?;
            if !(r.lo >= 0.0 && r.hi > r.lo && r.hi.is_finite()) {
                return Err(Error::InvalidInput(format!("bad start range for {p}: [{}, {}]", r.lo, r.hi)));
            }
        }
        for (p, v) in &self.frozen {
            let ok = if *p == Param::Irreducible || *p == Param::SparsityLimit {
                v.is_finite() && *v >= 0.0
            } else {
                v.is_finite() && *v > 0.0
            };
            if !ok {
                return Err(Error::InvalidInput(format!("frozen value for {p} is invalid: {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub coefficients: ScalingLawCoefficients,
    /// Mean Huber loss at the returned coefficients.
    pub objective_value: f64,
    /// `T(L_pred) - T(L_obs)` per record, in dataset order.
    pub residuals: Vec<f64>,
    pub starts_tried: usize,
    /// Whether any start met the optimizer's termination tolerance.
    pub converged: bool,
    /// Final objective of every start; `None` where the start failed to
    /// produce a finite value.
    pub start_objectives: Vec<Option<f64>>,
}

fn transform(log_loss: bool, l: f64) -> f64 {
    if log_loss {
        l.ln()
    } else {
        l
    }
}

/// Signed residuals `T(L_pred) - T(L_obs)` for each record.
pub fn residuals(data: &SweepDataset, coeffs: &ScalingLawCoefficients, log_loss: bool) -> Vec<f64> {
    data.records
        .iter()
        .map(|r| {
            let pred = coeffs.eval_unchecked(r.sparsity, r.nonzero_params, r.data);
            transform(log_loss, pred) - transform(log_loss, r.loss)
        })
        .collect()
}

/// Mean Huber loss of the residuals.
pub fn objective(data: &SweepDataset, coeffs: &ScalingLawCoefficients, delta: f64, log_loss: bool) -> f64 {
    let res = residuals(data, coeffs, log_loss);
    res.iter().map(|&r| huber(delta, r)).sum::<f64>() / res.len() as f64
}

struct Point {
    log_one_minus_s: f64,
    ln_n: f64,
    ln_d: f64,
    target: f64,
}

struct Problem {
    points: Vec<Point>,
    free: Vec<Param>,
    fixed: [f64; 7],
    delta: f64,
    log_loss: bool,
}

impl Problem {
    fn params(&self, theta: &[f64]) -> [f64; 7] {
        let mut p = self.fixed;
        for (param, t) in self.free.iter().zip(theta) {
            p[param.index()] = t.exp();
        }
        p
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let [a_s, b_s, c_s, b_n, a_d, b_d, c] = self.params(theta);
        let ln_a_d = a_d.ln();
        let mut full = [0.0; 7];
        let mut total = 0.0;
        for pt in &self.points {
            let xb = (b_s * pt.log_one_minus_s).exp();
            let nb = (-b_n * pt.ln_n).exp();
            let factor = a_s * xb + c_s;
            let capacity = factor * nb;
            let ratio_ln = ln_a_d - pt.ln_d;
            let data = (b_d * ratio_ln).exp();
            let pred = capacity + data + c;
            if !pred.is_finite() || (self.log_loss && pred <= 0.0) {
                return f64::INFINITY;
            }
            let r = transform(self.log_loss, pred) - pt.target;
            total += huber(self.delta, r);
            let w = huber_slope(self.delta, r) * if self.log_loss { 1.0 / pred } else { 1.0 };
            // derivatives of pred with respect to ln(param)
            full[0] += w * a_s * xb * nb;
            full[1] += w * a_s * xb * pt.log_one_minus_s * b_s * nb;
            full[2] += w * c_s * nb;
            full[3] -= w * capacity * pt.ln_n * b_n;
            full[4] += w * b_d * data;
            full[5] += w * data * ratio_ln * b_d;
            full[6] += w * c;
        }
        let inv = 1.0 / self.points.len() as f64;
        for (g, param) in grad.iter_mut().zip(&self.free) {
            *g = full[param.index()] * inv;
        }
        total * inv
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Fits all non-frozen parameters of the joint law to `data`.
///
/// Requires at least 8 records spanning at least two distinct values of each
/// of sparsity, size and data.
pub fn fit_full(data: &SweepDataset, config: &FitConfig) -> Result<FitResult> {
    data.validate()?;
    let n = data.len();
    let ds = distinct(data.records.iter().map(|r| r.sparsity));
    let dn = distinct(data.records.iter().map(|r| r.nonzero_params));
    let dd = distinct(data.records.iter().map(|r| r.data));
    if n < 8 || ds < 2 || dn < 2 || dd < 2 {
        return Err(Error::DegenerateData(format!(
            "need >= 8 records and >= 2 distinct values of S, N and D; got {n} records with {ds}/{dn}/{dd} distinct S/N/D"
        )));
    }
    run_fit(data, config)
}

/// Refits only `a_S`, `b_S` and `c_S`, holding `b_N`, `a_D`, `b_D` and `c`
/// at the values in `dense`.
pub fn fit_sparsity_only(
    data: &SweepDataset,
    dense: &ScalingLawCoefficients,
    config: &FitConfig,
) -> Result<FitResult> {
    data.validate()?;
    dense.validate()?;
    let n = data.len();
    let ds = distinct(data.records.iter().map(|r| r.sparsity));
    if n < 3 || ds < 2 {
        return Err(Error::DegenerateData(format!(
            "need >= 3 records spanning >= 2 sparsity levels; got {n} records with {ds} levels"
        )));
    }
    let mut config = config.clone();
    for p in [Param::SizeExp, Param::DataCoef, Param::DataExp, Param::Irreducible] {
        config.frozen.insert(p, p.get(dense));
    }
    run_fit(data, &config)
}

struct StartOutcome {
    value: f64,
    theta: Vec<f64>,
    converged: bool,
}

fn run_fit(data: &SweepDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let free: Vec<Param> = Param::ALL
        .into_iter()
        .filter(|p| !config.frozen.contains_key(p))
        .collect();
    let mut fixed = [0.0; 7];
    for (p, v) in &config.frozen {
        fixed[p.index()] = *v;
    }
    let problem = Problem {
        points: data
            .records
            .iter()
            .map(|r| Point {
                log_one_minus_s: (1.0 - r.sparsity).ln(),
                ln_n: r.nonzero_params.ln(),
                ln_d: r.data.ln(),
                target: transform(config.log_loss, r.loss),
            })
            .collect(),
        free: free.clone(),
        fixed,
        delta: config.huber_delta,
        log_loss: config.log_loss,
    };
    let options = BfgsOptions {
        max_iterations: config.max_iterations,
        ..BfgsOptions::default()
    };

    let outcomes: Vec<StartOutcome> = (0..config.num_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(start as u64);
            let theta0: Vec<f64> = free
                .iter()
                .map(|p| config.start_ranges[p].sample(&mut rng).ln())
                .collect();
            if free.is_empty() {
                let value = problem.value_and_gradient(&theta0, &mut []);
                return StartOutcome { value, theta: theta0, converged: true };
            }
            let min = bfgs(|t, g| problem.value_and_gradient(t, g), &theta0, &options);
            StartOutcome {
                value: min.value,
                converged: min.converged(),
                theta: min.x,
            }
        })
        .collect();

    // Re-score every start with the public objective so the reported values
    // are directly comparable with `objective_value`.
    let scored: Vec<Option<(f64, ScalingLawCoefficients)>> = outcomes
        .iter()
        .map(|o| {
            if !o.value.is_finite() {
                return None;
            }
            let p = problem.params(&o.theta);
            let coeffs = ScalingLawCoefficients::new(
                p[0],
                p[1],
                p[2],
                p[3],
                p[4],
                p[5],
                p[6],
                data.family.clone(),
                data.pattern().to_string(),
            )
            .ok()?;
            let value = objective(data, &coeffs, config.huber_delta, config.log_loss);
            value.is_finite().then_some((value, coeffs))
        })
        .collect();

    // lowest objective, then lowest start index
    let (objective_value, coefficients) = scored
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .map(|(_, s)| s.clone())
        .ok_or_else(|| Error::NoSolution("no start produced a finite objective".into()))?;

    Ok(FitResult {
        format_version: 1,
        residuals: residuals(data, &coefficients, config.log_loss),
        coefficients,
        objective_value,
        starts_tried: config.num_starts,
        converged: outcomes.iter().any(|o| o.converged),
        start_objectives: scored.iter().map(|s| s.as_ref().map(|s| s.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{DataUnit, RunRecord, UNSTRUCTURED};

    #[test]
    fn huber_branches() {
        assert_eq!(huber(1.0, 0.0), 0.0);
        assert!((huber(0.001, 0.0005) - 1.25e-7).abs() < 1e-20);
        assert!((huber(0.001, 0.01) - 9.5e-6).abs() < 1e-18);
        assert_eq!(huber(0.001, -0.01), huber(0.001, 0.01));
        // continuity at the knot
        let d = 0.25;
        assert!((huber(d, d) - huber(d, d * (1.0 + 1e-12))).abs() < 1e-12);
    }

    #[test]
    fn huber_slope_matches_finite_difference() {
        for &r in &[-0.3, -0.01, 0.0005, 0.02, 0.7] {
            let h = 1e-7;
            let fd = (huber(0.05, r + h) - huber(0.05, r - h)) / (2.0 * h);
            assert!((fd - huber_slope(0.05, r)).abs() < 1e-6);
        }
    }

    fn dataset() -> SweepDataset {
        let truth = ScalingLawCoefficients::t5_c4();
        let mut records = Vec::new();
        for &s in &[0.0, 0.5, 0.75] {
            for &n in &[1e6, 4e6, 1.6e7] {
                for &d in &[1e9, 4e9] {
                    let loss = truth.eval_unchecked(s, n, d);
                    records.push(RunRecord::new(s, n, d, loss, UNSTRUCTURED).unwrap());
                }
            }
        }
        SweepDataset::new(records, "t5-c4", DataUnit::Tokens).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = dataset();
        for log_loss in [true, false] {
            let problem = Problem {
                points: data
                    .records
                    .iter()
                    .map(|r| Point {
                        log_one_minus_s: (1.0 - r.sparsity).ln(),
                        ln_n: r.nonzero_params.ln(),
                        ln_d: r.data.ln(),
                        target: transform(log_loss, r.loss),
                    })
                    .collect(),
                free: Param::ALL.to_vec(),
                fixed: [0.0; 7],
                delta: 10.0,
                log_loss,
            };
            let theta: Vec<f64> = [20.0, 0.6, 50.0, 0.3, 5e8, 0.25, 0.8].iter().map(|v: &f64| v.ln()).collect();
            let mut g = vec![0.0; 7];
            problem.value_and_gradient(&theta, &mut g);
            for k in 0..7 {
                let h = 1e-6;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let mut scratch = vec![0.0; 7];
                let fd = (problem.value_and_gradient(&tp, &mut scratch) - problem.value_and_gradient(&tm, &mut scratch)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * fd.abs().max(1e-8), "param {k}: fd {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn degenerate_single_sparsity() {
        let data = dataset().filtered(|_, r| r.sparsity == 0.5).unwrap();
        assert!(matches!(fit_full(&data, &FitConfig::language()), Err(Error::DegenerateData(_))));
        assert!(matches!(
            fit_sparsity_only(&data, &ScalingLawCoefficients::t5_c4(), &FitConfig::language()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::language();
        c.huber_delta = 0.0;
        assert!(c.validate().is_err());
        let mut c = FitConfig::language();
        c.num_starts = 0;
        assert!(c.validate().is_err());
        assert!(FitConfig::vision().validate().is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let mut c = FitConfig::vision();
        c.frozen.insert(Param::SizeExp, 0.245);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"b_N\":0.245"));
        let back: FitConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn param_names_parse() {
        for p in Param::ALL {
            assert_eq!(p.name().parse::<Param>().unwrap(), p);
        }
        assert!("a_N".parse::<Param>().is_err());
    }
}
