//! Second-stage refinement.
//!
//! Each party shrinks its first-stage estimate with a weight vector `w`
//! (all ones at the start). The prediction is `p_i = w_i^2 * f_i`, whose
//! derivative in `w` is `2 * w_i * f_i`. After every exchange the parties
//! average their predictions and compare the squared magnitude against the
//! expected totals:
//!
//! ```text
//! ep = (sum p_i^2 / 2) / (sum E_i^2 / 2) = sum p_i^2 / sum E_i^2
//! ```
//!
//! The loop stops once `ep <= lambda` (the learning stoppage).

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataset::{ExpectedVector, PartyId};
use crate::first_stage::FirstStageVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid gradient-descent configuration: {0}")]
    Config(String),
    #[error("step size too large for party {party}: {detail}")]
    StepBound { party: PartyId, detail: String },
    #[error("expected vector has zero magnitude; expectation probability is undefined")]
    UndefinedRatio,
    #[error("no convergence after {iterations} iterations (ep = {last_ep})")]
    NonConvergence {
        iterations: usize,
        last_ep: f64,
        trace: Vec<f64>,
    },
    #[error("diverging: ep increased for {window} consecutive iterations (ep = {last_ep})")]
    Divergence {
        window: usize,
        last_ep: f64,
        trace: Vec<f64>,
    },
    #[error("vector exchange failed: {0}")]
    Exchange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GdMethod {
    Stochastic,
    Batch,
}

impl GdMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GdMethod::Stochastic => "stochastic",
            GdMethod::Batch => "batch",
        }
    }
}

impl fmt::Display for GdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GdMethod {
    type Err = GdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stochastic" | "sgd" => Ok(GdMethod::Stochastic),
            "batch" => Ok(GdMethod::Batch),
            other => Err(GdError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// How the batch step combines per-element gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchAggregate {
    #[default]
    Sum,
    Mean,
}

impl FromStr for BatchAggregate {
    type Err = GdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(BatchAggregate::Sum),
            "mean" => Ok(BatchAggregate::Mean),
            other => Err(GdError::Config(format!("unknown batch aggregate {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub method: GdMethod,
    /// Stochastic learning rate.
    pub eta_s: f64,
    /// Batch learning rate.
    pub eta_b: f64,
    /// Learning stoppage, also called the minimization factor.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Consecutive ep increases tolerated before giving up.
    pub divergence_window: usize,
    pub batch_aggregate: BatchAggregate,
}

impl GdConfig {
    pub const DEFAULT_ETA_S: f64 = 0.00001;
    pub const DEFAULT_ETA_B: f64 = 0.000001;
    pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
    pub const DEFAULT_DIVERGENCE_WINDOW: usize = 10;

    pub fn new(method: GdMethod, lambda: f64) -> Self {
        GdConfig {
            method,
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), GdError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GdError::Config(format!("{name} must be a positive number, got {v}")))
            }
        };
        positive("eta_s", self.eta_s)?;
        positive("eta_b", self.eta_b)?;
        positive("lambda", self.lambda)?;
        if self.max_iterations == 0 {
            return Err(GdError::Config("max_iterations must be at least 1".into()));
        }
        if self.divergence_window == 0 {
            return Err(GdError::Config("divergence_window must be at least 1".into()));
        }
        Ok(())
    }

    fn eta(&self) -> f64 {
        match self.method {
            GdMethod::Stochastic => self.eta_s,
            GdMethod::Batch => self.eta_b,
        }
    }
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            method: GdMethod::Stochastic,
            eta_s: Self::DEFAULT_ETA_S,
            eta_b: Self::DEFAULT_ETA_B,
            lambda: 1.0,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            divergence_window: Self::DEFAULT_DIVERGENCE_WINDOW,
            batch_aggregate: BatchAggregate::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn ones(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector(pub Vec<f64>);

impl PredictionVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub final_p: PredictionVector,
    pub final_ep: f64,
    /// Weight updates performed.
    pub iterations: usize,
    pub elapsed: Duration,
    /// `ep` before each update, then the final value; `iterations + 1` long.
    pub ep_trace: Vec<f64>,
}

impl RunStats {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &RunStats) -> bool {
        self.final_p == other.final_p
            && self.final_ep.to_bits() == other.final_ep.to_bits()
            && self.iterations == other.iterations
            && self.ep_trace == other.ep_trace
    }
}

fn check_len(a: usize, b: usize) -> Result<(), GdError> {
    if a == b {
        Ok(())
    } else {
        Err(GdError::LengthMismatch(a, b))
    }
}

pub fn predict(w: &WeightVector, f: &[f64]) -> Result<PredictionVector, GdError> {
    check_len(w.0.len(), f.len())?;
    Ok(PredictionVector(w.0.iter().zip(f).map(|(w, f)| w * w * f).collect()))
}

/// Elementwise derivative of the prediction with respect to `w`.
pub fn gradient(w: &WeightVector, f: &[f64]) -> Result<Vec<f64>, GdError> {
    check_len(w.0.len(), f.len())?;
    Ok(w.0.iter().zip(f).map(|(w, f)| 2.0 * w * f).collect())
}

/// Each element moves along its own gradient: `w_i -= eta * 2 w_i f_i`.
pub fn step_stochastic(w: &WeightVector, f: &[f64], eta_s: f64) -> Result<WeightVector, GdError> {
    check_len(w.0.len(), f.len())?;
    let mut next = w.clone();
    for (wi, fi) in next.0.iter_mut().zip(f) {
        *wi -= eta_s * (2.0 * *wi * fi);
    }
    Ok(next)
}

/// Every element moves by the same amount, the aggregated gradient of the
/// pre-step weights.
pub fn step_batch(w: &WeightVector, f: &[f64], eta_b: f64, aggregate: BatchAggregate) -> Result<WeightVector, GdError> {
    let g = gradient(w, f)?;
    let total: f64 = g.iter().sum();
    let total = match aggregate {
        BatchAggregate::Sum => total,
        BatchAggregate::Mean => total / g.len() as f64,
    };
    Ok(WeightVector(w.0.iter().map(|wi| wi - eta_b * total).collect()))
}

pub fn party_update(w: &WeightVector, f: &[f64], cfg: &GdConfig) -> Result<WeightVector, GdError> {
    match cfg.method {
        GdMethod::Stochastic => step_stochastic(w, f, cfg.eta_s),
        GdMethod::Batch => step_batch(w, f, cfg.eta_b, cfg.batch_aggregate),
    }
}

/// Elementwise mean of the two parties' predictions.
pub fn combine(ap: &PredictionVector, bp: &PredictionVector) -> Result<PredictionVector, GdError> {
    check_len(ap.len(), bp.len())?;
    Ok(PredictionVector(ap.0.iter().zip(&bp.0).map(|(a, b)| (a + b) / 2.0).collect()))
}

/// `sum p_i^2 / sum E_i^2`.
pub fn expectation_probability(p: &PredictionVector, e: &ExpectedVector) -> Result<f64, GdError> {
    check_len(p.len(), e.len())?;
    let den: f64 = e.values.iter().map(|x| x * x).sum();
    if den == 0.0 {
        return Err(GdError::UndefinedRatio);
    }
    Ok(p.0.iter().map(|x| x * x).sum::<f64>() / den)
}

/// Rejects learning rates for which some weight would not shrink
/// monotonically toward zero: `2 eta f_i < 1` per element (stochastic), or
/// `2 eta sum f < 1` for the shared batch decrement (`mean` with `Mean`).
pub fn check_step_bound(f: &FirstStageVector, cfg: &GdConfig) -> Result<(), GdError> {
    let (scale, what) = match cfg.method {
        GdMethod::Stochastic => (f.max(), "max f"),
        GdMethod::Batch => match cfg.batch_aggregate {
            BatchAggregate::Sum => (f.sum(), "sum f"),
            BatchAggregate::Mean => (f.sum() / f.len() as f64, "mean f"),
        },
    };
    let bound = 2.0 * cfg.eta() * scale;
    if bound < 1.0 {
        Ok(())
    } else {
        Err(GdError::StepBound {
            party: f.party,
            detail: format!("2 * eta * {what} = 2 * {} * {scale} = {bound} >= 1", cfg.eta()),
        })
    }
}

struct Loop<'a> {
    cfg: &'a GdConfig,
    e: &'a ExpectedVector,
    trace: Vec<f64>,
    rising: usize,
}

enum Verdict {
    Stop(f64),
    Continue,
}

impl Loop<'_> {
    fn observe(&mut self, p: &PredictionVector, iterations: usize) -> Result<Verdict, GdError> {
        let ep = expectation_probability(p, self.e)?;
        if let Some(&prev) = self.trace.last() {
            self.rising = if ep > prev { self.rising + 1 } else { 0 };
        }
        self.trace.push(ep);
        if ep <= self.cfg.lambda {
            return Ok(Verdict::Stop(ep));
        }
        if self.rising >= self.cfg.divergence_window {
            return Err(GdError::Divergence {
                window: self.cfg.divergence_window,
                last_ep: ep,
                trace: std::mem::take(&mut self.trace),
            });
        }
        if iterations >= self.cfg.max_iterations {
            return Err(GdError::NonConvergence {
                iterations,
                last_ep: ep,
                trace: std::mem::take(&mut self.trace),
            });
        }
        Ok(Verdict::Continue)
    }
}

fn preflight(fs: &[&FirstStageVector], e: &ExpectedVector, cfg: &GdConfig) -> Result<(), GdError> {
    cfg.validate()?;
    for f in fs {
        check_len(f.len(), e.len())?;
        check_step_bound(f, cfg)?;
    }
    Ok(())
}

/// One party's side of the refinement loop.
///
/// `exchange` publishes this party's prediction and returns the peer's.
/// Both parties run the same loop in lockstep; since they combine the same
/// two vectors they reach the same `ep` and stop on the same iteration.
pub fn run_party<X>(own_f: &FirstStageVector, e: &ExpectedVector, cfg: &GdConfig, mut exchange: X) -> Result<RunStats, GdError>
where
    X: FnMut(&PredictionVector) -> Result<PredictionVector, GdError>,
{
    preflight(&[own_f], e, cfg)?;
    let start = Instant::now();
    let f = own_f.values();
    let mut w = WeightVector::ones(f.len());
    let mut state = Loop {
        cfg,
        e,
        trace: Vec::new(),
        rising: 0,
    };
    let mut iterations = 0;
    loop {
        let mine = predict(&w, f)?;
        let theirs = exchange(&mine)?;
        check_len(theirs.len(), mine.len())?;
        let p = match own_f.party {
            PartyId::A => combine(&mine, &theirs)?,
            PartyId::B => combine(&theirs, &mine)?,
        };
        if let Verdict::Stop(ep) = state.observe(&p, iterations)? {
            return Ok(RunStats {
                final_p: p,
                final_ep: ep,
                iterations,
                elapsed: start.elapsed(),
                ep_trace: state.trace,
            });
        }
        w = party_update(&w, f, cfg)?;
        iterations += 1;
    }
}

/// Both parties' loops in one thread, exchanging vectors in memory.
pub fn run_second_stage(
    af: &FirstStageVector,
    bf: &FirstStageVector,
    e: &ExpectedVector,
    cfg: &GdConfig,
) -> Result<RunStats, GdError> {
    preflight(&[af, bf], e, cfg)?;
    let start = Instant::now();
    let mut wa = WeightVector::ones(af.len());
    let mut wb = WeightVector::ones(bf.len());
    let mut state = Loop {
        cfg,
        e,
        trace: Vec::new(),
        rising: 0,
    };
    let mut iterations = 0;
    loop {
        let ap = predict(&wa, af.values())?;
        let bp = predict(&wb, bf.values())?;
        let p = combine(&ap, &bp)?;
        if let Verdict::Stop(ep) = state.observe(&p, iterations)? {
            return Ok(RunStats {
                final_p: p,
                final_ep: ep,
                iterations,
                elapsed: start.elapsed(),
                ep_trace: state.trace,
            });
        }
        wa = party_update(&wa, af.values(), cfg)?;
        wb = party_update(&wb, bf.values(), cfg)?;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(party: PartyId, v: &[f64]) -> FirstStageVector {
        FirstStageVector::new(party, v.to_vec()).unwrap()
    }

    fn toy() -> (FirstStageVector, FirstStageVector, ExpectedVector) {
        (
            fv(PartyId::A, &[270.0, 400.0]),
            fv(PartyId::B, &[350.0, 400.0]),
            ExpectedVector {
                values: vec![200.0, 380.0],
            },
        )
    }

    #[test]
    fn prediction_and_gradient() {
        let ones = WeightVector::ones(2);
        assert_eq!(predict(&ones, &[270.0, 400.0]).unwrap().0, [270.0, 400.0]);
        assert_eq!(predict(&WeightVector(vec![0.0, 0.0]), &[3.0, 4.0]).unwrap().0, [0.0, 0.0]);
        assert_eq!(predict(&WeightVector(vec![0.5]), &[100.0]).unwrap().0, [25.0]);
        assert_eq!(gradient(&ones, &[270.0, 400.0]).unwrap(), [540.0, 800.0]);
        assert_eq!(gradient(&WeightVector(vec![0.0]), &[7.0]).unwrap(), [0.0]);
        assert_eq!(predict(&ones, &[1.0]), Err(GdError::LengthMismatch(2, 1)));
    }

    #[test]
    fn single_steps() {
        let ones = WeightVector::ones(2);
        assert_eq!(step_stochastic(&ones, &[270.0, 400.0], 1e-5).unwrap().0, [0.9946, 0.9920]);
        assert_eq!(
            step_batch(&ones, &[270.0, 400.0], 1e-6, BatchAggregate::Sum).unwrap().0,
            [0.99866, 0.99866]
        );
        assert_eq!(
            step_batch(&ones, &[270.0, 400.0], 1e-6, BatchAggregate::Mean).unwrap().0,
            [1.0 - 1e-6 * 670.0; 2]
        );
        assert_eq!(step_stochastic(&ones, &[0.0, 0.0], 1e-5).unwrap(), ones);
        assert_eq!(step_batch(&ones, &[0.0, 0.0], 1e-6, BatchAggregate::Sum).unwrap(), ones);
        let one = WeightVector(vec![0.8]);
        assert_eq!(
            step_batch(&one, &[123.0], 1e-4, BatchAggregate::Sum).unwrap(),
            step_stochastic(&one, &[123.0], 1e-4).unwrap()
        );
    }

    #[test]
    fn update_dispatches_on_method() {
        let w = WeightVector(vec![0.9, 0.7]);
        let f = [270.0, 400.0];
        let mut cfg = GdConfig::default();
        assert_eq!(party_update(&w, &f, &cfg).unwrap(), step_stochastic(&w, &f, cfg.eta_s).unwrap());
        cfg.method = GdMethod::Batch;
        assert_eq!(
            party_update(&w, &f, &cfg).unwrap(),
            step_batch(&w, &f, cfg.eta_b, BatchAggregate::Sum).unwrap()
        );
        assert!("newton".parse::<GdMethod>().is_err());
    }

    #[test]
    fn combine_and_ep() {
        let a = PredictionVector(vec![270.0, 400.0]);
        let b = PredictionVector(vec![350.0, 400.0]);
        let p = combine(&a, &b).unwrap();
        assert_eq!(p.0, [310.0, 400.0]);
        assert_eq!(combine(&b, &a).unwrap(), p);
        assert_eq!(combine(&a, &a).unwrap(), a);
        let e = ExpectedVector {
            values: vec![200.0, 380.0],
        };
        let ep = expectation_probability(&p, &e).unwrap();
        assert!((ep - 256100.0 / 184400.0).abs() <= 1e-12 * ep);
        let e_same = ExpectedVector { values: p.0.clone() };
        assert_eq!(expectation_probability(&p, &e_same).unwrap(), 1.0);
        assert_eq!(expectation_probability(&PredictionVector(vec![0.0, 0.0]), &e).unwrap(), 0.0);
        let zero = ExpectedVector { values: vec![0.0, 0.0] };
        assert_eq!(expectation_probability(&p, &zero), Err(GdError::UndefinedRatio));
    }

    #[test]
    fn immediate_stop_when_already_below_stoppage() {
        let (af, bf, e) = toy();
        let stats = run_second_stage(&af, &bf, &e, &GdConfig::new(GdMethod::Stochastic, 1.39)).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(stats.ep_trace.len(), 1);
        assert!((stats.final_ep - 1.38882863340564).abs() < 1e-12);
    }

    #[test]
    fn step_bound_is_enforced_before_iterating() {
        let (_, bf, e) = toy();
        let af = fv(PartyId::A, &[270.0, 100.0]);
        let mut cfg = GdConfig::new(GdMethod::Stochastic, 1.0);
        cfg.eta_s = 0.01;
        let err = run_second_stage(&af, &bf, &e, &cfg).unwrap_err();
        assert!(matches!(err, GdError::StepBound { party: PartyId::A, .. }), "{err:?}");
        let mut cfg = GdConfig::new(GdMethod::Batch, 1.0);
        cfg.eta_b = 1.0 / 1300.0;
        assert!(matches!(run_second_stage(&af, &bf, &e, &cfg), Err(GdError::StepBound { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(GdConfig::new(GdMethod::Stochastic, 0.0).validate().is_err());
        assert!(GdConfig::new(GdMethod::Stochastic, -1.0).validate().is_err());
        let cfg = GdConfig { max_iterations: 0, ..GdConfig::default() };
        assert!(cfg.validate().is_err());
        let d = GdConfig::default();
        assert_eq!((d.eta_s, d.eta_b), (0.00001, 0.000001));
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let (af, bf, e) = toy();
        let mut cfg = GdConfig::new(GdMethod::Stochastic, 0.01);
        cfg.max_iterations = 5;
        match run_second_stage(&af, &bf, &e, &cfg).unwrap_err() {
            GdError::NonConvergence { iterations, trace, .. } => {
                assert_eq!(iterations, 5);
                assert_eq!(trace.len(), 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exchange_failure_propagates() {
        let (af, _, e) = toy();
        let err = run_party(&af, &e, &GdConfig::default(), |_| Err(GdError::Exchange("gone".into()))).unwrap_err();
        assert_eq!(err, GdError::Exchange("gone".into()));
    }

    #[test]
    fn party_loops_agree_with_local_loop() {
        let (af, bf, e) = toy();
        for method in [GdMethod::Stochastic, GdMethod::Batch] {
            let cfg = GdConfig::new(method, 0.5);
            let local = run_second_stage(&af, &bf, &e, &cfg).unwrap();
            // Drive A's loop with B's predictions computed alongside.
            let mut wb = WeightVector::ones(2);
            let a = run_party(&af, &e, &cfg, |_| {
                let bp = predict(&wb, bf.values())?;
                wb = party_update(&wb, bf.values(), &cfg)?;
                Ok(bp)
            })
            .unwrap();
            assert!(a.same_outcome(&local), "{method}");
            assert!(local.final_ep <= 0.5);
        }
    }
}
