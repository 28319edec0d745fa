//! Online credit assignment over a bank of predictive modules.
//!
//! Each source `n` carries a credit `p^n`. At every step the credits are
//! multiplied by the Gaussian error kernel `exp(-(e^n)^2 / 2 sigma^2)` and
//! renormalised; the running classification is the source with the largest
//! credit. Credits are stored as normalised log-credits so that long runs of
//! large errors cannot underflow the state itself.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of user-supplied priors.
const PRIOR_SUM_TOL: f64 = 1e-9;

/// Parameters of the credit recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Error scale of the Gaussian kernel. Small values react faster to
    /// switching, large values are less sensitive to noise.
    pub sigma: f64,
    /// Lower clamp applied to every credit after each update.
    pub credit_floor: f64,
    pub n_sources: usize,
}

impl EngineConfig {
    pub const DEFAULT_SIGMA: f64 = 1.0;
    pub const DEFAULT_FLOOR: f64 = 1e-4;

    pub fn new(n_sources: usize) -> Self {
        Self { sigma: Self::DEFAULT_SIGMA, credit_floor: Self::DEFAULT_FLOOR, n_sources }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_floor(mut self, credit_floor: f64) -> Self {
        self.credit_floor = credit_floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 {
            return Err(Error::Config("n_sources must be at least 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        let bound = 1.0 / self.n_sources as f64;
        if !(self.credit_floor >= 0.0 && self.credit_floor < bound) {
            return Err(Error::Config(format!("credit_floor must lie in [0, {bound}), got {}", self.credit_floor)));
        }
        Ok(())
    }
}

/// Normalised credits of the N sources after `step_index` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct CreditVector {
    log_credits: Vec<f64>,
    step_index: usize,
}

impl CreditVector {
    pub fn uniform(n: usize) -> Self {
        let l = -(n as f64).ln();
        Self { log_credits: vec![l; n], step_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.log_credits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_credits.is_empty()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn log_credits(&self) -> &[f64] {
        &self.log_credits
    }

    /// Credits in the linear domain, summing to one.
    pub fn credits(&self) -> Vec<f64> {
        let max = self.log_credits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = self.log_credits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    fn from_linear(p: &[f64], step_index: usize) -> Self {
        let total: f64 = p.iter().sum();
        Self { log_credits: p.iter().map(|v| (v / total).ln()).collect(), step_index }
    }
}

/// Result of one credit update.
#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub state: CreditVector,
    /// Every kernel term underflowed; the step carried no information and
    /// the credits were left unchanged.
    pub uninformative: bool,
}

/// One step of an online run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub errors: Vec<f64>,
    pub credits_after: CreditVector,
    pub winner: usize,
    pub uninformative: bool,
}

/// Initial credits: the given priors, or uniform when `priors` is `None`.
pub fn init_credits(config: &EngineConfig, priors: Option<&[f64]>) -> Result<CreditVector> {
    config.validate()?;
    let n = config.n_sources;
    let Some(priors) = priors else {
        return Ok(CreditVector::uniform(n));
    };
    if priors.len() != n {
        return Err(Error::Dimension { expected: n, got: priors.len(), context: "priors" });
    }
    if let Some(bad) = priors.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Prior(format!("entries must be positive, got {bad}")));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(Error::Prior(format!("entries must sum to 1, got {total}")));
    }
    Ok(CreditVector::from_linear(priors, 0))
}

/// Multiplies each credit by its Gaussian error kernel and renormalises,
/// then applies the credit floor.
pub fn update_credits(state: &CreditVector, errors: &[f64], config: &EngineConfig) -> Result<Update> {
    let n = state.len();
    if errors.len() != n {
        return Err(Error::Dimension { expected: n, got: errors.len(), context: "error vector" });
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("prediction errors"));
    }
    let scale = 2.0 * config.sigma * config.sigma;
    let terms: Vec<f64> = state.log_credits.iter().zip(errors).map(|(l, e)| l - e * e / scale).collect();
    let lse = log_sum_exp(&terms);
    if !(lse >= f64::MIN_POSITIVE.ln()) {
        return Ok(Update {
            state: CreditVector { log_credits: state.log_credits.clone(), step_index: state.step_index + 1 },
            uninformative: true,
        });
    }
    let mut next =
        CreditVector { log_credits: terms.iter().map(|t| t - lse).collect(), step_index: state.step_index + 1 };
    if config.credit_floor > 0.0 {
        let mut p = next.credits();
        if p.iter().any(|v| *v < config.credit_floor) {
            p.iter_mut().for_each(|v| *v = v.max(config.credit_floor));
            next = CreditVector::from_linear(&p, next.step_index);
        }
    }
    Ok(Update { state: next, uninformative: false })
}

/// Index of the largest credit; ties go to the lowest index.
pub fn classify(state: &CreditVector) -> usize {
    argmax(state.log_credits())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Streaming wrapper around [`update_credits`].
#[derive(Clone, Debug)]
pub struct Engine {
    config: EngineConfig,
    state: CreditVector,
}

impl Engine {
    pub fn new(config: EngineConfig, priors: Option<&[f64]>) -> Result<Self> {
        let state = init_credits(&config, priors)?;
        Ok(Self { config, state })
    }

    pub fn state(&self) -> &CreditVector {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn winner(&self) -> usize {
        classify(&self.state)
    }

    pub fn step(&mut self, errors: &[f64]) -> Result<StepRecord> {
        let Update { state, uninformative } = update_credits(&self.state, errors, &self.config)?;
        self.state = state;
        Ok(StepRecord {
            errors: errors.to_vec(),
            credits_after: self.state.clone(),
            winner: classify(&self.state),
            uninformative,
        })
    }
}

/// Folds [`update_credits`] over a sequence of error vectors, starting from
/// uniform credits.
pub fn run_stream<E: AsRef<[f64]>>(predictor_errors: &[E], config: &EngineConfig) -> Result<Vec<StepRecord>> {
    let mut engine = Engine::new(config.clone(), None)?;
    predictor_errors.iter().map(|e| engine.step(e.as_ref())).collect()
}

/// Writes `step,e_1..e_N,p_1..p_N,winner` rows with a header line.
/// Winners are zero-based source indices.
pub fn write_trajectory<W: Write>(records: &[StepRecord], n_sources: usize, out: &mut W) -> std::io::Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend((1..=n_sources).map(|n| format!("e_{n}")));
    header.extend((1..=n_sources).map(|n| format!("p_{n}")));
    header.push("winner".into());
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![r.credits_after.step_index().to_string()];
        row.extend(r.errors.iter().map(|e| format!("{e:e}")));
        row.extend(r.credits_after.credits().iter().map(|p| format!("{p:e}")));
        row.push(r.winner.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// One parsed row of a trajectory file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub errors: Vec<f64>,
    pub credits: Vec<f64>,
    pub winner: usize,
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io("trajectory", e))?,
        None => return Err(Error::parse("trajectory", "missing header")),
    };
    let cols = header.split(',').count();
    if cols < 4 || (cols - 2) % 2 != 0 {
        return Err(Error::parse("trajectory", format!("bad header `{header}`")));
    }
    let n = (cols - 2) / 2;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("trajectory", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::parse("trajectory", format!("line {}: expected {cols} fields", lineno + 2)));
        }
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| Error::parse("trajectory", format!("line {}: {e}", lineno + 2)))
        };
        let int = |s: &str| {
            s.trim().parse::<usize>().map_err(|e| Error::parse("trajectory", format!("line {}: {e}", lineno + 2)))
        };
        rows.push(TrajectoryRow {
            step: int(fields[0])?,
            errors: fields[1..=n].iter().map(|s| num(s)).collect::<Result<_>>()?,
            credits: fields[n + 1..=2 * n].iter().map(|s| num(s)).collect::<Result<_>>()?,
            winner: int(fields[cols - 1])?,
        });
    }
    Ok(rows)
}
