//! Ramsey-type qubit measurement models: outcome probabilities, stochastic
//! outcome simulation, and log-likelihoods for the frequency-estimation
//! problems (with and without dephasing, and joint (omega, T2^-1)).

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::{Error, Result};

/// Probability clamp applied before taking logs: keeps -inf out of the
/// weight arithmetic while leaving effective-zero weights effectively zero.
const P_CLAMP_LO: f64 = 1e-300;
const P_CLAMP_HI: f64 = 1.0 - 1e-16;

/// Which estimation problem the model describes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    /// Frequency estimation without decoherence (T2 = infinity).
    FreqNoDecoherence,
    /// Frequency estimation with a known, finite T2.
    FreqKnownT2(f64),
    /// Joint estimation of (omega, T2^-1); theta carries both parameters.
    FreqAndT2Inv,
}

/// Likelihood evaluator and outcome simulator for one estimation problem.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentModel {
    pub kind: ModelKind,
    /// Independent identical experiments per step (1 for single-parameter
    /// problems, 100 for the two-parameter ones).
    pub shots_per_step: u32,
}

/// One experiment design: the free evolution time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Design {
    pub t: f64,
}

/// Count of outcome-0 results among the shots of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub zeros: u32,
}

/// Probability of measuring outcome 0:
/// exp(-t * t2_inv) * cos^2(omega t / 2) + (1 - exp(-t * t2_inv)) / 2.
///
/// `t2_inv = 0` encodes T2 = infinity. The probability of outcome 1 is
/// `1 - p_zero` exactly.
pub fn p_zero(omega: f64, t2_inv: f64, t: f64) -> f64 {
    let decay = (-t * t2_inv).exp();
    decay * (0.5 * omega * t).cos().powi(2) + 0.5 * (1.0 - decay)
}

impl ExperimentModel {
    pub fn new(kind: ModelKind, shots_per_step: u32) -> Result<Self> {
        if let ModelKind::FreqKnownT2(t2) = kind {
            if !(t2.is_finite() && t2 > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "known T2 must be finite and positive, got {t2}"
                )));
            }
        }
        if shots_per_step == 0 {
            return Err(Error::InvalidArgument("shots_per_step must be >= 1".into()));
        }
        Ok(Self { kind, shots_per_step })
    }

    /// Dimension of the parameter vector theta.
    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::FreqAndT2Inv => 2,
            _ => 1,
        }
    }

    fn p_zero_at(&self, theta: &[f64], t: f64) -> f64 {
        match self.kind {
            ModelKind::FreqNoDecoherence => p_zero(theta[0], 0.0, t),
            ModelKind::FreqKnownT2(t2) => p_zero(theta[0], 1.0 / t2, t),
            ModelKind::FreqAndT2Inv => p_zero(theta[0], theta[1], t),
        }
    }

    /// Simulates one step: zeros ~ Binomial(shots_per_step, p_zero(truth, t)).
    pub fn simulate<R: Rng>(&self, truth: &[f64], design: Design, rng: &mut R) -> Outcome {
        let p = self.p_zero_at(truth, design.t).clamp(0.0, 1.0);
        let zeros = Binomial::new(self.shots_per_step as u64, p)
            .expect("probability in [0, 1]")
            .sample(rng) as u32;
        Outcome { zeros }
    }

    /// Log-likelihood of `outcome` as a function of theta:
    /// zeros * ln p0 + (shots - zeros) * ln(1 - p0).
    ///
    /// The binomial coefficient is omitted; it cancels in the normalized
    /// Bayes update, so the normalization returned by the update is likewise
    /// coefficient-free. Probabilities are clamped before the log.
    pub fn log_likelihood(&self, design: Design, outcome: Outcome) -> impl Fn(&[f64]) -> f64 {
        let model = *self;
        let zeros = outcome.zeros.min(self.shots_per_step) as f64;
        let ones = (self.shots_per_step - outcome.zeros.min(self.shots_per_step)) as f64;
        move |theta: &[f64]| {
            let p0 = model.p_zero_at(theta, design.t).clamp(P_CLAMP_LO, P_CLAMP_HI);
            zeros * p0.ln() + ones * (1.0 - p0).ln()
        }
    }
}
