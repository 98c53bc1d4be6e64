//! The four experiment-design heuristics behind a single interface: given
//! the current estimation state, return the evolution time for the next
//! experiment.

use std::path::Path;

use crate::model::Design;
use crate::nn::{self, MlpParams};
use crate::smc::ParticleFilter;
use crate::{Error, Result};

/// Number of past design times carried in the observation.
pub const ACTION_WINDOW: usize = 30;

/// Retry budget for PGH before a coincident pair is treated as a collapsed
/// filter.
const PGH_MAX_ATTEMPTS: usize = 100;

/// What a heuristic sees before each experiment.
#[derive(Clone, Debug)]
pub struct Observation {
    /// Posterior mean, d values.
    pub posterior_mean: Vec<f64>,
    /// Upper triangle of the posterior covariance, row-major, d(d+1)/2 values.
    pub posterior_cov_flat: Vec<f64>,
    /// Last design times, newest first, zero-padded.
    pub recent_actions: [f64; ACTION_WINDOW],
    /// Resource used so far, normalized by the cap (experiments/N or time/T).
    pub resource_consumed: f64,
    /// Mean outcome label of the previous batched step; present only when
    /// the model runs more than one shot per step.
    pub batch_mean_outcome: Option<f64>,
}

impl Observation {
    pub fn param_dim(&self) -> usize {
        self.posterior_mean.len()
    }

    /// Trace of the posterior covariance, read off the flattened triangle.
    pub fn traced_covariance(&self) -> f64 {
        let d = self.param_dim();
        let mut trace = 0.0;
        let mut idx = 0;
        for i in 0..d {
            trace += self.posterior_cov_flat[idx];
            idx += d - i;
        }
        trace
    }

    /// Length of the flattened observation vector.
    pub fn dim(&self) -> usize {
        let d = self.param_dim();
        d + d * (d + 1) / 2 + ACTION_WINDOW + 1 + usize::from(self.batch_mean_outcome.is_some())
    }

    /// Flattens to the frozen layout: mean, covariance triangle, action
    /// window, resource consumed, then the batch outcome when present.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.posterior_mean);
        out.extend_from_slice(&self.posterior_cov_flat);
        out.extend_from_slice(&self.recent_actions);
        out.push(self.resource_consumed);
        if let Some(b) = self.batch_mean_outcome {
            out.push(b);
        }
        out
    }
}

/// A chosen heuristic, parseable from the CLI grammar
/// `exp-sparse | sigma-inv | pgh | nn:<path>`.
#[derive(Clone, Debug)]
pub enum HeuristicSpec {
    ExpSparse,
    SigmaInv,
    Pgh,
    Nn(MlpParams),
}

impl HeuristicSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exp-sparse" => Ok(Self::ExpSparse),
            "sigma-inv" => Ok(Self::SigmaInv),
            "pgh" => Ok(Self::Pgh),
            _ => {
                if let Some(path) = s.strip_prefix("nn:") {
                    let file = nn::ModelFile::load(Path::new(path))?;
                    Ok(Self::Nn(file.params()?))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown heuristic '{s}' (expected exp-sparse | sigma-inv | pgh | nn:<path>)"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ExpSparse => "exp-sparse",
            Self::SigmaInv => "sigma-inv",
            Self::Pgh => "pgh",
            Self::Nn(_) => "nn",
        }
    }

    /// Dispatches to the concrete heuristic and clips the result to the
    /// environment's time cap (single-step times above the cap are
    /// meaningless under the resource limits).
    pub fn next_design(
        &self,
        step_index: usize,
        obs: &Observation,
        filter: &mut ParticleFilter,
        time_cap: f64,
    ) -> Result<Design> {
        let design = match self {
            Self::ExpSparse => exp_sparse(step_index)?,
            Self::SigmaInv => sigma_inv(obs)?,
            Self::Pgh => pgh(filter)?,
            Self::Nn(params) => nn_heuristic(obs, params)?,
        };
        Ok(Design { t: design.t.min(time_cap) })
    }
}

/// Non-adaptive exponentially sparse schedule t_k = (9/8)^k, k >= 1.
pub fn exp_sparse(step_index: usize) -> Result<Design> {
    if step_index < 1 {
        return Err(Error::InvalidArgument("step index starts at 1".into()));
    }
    Ok(Design { t: (9.0f64 / 8.0).powi(step_index as i32) })
}

/// Inverse posterior standard deviation: t = tr[Cov]^(-1/2).
pub fn sigma_inv(obs: &Observation) -> Result<Design> {
    let trace = obs.traced_covariance();
    if !(trace > 0.0) {
        return Err(Error::DegeneratePosterior(format!(
            "traced covariance {trace} leaves sigma-inv undefined"
        )));
    }
    Ok(Design { t: trace.powf(-0.5) })
}

/// Particle guess heuristic: inverse distance of two posterior samples.
/// Coincident pairs are redrawn; a full retry budget of coincidences signals
/// filter collapse and errors out.
pub fn pgh(filter: &mut ParticleFilter) -> Result<Design> {
    for _ in 0..PGH_MAX_ATTEMPTS {
        let (a, b) = filter.sample_two();
        let dist: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if dist > 0.0 {
            return Ok(Design { t: 1.0 / dist });
        }
    }
    Err(Error::DegeneratePosterior(format!(
        "{PGH_MAX_ATTEMPTS} coincident particle pairs in a row"
    )))
}

/// Neural-network heuristic: flatten the observation, run the forward pass,
/// and map the raw output to a strictly positive time.
pub fn nn_heuristic(obs: &Observation, params: &MlpParams) -> Result<Design> {
    let input = obs.flatten();
    if input.len() != params.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "observation has {} features, network expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let raw = nn::forward(params, &input)?;
    Ok(Design { t: nn::output_map(raw) })
}
