//! Episodic estimation environments: resource accounting, observation
//! construction, reward emission, and episode lifecycle for the eight
//! registered estimation problems.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::heuristics::{HeuristicSpec, Observation, ACTION_WINDOW};
use crate::model::{Design, ExperimentModel, ModelKind, Outcome};
use crate::nn::ObservationSchema;
use crate::rng::rng_from_seed;
use crate::smc::{Domain, ParticleFilter, DEFAULT_LIU_WEST_A, DEFAULT_RESAMPLE_THRESHOLD};
use crate::{Error, Result};

/// Which resource ends an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResourceMode {
    ExperimentLimited,
    TimeLimited,
}

impl ResourceMode {
    pub fn schema_name(self) -> &'static str {
        match self {
            ResourceMode::ExperimentLimited => "experiments",
            ResourceMode::TimeLimited => "time",
        }
    }
}

/// Full description of one estimation problem as an environment.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub model: ExperimentModel,
    pub prior: Domain,
    pub mode: ResourceMode,
    pub experiment_cap: usize,
    pub time_cap: f64,
    pub particles: usize,
    /// Sensor dead time added to the clock after every experiment.
    pub dead_time: f64,
    /// Analytic traced covariance of the prior; pins the reward baseline so
    /// it does not fluctuate with the sampled filter.
    pub reward_const: f64,
    pub resample_threshold: f64,
    pub liu_west_a: f64,
}

/// The eight registered environment names, bound to the resource-limit table
/// in order.
pub const ENV_NAMES: [&str; 8] = [
    "freq-inf-exp",
    "freq-inf-time",
    "freq-t2-100-exp",
    "freq-t2-100-time",
    "freq-t2-10-exp",
    "freq-t2-10-time",
    "multi-exp",
    "multi-time",
];

impl EnvConfig {
    /// Looks up a registered environment by name.
    pub fn by_name(name: &str) -> Result<EnvConfig> {
        let (kind, shots, mode, experiment_cap, time_cap, particles) = match name {
            "freq-inf-exp" => (ModelKind::FreqNoDecoherence, 1, ResourceMode::ExperimentLimited, 20, 1e27, 2_000),
            "freq-inf-time" => (ModelKind::FreqNoDecoherence, 1, ResourceMode::TimeLimited, 100, 100.0, 2_000),
            "freq-t2-100-exp" => (ModelKind::FreqKnownT2(100.0), 1, ResourceMode::ExperimentLimited, 125, 1e27, 20_000),
            "freq-t2-100-time" => (ModelKind::FreqKnownT2(100.0), 1, ResourceMode::TimeLimited, 1_000, 2_500.0, 20_000),
            "freq-t2-10-exp" => (ModelKind::FreqKnownT2(10.0), 1, ResourceMode::ExperimentLimited, 125, 1e27, 20_000),
            "freq-t2-10-time" => (ModelKind::FreqKnownT2(10.0), 1, ResourceMode::TimeLimited, 1_000, 2_500.0, 20_000),
            "multi-exp" => (ModelKind::FreqAndT2Inv, 100, ResourceMode::ExperimentLimited, 500, 1e27, 2_000),
            "multi-time" => (ModelKind::FreqAndT2Inv, 100, ResourceMode::TimeLimited, 4_000, 2_500.0, 2_000),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown environment '{name}' (expected one of {})",
                    ENV_NAMES.join(", ")
                )))
            }
        };
        let model = ExperimentModel::new(kind, shots)?;
        let prior = if model.dim() == 2 {
            Domain::new(vec![(0.0, 1.0), (0.09, 0.11)])?
        } else {
            Domain::new(vec![(0.0, 1.0)])?
        };
        let reward_const = prior.uniform_traced_cov();
        Ok(EnvConfig {
            model,
            prior,
            mode,
            experiment_cap,
            time_cap,
            particles,
            dead_time: 0.0,
            reward_const,
            resample_threshold: DEFAULT_RESAMPLE_THRESHOLD,
            liu_west_a: DEFAULT_LIU_WEST_A,
        })
    }

    /// Length of the flattened observation this environment produces.
    pub fn observation_dim(&self) -> usize {
        let d = self.model.dim();
        d + d * (d + 1) / 2 + ACTION_WINDOW + 1 + usize::from(self.model.shots_per_step > 1)
    }

    pub fn observation_schema(&self) -> ObservationSchema {
        ObservationSchema {
            d: self.model.dim(),
            shots_per_step: self.model.shots_per_step,
            action_window: ACTION_WINDOW,
            resource_mode: self.mode.schema_name().to_string(),
        }
    }

    /// Checks that a persisted network was trained against this
    /// environment's observation layout.
    pub fn validate_schema(&self, schema: &ObservationSchema) -> Result<()> {
        let own = self.observation_schema();
        if *schema != own {
            return Err(Error::InvalidArgument(format!(
                "model was trained for observation schema {schema:?}, environment provides {own:?}"
            )));
        }
        Ok(())
    }
}

/// Per-step trace entry.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    /// 1-based experiment index within the episode.
    pub step_index: usize,
    pub time: f64,
    pub outcome: Outcome,
    /// Drop in traced posterior covariance produced by this step.
    pub reward: f64,
    pub traced_cov_after: f64,
    pub time_used_after: f64,
}

/// One running episode: filter, sampled truth, and resource counters.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    filter: ParticleFilter,
    truth: Vec<f64>,
    step_count: usize,
    time_used: f64,
    recent_actions: [f64; ACTION_WINDOW],
    prev_traced_cov: f64,
    last_batch_mean: f64,
    done: bool,
    rng: ChaCha8Rng,
}

impl Env {
    /// Starts an episode: the truth is sampled from the prior, the filter is
    /// reset to the uniform prior, and all counters are zeroed.
    pub fn reset(config: EnvConfig, seed: u64) -> Result<Env> {
        let mut master = rng_from_seed(seed);
        let mut truth = vec![0.0; config.prior.dim()];
        config.prior.sample_into(&mut master, &mut truth);
        Self::build(config, master, truth)
    }

    /// Starts an episode with the true parameter pinned (credible-region
    /// comparisons keep the truth fixed across heuristics).
    pub fn reset_with_truth(config: EnvConfig, seed: u64, truth: Vec<f64>) -> Result<Env> {
        if !config.prior.contains(&truth) {
            return Err(Error::InvalidArgument(format!(
                "truth {truth:?} lies outside the prior domain"
            )));
        }
        let mut master = rng_from_seed(seed);
        // consume the same draws reset() would, so pinned and sampled
        // episodes see identical downstream randomness
        let mut scratch = vec![0.0; config.prior.dim()];
        config.prior.sample_into(&mut master, &mut scratch);
        Self::build(config, master, truth)
    }

    fn build(config: EnvConfig, mut master: ChaCha8Rng, truth: Vec<f64>) -> Result<Env> {
        let filter_seed = master.gen::<u64>();
        let filter = ParticleFilter::init_uniform(config.prior.clone(), config.particles, filter_seed)?
            .with_resample_threshold(config.resample_threshold)
            .with_liu_west_a(config.liu_west_a);
        Ok(Env {
            prev_traced_cov: config.reward_const,
            config,
            filter,
            truth,
            step_count: 0,
            time_used: 0.0,
            recent_actions: [0.0; ACTION_WINDOW],
            last_batch_mean: 0.0,
            done: false,
            rng: master,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn filter(&self) -> &ParticleFilter {
        &self.filter
    }

    pub fn filter_mut(&mut self) -> &mut ParticleFilter {
        &mut self.filter
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn time_used(&self) -> f64 {
        self.time_used
    }

    /// Builds the observation for the upcoming experiment.
    pub fn observation(&self) -> Observation {
        let resource_consumed = match self.config.mode {
            ResourceMode::ExperimentLimited => {
                self.step_count as f64 / self.config.experiment_cap as f64
            }
            ResourceMode::TimeLimited => self.time_used / self.config.time_cap,
        };
        Observation {
            posterior_mean: self.filter.mean(),
            posterior_cov_flat: self.filter.covariance().upper_flat(),
            recent_actions: self.recent_actions,
            resource_consumed,
            batch_mean_outcome: (self.config.model.shots_per_step > 1)
                .then_some(self.last_batch_mean),
        }
    }

    /// Runs one experiment: simulate the outcome, update the posterior, pay
    /// the resource cost, and emit the covariance-drop reward.
    pub fn step(&mut self, design: Design) -> Result<StepRecord> {
        if self.done {
            return Err(Error::InvalidState("episode is already done".into()));
        }
        if !(design.t > 0.0 && design.t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "design time must be positive and finite, got {}",
                design.t
            )));
        }
        let outcome = self.config.model.simulate(&self.truth, design, &mut self.rng);
        let ll = self.config.model.log_likelihood(design, outcome);
        self.filter.bayes_update(ll)?;

        let traced_cov_after = self.filter.traced_covariance();
        let reward = self.prev_traced_cov - traced_cov_after;
        self.prev_traced_cov = traced_cov_after;

        self.step_count += 1;
        self.time_used += design.t + self.config.dead_time;
        self.recent_actions.copy_within(0..ACTION_WINDOW - 1, 1);
        self.recent_actions[0] = design.t;
        let shots = self.config.model.shots_per_step;
        self.last_batch_mean = f64::from(shots - outcome.zeros) / f64::from(shots);

        self.done = match self.config.mode {
            ResourceMode::ExperimentLimited => self.step_count >= self.config.experiment_cap,
            ResourceMode::TimeLimited => {
                self.time_used > self.config.time_cap
                    || self.step_count >= self.config.experiment_cap
            }
        };

        Ok(StepRecord {
            step_index: self.step_count,
            time: design.t,
            outcome,
            reward,
            traced_cov_after,
            time_used_after: self.time_used,
        })
    }
}

/// Drives one full episode: consult the heuristic, run the experiment,
/// repeat until a resource is exhausted. Returns the full step trace.
pub fn run_episode(env: &mut Env, heuristic: &HeuristicSpec) -> Result<Vec<StepRecord>> {
    let time_cap = env.config.time_cap;
    let mut records = Vec::new();
    while !env.done() {
        let obs = env.observation();
        let k = env.step_count() + 1;
        let design = heuristic.next_design(k, &obs, env.filter_mut(), time_cap)?;
        records.push(env.step(design)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::p_zero;

    fn exp_cfg() -> EnvConfig {
        EnvConfig::by_name("freq-inf-exp").unwrap()
    }

    #[test]
    fn registered_names_resolve_with_table_limits() {
        let expected = [
            ("freq-inf-exp", 20, 1e27),
            ("freq-inf-time", 100, 100.0),
            ("freq-t2-100-exp", 125, 1e27),
            ("freq-t2-100-time", 1000, 2500.0),
            ("freq-t2-10-exp", 125, 1e27),
            ("freq-t2-10-time", 1000, 2500.0),
            ("multi-exp", 500, 1e27),
            ("multi-time", 4000, 2500.0),
        ];
        for (name, cap, time) in expected {
            let cfg = EnvConfig::by_name(name).unwrap();
            assert_eq!(cfg.experiment_cap, cap, "{name}");
            assert_eq!(cfg.time_cap, time, "{name}");
        }
        assert!(EnvConfig::by_name("nope").is_err());
    }

    #[test]
    fn reward_const_matches_prior() {
        assert!((exp_cfg().reward_const - 1.0 / 12.0).abs() < 1e-15);
        let multi = EnvConfig::by_name("multi-exp").unwrap();
        assert!((multi.reward_const - (1.0 / 12.0 + 0.02f64.powi(2) / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn observation_dims() {
        assert_eq!(exp_cfg().observation_dim(), 33);
        assert_eq!(EnvConfig::by_name("multi-exp").unwrap().observation_dim(), 37);
    }

    #[test]
    fn reset_is_deterministic() {
        let a = Env::reset(exp_cfg(), 42).unwrap();
        let b = Env::reset(exp_cfg(), 42).unwrap();
        assert_eq!(a.truth(), b.truth());
        for i in 0..a.filter().len() {
            assert_eq!(a.filter().position(i), b.filter().position(i));
        }
        let c = Env::reset(exp_cfg(), 43).unwrap();
        assert_ne!(a.truth(), c.truth());
    }

    #[test]
    fn initial_observation_is_blank() {
        let env = Env::reset(exp_cfg(), 1).unwrap();
        let obs = env.observation();
        assert_eq!(obs.resource_consumed, 0.0);
        assert!(obs.recent_actions.iter().all(|&a| a == 0.0));
        assert!(obs.batch_mean_outcome.is_none());
    }

    #[test]
    fn truth_sampling_is_uniform() {
        let mut cfg = exp_cfg();
        cfg.particles = 64; // keep the resets cheap
        let resets = 10_000;
        let mean: f64 = (0..resets)
            .map(|s| Env::reset(cfg.clone(), s as u64).unwrap().truth()[0])
            .sum::<f64>()
            / resets as f64;
        let se = (1.0 / 12.0 / resets as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "truth mean {mean}");
    }

    #[test]
    fn uninformative_step_keeps_posterior() {
        // fully dephased: p0 = 1/2 exactly, independent of omega
        let mut cfg = EnvConfig::by_name("freq-t2-10-exp").unwrap();
        cfg.particles = 500;
        let mut env = Env::reset(cfg, 3).unwrap();
        let t = 10.0 * 200.0; // e^-200 flushes to 0 exactly
        assert_eq!(p_zero(0.5, 0.1, t), 0.5);
        let before = env.filter().traced_covariance();
        let rec = env.step(Design { t }).unwrap();
        assert_eq!(rec.traced_cov_after, before);
        assert_eq!(rec.reward + rec.traced_cov_after, exp_cfg().reward_const);
    }

    #[test]
    fn telescoping_identity_per_episode() {
        let mut env = Env::reset(exp_cfg(), 17).unwrap();
        let records = run_episode(&mut env, &HeuristicSpec::SigmaInv).unwrap();
        let total_reward: f64 = records.iter().map(|r| r.reward).sum();
        let lhs = env.config().reward_const - total_reward;
        let rhs = records.last().unwrap().traced_cov_after;
        assert!(
            (lhs - rhs).abs() <= 1e-9 * env.config().reward_const.max(rhs),
            "telescoping violated: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn experiment_cap_gives_exact_episode_length() {
        let mut env = Env::reset(exp_cfg(), 5).unwrap();
        let records = run_episode(&mut env, &HeuristicSpec::ExpSparse).unwrap();
        assert_eq!(records.len(), 20);
        assert!(env.done());
        assert!(matches!(
            env.step(Design { t: 1.0 }),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn exp_sparse_episode_times() {
        let mut cfg = exp_cfg();
        cfg.experiment_cap = 3;
        let mut env = Env::reset(cfg, 9).unwrap();
        let records = run_episode(&mut env, &HeuristicSpec::ExpSparse).unwrap();
        let times: Vec<f64> = records.iter().map(|r| r.time).collect();
        assert_eq!(times, vec![1.125, 1.265625, 1.423828125]);
    }

    #[test]
    fn sigma_inv_first_design_near_sqrt_12() {
        let mut env = Env::reset(exp_cfg(), 23).unwrap();
        let records = run_episode(&mut env, &HeuristicSpec::SigmaInv).unwrap();
        // filter standard error on the prior variance makes this approximate
        assert!((records[0].time - 12f64.sqrt()).abs() < 0.15, "t1 = {}", records[0].time);
    }

    #[test]
    fn time_limit_overshoots_only_last_step() {
        for seed in 0..5 {
            let mut env = Env::reset(EnvConfig::by_name("freq-inf-time").unwrap(), seed).unwrap();
            let records = run_episode(&mut env, &HeuristicSpec::Pgh).unwrap();
            let total: f64 = records.iter().map(|r| r.time).sum();
            let except_last: f64 = total - records.last().unwrap().time;
            assert!(except_last <= 100.0, "seed {seed}: {except_last}");
            assert!(env.done());
        }
    }

    #[test]
    fn rejects_nonpositive_design() {
        let mut env = Env::reset(exp_cfg(), 0).unwrap();
        assert!(env.step(Design { t: 0.0 }).is_err());
        assert!(env.step(Design { t: -1.0 }).is_err());
        assert!(env.step(Design { t: f64::NAN }).is_err());
    }

    #[test]
    fn pinned_truth_round_trip() {
        let cfg = EnvConfig::by_name("multi-exp").unwrap();
        let env = Env::reset_with_truth(cfg.clone(), 3, vec![0.4, 0.1]).unwrap();
        assert_eq!(env.truth(), &[0.4, 0.1]);
        assert!(Env::reset_with_truth(cfg, 3, vec![1.4, 0.1]).is_err());
    }

    #[test]
    fn batched_step_reports_mean_outcome() {
        let mut cfg = EnvConfig::by_name("multi-exp").unwrap();
        cfg.particles = 200;
        let mut env = Env::reset(cfg, 8).unwrap();
        assert_eq!(env.observation().batch_mean_outcome, Some(0.0));
        let rec = env.step(Design { t: 1.0 }).unwrap();
        let expected = f64::from(100 - rec.outcome.zeros) / 100.0;
        assert_eq!(env.observation().batch_mean_outcome, Some(expected));
    }
}
