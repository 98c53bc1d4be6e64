//! Benchmark harness: Bayes-risk estimation by experiment count and by
//! elapsed time, closed-form and information-based lower bounds, design
//! histograms, and fixed-truth credible-region runs.

use rayon::prelude::*;

use crate::env::{run_episode, Env, EnvConfig, ResourceMode, StepRecord};
use crate::heuristics::HeuristicSpec;
use crate::quad::adaptive_quad;
use crate::smc::CredibleRegion;
use crate::{Error, Result};

/// Relative tolerance of the Fisher-information quadrature.
const QUAD_REL_TOL: f64 = 1e-6;

/// Width of the endpoint strip excluded from the Fisher integral, as a
/// fraction of the domain length. The integrand (p')^2 / p blows up like
/// 1/x toward the endpoints where the prior vanishes, so the value is
/// defined on the symmetric truncation.
pub const FISHER_ENDPOINT_EXCLUSION: f64 = 1e-6;

/// Upper edge of the design-histogram range; longer times land in the
/// overflow bin.
pub const HISTOGRAM_TIME_CUTOFF: f64 = 500.0;

/// Risk estimate along an axis (experiment index or time grid).
#[derive(Clone, Debug)]
pub struct RiskCurve {
    pub axis: Vec<f64>,
    pub risk: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub episodes_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// Information bound per experiment count.
    Lk,
    /// Cramer-Rao-type bound per time budget.
    Lt,
}

/// Lower bound for the Bayes risk along an axis.
#[derive(Clone, Debug)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

/// 2-D tally of design times over (experiment index, time bin).
#[derive(Clone, Debug)]
pub struct DesignHistogram {
    /// Bin edges over [0, cutoff]; the final bin counts times above the
    /// cutoff (its upper edge is +inf).
    pub bin_edges: Vec<f64>,
    /// counts[experiment_index - 1][bin]
    pub counts: Vec<Vec<u64>>,
    pub episodes: usize,
}

impl DesignHistogram {
    pub fn bins(&self) -> usize {
        self.bin_edges.len() - 1
    }
}

fn episode_records(
    config: &EnvConfig,
    heuristic: &HeuristicSpec,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<StepRecord>>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut env = Env::reset(config.clone(), seed.wrapping_add(i as u64))?;
            run_episode(&mut env, heuristic)
        })
        .collect()
}

/// Bayes risk after each experiment k = 1..N: the mean over episodes of the
/// traced posterior covariance, with its standard error. Requires an
/// experiment-limited environment so every episode has exactly N steps.
pub fn bayes_risk_by_experiment(
    config: &EnvConfig,
    heuristic: &HeuristicSpec,
    episodes: usize,
    seed: u64,
) -> Result<RiskCurve> {
    if config.mode != ResourceMode::ExperimentLimited {
        return Err(Error::InvalidArgument(
            "bayes_risk_by_experiment needs an experiment-limited environment".into(),
        ));
    }
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least 1 episode".into()));
    }
    let all = episode_records(config, heuristic, episodes, seed)?;
    let n = config.experiment_cap;
    let mut risk = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for records in &all {
        debug_assert_eq!(records.len(), n);
        for (k, rec) in records.iter().enumerate() {
            risk[k] += rec.traced_cov_after;
            sq[k] += rec.traced_cov_after * rec.traced_cov_after;
        }
    }
    let m = episodes as f64;
    let mut standard_error = vec![0.0; n];
    for k in 0..n {
        risk[k] /= m;
        let var = if episodes > 1 {
            (sq[k] - m * risk[k] * risk[k]).max(0.0) / (m - 1.0)
        } else {
            0.0
        };
        standard_error[k] = (var / m).sqrt();
    }
    Ok(RiskCurve {
        axis: (1..=n).map(|k| k as f64).collect(),
        risk,
        standard_error,
        episodes_used: episodes,
    })
}

/// Time-resolved Bayes risk over a fixed grid, built from per-episode
/// piecewise-linear interpolants through (cumulative time, traced
/// covariance) anchored at (0, anchor_value). Beyond an episode's last
/// experiment the covariance no longer changes, so the interpolant continues
/// at its final value.
pub fn time_resolved_risk(
    traces: &[Vec<(f64, f64)>],
    anchor_value: f64,
    t_max: f64,
    points: usize,
) -> Result<RiskCurve> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("need at least 1 trace".into()));
    }
    if points == 0 || !(t_max > 0.0) {
        return Err(Error::InvalidArgument("need points >= 1 and t_max > 0".into()));
    }
    let axis: Vec<f64> = (1..=points).map(|i| t_max * i as f64 / points as f64).collect();
    let mut risk = vec![0.0; points];
    let mut sq = vec![0.0; points];
    for trace in traces {
        for (i, &t) in axis.iter().enumerate() {
            let v = interpolate(trace, anchor_value, t);
            risk[i] += v;
            sq[i] += v * v;
        }
    }
    let m = traces.len() as f64;
    let mut standard_error = vec![0.0; points];
    for i in 0..points {
        risk[i] /= m;
        let var = if traces.len() > 1 {
            (sq[i] - m * risk[i] * risk[i]).max(0.0) / (m - 1.0)
        } else {
            0.0
        };
        standard_error[i] = (var / m).sqrt();
    }
    Ok(RiskCurve { axis, risk, standard_error, episodes_used: traces.len() })
}

fn interpolate(trace: &[(f64, f64)], anchor_value: f64, t: f64) -> f64 {
    let mut prev = (0.0, anchor_value);
    for &(x, y) in trace {
        if t <= x {
            let span = x - prev.0;
            if span <= 0.0 {
                return y;
            }
            let frac = (t - prev.0) / span;
            return prev.1 + frac * (y - prev.1);
        }
        prev = (x, y);
    }
    prev.1
}

/// Time-resolved Bayes risk of a heuristic on a time-limited environment,
/// evaluated at `points` equally spaced times spanning (0, T]. Episodes that
/// somehow produce no experiments are excluded (the count shows up in
/// `episodes_used`).
pub fn bayes_risk_by_time(
    config: &EnvConfig,
    heuristic: &HeuristicSpec,
    episodes: usize,
    points: usize,
    seed: u64,
) -> Result<RiskCurve> {
    if config.mode != ResourceMode::TimeLimited {
        return Err(Error::InvalidArgument(
            "bayes_risk_by_time needs a time-limited environment".into(),
        ));
    }
    let all = episode_records(config, heuristic, episodes, seed)?;
    let traces: Vec<Vec<(f64, f64)>> = all
        .iter()
        .filter(|records| !records.is_empty())
        .map(|records| {
            records
                .iter()
                .map(|r| (r.time_used_after, r.traced_cov_after))
                .collect()
        })
        .collect();
    time_resolved_risk(&traces, config.reward_const, config.time_cap, points)
}

/// Information-based lower bound L_k = 2^(-2(k+1)) / 3 for k = 0..=k_max:
/// k binary-outcome experiments pin down at most k leading bits.
pub fn bound_l_k(k_max: usize) -> BoundCurve {
    let axis: Vec<f64> = (0..=k_max).map(|k| k as f64).collect();
    let values = (0..=k_max)
        .map(|k| 2f64.powi(-2 * (k as i32 + 1)) / 3.0)
        .collect();
    BoundCurve { kind: BoundKind::Lk, axis, values }
}

/// Unnormalized smoothed-uniform prior on (a, b): approaches the uniform
/// density as k grows while vanishing at the endpoints.
fn prior_unnorm(k: f64, a: f64, b: f64, x: f64) -> f64 {
    2.0 / ((1.0 + (-2.0 * k * (x - a)).exp()) * (1.0 + (2.0 * k * (x - b)).exp())) - 1.0
}

fn prior_unnorm_deriv(k: f64, a: f64, b: f64, x: f64) -> f64 {
    let u = 1.0 + (-2.0 * k * (x - a)).exp();
    let v = 1.0 + (2.0 * k * (x - b)).exp();
    let up = -2.0 * k * (-2.0 * k * (x - a)).exp();
    let vp = 2.0 * k * (2.0 * k * (x - b)).exp();
    -2.0 * (up * v + u * vp) / (u * v).powi(2)
}

/// Fisher information of the smoothed-uniform prior family, computed by
/// adaptive quadrature on the endpoint-truncated domain.
pub fn prior_fisher_info(k: f64, a: f64, b: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("prior sharpness k must be positive, got {k}")));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("need a < b, got ({a}, {b})")));
    }
    let eps = (b - a) * FISHER_ENDPOINT_EXCLUSION;
    let (lo, hi) = (a + eps, b - eps);
    if !(prior_unnorm(k, a, b, 0.5 * (lo + hi)) > 0.0) {
        return Err(Error::NumericFailure(
            "prior density is not positive on the domain (k too small)".into(),
        ));
    }
    let norm = adaptive_quad(|x| prior_unnorm(k, a, b, x), lo, hi, QUAD_REL_TOL)?;
    let fisher_raw = adaptive_quad(
        |x| {
            let q = prior_unnorm(k, a, b, x);
            let qp = prior_unnorm_deriv(k, a, b, x);
            qp * qp / q
        },
        lo,
        hi,
        QUAD_REL_TOL,
    )?;
    let j = fisher_raw / norm;
    if !j.is_finite() || j < 0.0 {
        return Err(Error::NumericFailure(format!("Fisher information came out as {j}")));
    }
    Ok(j)
}

/// Cramer-Rao-type lower bound L_T = 1 / (T^2 + J_p): a single experiment of
/// the full time budget maximizes the data Fisher information T^2, and J_p
/// is the prior's own information.
pub fn bound_l_t(t_values: &[f64], prior_info: f64) -> Result<BoundCurve> {
    if !(prior_info > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prior information must be positive, got {prior_info}"
        )));
    }
    if t_values.windows(2).any(|w| w[1] <= w[0]) || t_values.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument(
            "time grid must be nonnegative and strictly increasing".into(),
        ));
    }
    let values = t_values.iter().map(|&t| 1.0 / (t * t + prior_info)).collect();
    Ok(BoundCurve { kind: BoundKind::Lt, axis: t_values.to_vec(), values })
}

/// Tallies design times into (experiment index, time bin) over many
/// episodes. Counts at index k sum to the number of episodes that reached
/// experiment k.
pub fn design_histogram(
    config: &EnvConfig,
    heuristic: &HeuristicSpec,
    episodes: usize,
    time_bins: usize,
    seed: u64,
) -> Result<DesignHistogram> {
    if time_bins == 0 {
        return Err(Error::InvalidArgument("need at least one time bin".into()));
    }
    let all = episode_records(config, heuristic, episodes, seed)?;
    let max_len = all.iter().map(Vec::len).max().unwrap_or(0);
    let width = HISTOGRAM_TIME_CUTOFF / time_bins as f64;
    let mut bin_edges: Vec<f64> = (0..=time_bins).map(|i| i as f64 * width).collect();
    bin_edges.push(f64::INFINITY);
    let mut counts = vec![vec![0u64; time_bins + 1]; max_len];
    for records in &all {
        for rec in records {
            let bin = if rec.time >= HISTOGRAM_TIME_CUTOFF {
                time_bins
            } else {
                ((rec.time / width) as usize).min(time_bins - 1)
            };
            counts[rec.step_index - 1][bin] += 1;
        }
    }
    Ok(DesignHistogram { bin_edges, counts, episodes })
}

/// Runs one episode per heuristic with the true parameter pinned and the
/// same seed, and returns each end-of-episode credible region.
pub fn credible_run(
    config: &EnvConfig,
    heuristics: &[HeuristicSpec],
    truth: &[f64],
    level: f64,
    seed: u64,
) -> Result<Vec<CredibleRegion>> {
    heuristics
        .iter()
        .map(|h| {
            let mut env = Env::reset_with_truth(config.clone(), seed, truth.to_vec())?;
            run_episode(&mut env, h)?;
            env.filter().credible_region(level)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_exp_cfg() -> EnvConfig {
        let mut cfg = EnvConfig::by_name("freq-inf-exp").unwrap();
        cfg.particles = 400;
        cfg
    }

    #[test]
    fn risk_by_experiment_uninformative_model_stays_at_prior() {
        // fully dephased known-T2 model: every measurement is a coin flip
        let mut cfg = EnvConfig::by_name("freq-t2-10-exp").unwrap();
        cfg.particles = 400;
        cfg.experiment_cap = 10;
        // forced long times via exp-sparse won't dephase fully from step 1,
        // so pin the model instead: T2 tiny makes any t >= 1 uninformative
        cfg.model = crate::model::ExperimentModel::new(
            crate::model::ModelKind::FreqKnownT2(1e-4),
            1,
        )
        .unwrap();
        let curve =
            bayes_risk_by_experiment(&cfg, &HeuristicSpec::ExpSparse, 200, 5).unwrap();
        for (k, r) in curve.risk.iter().enumerate() {
            let tol = 3.0 * curve.standard_error[k] + 1e-6;
            assert!((r - 1.0 / 12.0).abs() < tol, "k={} risk={r}", k + 1);
        }
    }

    #[test]
    fn risk_by_experiment_drops_with_budget() {
        let cfg = small_exp_cfg();
        let curve = bayes_risk_by_experiment(&cfg, &HeuristicSpec::SigmaInv, 300, 2).unwrap();
        let (r1, r5, r20) = (curve.risk[0], curve.risk[4], curve.risk[19]);
        let (s1, s5, s20) = (
            curve.standard_error[0],
            curve.standard_error[4],
            curve.standard_error[19],
        );
        assert!(r5 < r1 - (s1 + s5), "r5 {r5} vs r1 {r1}");
        assert!(r20 < r5 - (s5 + s20), "r20 {r20} vs r5 {r5}");
    }

    #[test]
    fn risk_by_experiment_rejects_time_limited() {
        let cfg = EnvConfig::by_name("freq-inf-time").unwrap();
        assert!(bayes_risk_by_experiment(&cfg, &HeuristicSpec::Pgh, 10, 0).is_err());
    }

    #[test]
    fn time_resolved_single_trace_interpolates_exactly() {
        let c = 0.003;
        let anchor = 1.0 / 12.0;
        let traces = vec![vec![(100.0, c)]];
        let curve = time_resolved_risk(&traces, anchor, 100.0, 200).unwrap();
        // value at T/2 is the midpoint of anchor and c
        let mid = curve.axis.iter().position(|&t| t == 50.0).unwrap();
        assert!((curve.risk[mid] - (anchor + c) / 2.0).abs() < 1e-15);
        // value at the first grid point sits on the segment toward (0, anchor)
        let first = curve.axis[0];
        assert!((curve.risk[0] - (anchor + (c - anchor) * first / 100.0)).abs() < 1e-15);
        assert!(curve.standard_error.iter().all(|&s| s == 0.0));

        // all-episodes-identical input reproduces the single interpolant
        let twin = time_resolved_risk(&vec![traces[0].clone(); 3], anchor, 100.0, 200).unwrap();
        for (a, b) in twin.risk.iter().zip(&curve.risk) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn time_resolved_extends_last_value() {
        let traces = vec![
            vec![(10.0, 0.04), (20.0, 0.01)],
            vec![(10.0, 0.04), (20.0, 0.01)],
        ];
        let curve = time_resolved_risk(&traces, 1.0 / 12.0, 100.0, 100).unwrap();
        assert_eq!(*curve.risk.last().unwrap(), 0.01);
    }

    #[test]
    fn bound_l_k_closed_form() {
        let curve = bound_l_k(30);
        assert_eq!(curve.values.len(), 31);
        assert_eq!(curve.values[0], 1.0 / 12.0);
        assert_eq!(curve.values[1], 2f64.powi(-4) / 3.0);
        for (k, v) in curve.values.iter().enumerate() {
            assert_eq!(*v, 2f64.powi(-2 * (k as i32 + 1)) / 3.0);
            if k > 0 {
                assert!(*v < curve.values[k - 1]);
            }
        }
    }

    #[test]
    fn fisher_info_grows_with_sharpness() {
        let j10 = prior_fisher_info(10.0, 0.0, 1.0).unwrap();
        let j30 = prior_fisher_info(30.0, 0.0, 1.0).unwrap();
        assert!(j30 > j10, "J(30)={j30} <= J(10)={j10}");
    }

    #[test]
    fn fisher_info_reparameterization_scaling() {
        // stretching (0,1) to (0,2) while halving k is the exact pushforward
        // under theta -> 2 theta, so J scales by 1/4
        let j_narrow = prior_fisher_info(30.0, 0.0, 1.0).unwrap();
        let j_wide = prior_fisher_info(15.0, 0.0, 2.0).unwrap();
        assert!(
            (j_narrow - 4.0 * j_wide).abs() < 1e-4 * j_narrow,
            "J(30,(0,1))={j_narrow} vs 4*J(15,(0,2))={}",
            4.0 * j_wide
        );
    }

    #[test]
    fn fisher_info_rejects_bad_inputs() {
        assert!(prior_fisher_info(0.0, 0.0, 1.0).is_err());
        assert!(prior_fisher_info(10.0, 1.0, 0.0).is_err());
        // k so small the "density" goes negative
        assert!(prior_fisher_info(0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn bound_l_t_composition() {
        let j = 625.0;
        let curve = bound_l_t(&[0.0, 10.0, 100.0], j).unwrap();
        assert_eq!(curve.values[0], 1.0 / j);
        assert_eq!(curve.values[2], 1.0 / (1e4 + j));
        for w in curve.values.windows(2) {
            assert!(w[1] < w[0]);
        }
        for (t, v) in curve.axis.iter().zip(&curve.values) {
            if *t > 0.0 {
                assert!(*v < 1.0 / (t * t));
            }
        }
        assert!(bound_l_t(&[0.0, 1.0], 0.0).is_err());
        assert!(bound_l_t(&[1.0, 0.5], j).is_err());
    }

    #[test]
    fn histogram_exp_sparse_counts() {
        let mut cfg = small_exp_cfg();
        cfg.experiment_cap = 10;
        let episodes = 40;
        let hist =
            design_histogram(&cfg, &HeuristicSpec::ExpSparse, episodes, 50, 3).unwrap();
        assert_eq!(hist.counts.len(), 10);
        for (k, row) in hist.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            assert_eq!(total, episodes as u64, "index {}", k + 1);
            // deterministic designs occupy a single bin per index
            assert_eq!(row.iter().filter(|&&c| c > 0).count(), 1);
        }
    }

    #[test]
    fn histogram_time_limited_counts_nonincreasing() {
        let mut cfg = EnvConfig::by_name("freq-inf-time").unwrap();
        cfg.particles = 400;
        let hist = design_histogram(&cfg, &HeuristicSpec::Pgh, 30, 20, 7).unwrap();
        let totals: Vec<u64> = hist.counts.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(totals[0], 30);
        for w in totals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn credible_run_covers_level_and_repeats() {
        let mut cfg = EnvConfig::by_name("multi-exp").unwrap();
        cfg.particles = 400;
        cfg.experiment_cap = 30;
        let hs = [HeuristicSpec::SigmaInv, HeuristicSpec::Pgh];
        let truth = [0.4, 0.1];
        let regions = credible_run(&cfg, &hs, &truth, 0.95, 11).unwrap();
        assert_eq!(regions.len(), 2);
        for r in &regions {
            assert!(r.covered_mass >= 0.95);
            assert!(r.hull_vertices.len() >= 3);
        }
        let again = credible_run(&cfg, &hs, &truth, 0.95, 11).unwrap();
        for (a, b) in regions.iter().zip(&again) {
            assert_eq!(a.covered_mass, b.covered_mass);
            assert_eq!(a.member_positions.len(), b.member_positions.len());
        }
    }
}
