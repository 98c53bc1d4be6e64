//! Sequential Monte Carlo engine: weighted particle representation of
//! priors/posteriors, log-domain Bayesian weight updates, Liu--West
//! resampling, weighted moments, and credible regions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Default fraction of the particle count below which the effective sample
/// size triggers a resample.
pub const DEFAULT_RESAMPLE_THRESHOLD: f64 = 0.5;

/// Default Liu--West shrinkage parameter.
pub const DEFAULT_LIU_WEST_A: f64 = 0.98;

/// Ridge added to the covariance diagonal before the Cholesky factorization
/// used for resampling noise; guards against point-mass degeneracy.
const COV_RIDGE: f64 = 1e-12;

/// Per-parameter closed intervals bounding the parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    intervals: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("domain must have dimension >= 1".into()));
        }
        for &(lo, hi) in &intervals {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "domain interval [{lo}, {hi}] requires finite lo < hi"
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn lo(&self, j: usize) -> f64 {
        self.intervals[j].0
    }

    pub fn hi(&self, j: usize) -> f64 {
        self.intervals[j].1
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.intervals)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    /// Clamps each component into its interval.
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.intervals) {
            *v = v.max(lo).min(hi);
        }
    }

    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for (v, &(lo, hi)) in out.iter_mut().zip(&self.intervals) {
            *v = rng.gen_range(lo..hi);
        }
    }

    /// Traced covariance of the uniform distribution on this domain:
    /// sum of (hi - lo)^2 / 12 over parameters.
    pub fn uniform_traced_cov(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| (hi - lo).powi(2) / 12.0).sum()
    }
}

/// Symmetric covariance matrix in row-major storage (d is 1 or 2 in practice
/// but nothing here assumes that).
#[derive(Clone, Debug)]
pub struct Covariance {
    dim: usize,
    data: Vec<f64>,
}

impl Covariance {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Upper triangle flattened row-major: length d(d+1)/2.
    pub fn upper_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

/// Result of a Bayesian weight update.
#[derive(Clone, Copy, Debug)]
pub struct BayesUpdate {
    /// Normalization p(d_k) = sum_j w_j exp(ll_j) before renormalization.
    /// Coefficient-free when the log-likelihood omits constants that cancel
    /// in the update (the binomial coefficient does).
    pub normalization: f64,
    /// Whether the effective-sample-size trigger fired a resample.
    pub resampled: bool,
}

/// Weighted particle cloud approximating a posterior over the parameter
/// space. Positions are stored flat (n * dim, row-major); weights are kept
/// normalized after every public operation.
#[derive(Clone, Debug)]
pub struct ParticleFilter {
    dim: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
    domain: Domain,
    rng: ChaCha8Rng,
    resample_threshold: f64,
    liu_west_a: f64,
}

impl ParticleFilter {
    /// Uniform prior realized as a particle filter: positions drawn i.i.d.
    /// uniformly from the domain, all weights 1/n.
    pub fn init_uniform(domain: Domain, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "particle count must be >= 2, got {n}"
            )));
        }
        let dim = domain.dim();
        let mut rng = rng_from_seed(seed);
        let mut positions = vec![0.0; n * dim];
        for chunk in positions.chunks_mut(dim) {
            domain.sample_into(&mut rng, chunk);
        }
        Ok(Self {
            dim,
            positions,
            weights: vec![1.0 / n as f64; n],
            domain,
            rng,
            resample_threshold: DEFAULT_RESAMPLE_THRESHOLD,
            liu_west_a: DEFAULT_LIU_WEST_A,
        })
    }

    /// Builds a filter from explicit positions and weights (weights are
    /// normalized). Mostly useful for tests and synthetic clouds.
    pub fn from_particles(
        domain: Domain,
        positions: Vec<Vec<f64>>,
        weights: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "particle count must be >= 2, got {n}"
            )));
        }
        if weights.len() != n {
            return Err(Error::InvalidArgument("positions/weights length mismatch".into()));
        }
        let dim = domain.dim();
        let mut flat = Vec::with_capacity(n * dim);
        for p in &positions {
            if p.len() != dim || !domain.contains(p) {
                return Err(Error::InvalidArgument(
                    "particle position outside domain or wrong dimension".into(),
                ));
            }
            flat.extend_from_slice(p);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be nonnegative with positive sum".into()));
        }
        Ok(Self {
            dim,
            positions: flat,
            weights: weights.into_iter().map(|w| w / total).collect(),
            domain,
            rng: rng_from_seed(seed),
            resample_threshold: DEFAULT_RESAMPLE_THRESHOLD,
            liu_west_a: DEFAULT_LIU_WEST_A,
        })
    }

    pub fn with_resample_threshold(mut self, threshold: f64) -> Self {
        self.resample_threshold = threshold;
        self
    }

    pub fn with_liu_west_a(mut self, a: f64) -> Self {
        self.liu_west_a = a;
        self
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size 1 / sum(w^2).
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Multiplies weights by the likelihood (supplied in log space) and
    /// renormalizes with log-sum-exp. Returns the normalization p(d_k) and
    /// fires a Liu--West resample when ESS drops below threshold * n.
    ///
    /// `log_likelihood` may return -inf for zero likelihood; if every
    /// particle ends up with zero posterior weight the update fails with
    /// a degenerate-posterior error instead of silently re-flattening.
    pub fn bayes_update<F>(&mut self, log_likelihood: F) -> Result<BayesUpdate>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = self.len();
        let mut log_w = vec![0.0; n];
        let mut max_lw = f64::NEG_INFINITY;
        for i in 0..n {
            let ll = log_likelihood(self.position(i));
            if ll.is_nan() {
                return Err(Error::NumericFailure("log-likelihood returned NaN".into()));
            }
            let lw = self.weights[i].ln() + ll;
            log_w[i] = lw;
            if lw > max_lw {
                max_lw = lw;
            }
        }
        if max_lw == f64::NEG_INFINITY {
            return Err(Error::DegeneratePosterior(
                "total likelihood is zero across all particles".into(),
            ));
        }
        let mut sum = 0.0;
        for lw in log_w.iter_mut() {
            *lw = (*lw - max_lw).exp();
            sum += *lw;
        }
        for (w, lw) in self.weights.iter_mut().zip(&log_w) {
            *w = lw / sum;
        }
        let normalization = (max_lw + sum.ln()).exp();

        let resampled = self.ess() < self.resample_threshold * n as f64;
        if resampled {
            self.liu_west_resample(self.liu_west_a)?;
        }
        Ok(BayesUpdate { normalization, resampled })
    }

    /// Weighted posterior mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (m, x) in mean.iter_mut().zip(self.position(i)) {
                *m += w * x;
            }
        }
        mean
    }

    /// Weighted posterior covariance; computed centered so it is symmetric
    /// positive semidefinite up to rounding.
    pub fn covariance(&self) -> Covariance {
        let mean = self.mean();
        let d = self.dim;
        let mut data = vec![0.0; d * d];
        let mut delta = vec![0.0; d];
        for (i, w) in self.weights.iter().enumerate() {
            for (dj, (x, m)) in delta.iter_mut().zip(self.position(i).iter().zip(&mean)) {
                *dj = x - m;
            }
            for j in 0..d {
                for k in j..d {
                    data[j * d + k] += w * delta[j] * delta[k];
                }
            }
        }
        // mirror the upper triangle
        for j in 0..d {
            for k in 0..j {
                data[j * d + k] = data[k * d + j];
            }
        }
        Covariance { dim: d, data }
    }

    pub fn traced_covariance(&self) -> f64 {
        self.covariance().trace()
    }

    /// Liu--West resample: each new particle picks an ancestor by weight,
    /// shrinks it toward the mean by `a`, and adds Gaussian noise with
    /// covariance (1 - a^2) * Sigma, preserving the first two moments in
    /// expectation. New weights are uniform; positions are clamped into the
    /// domain.
    pub fn liu_west_resample(&mut self, a: f64) -> Result<()> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Liu-West parameter must satisfy 0 < a <= 1, got {a}"
            )));
        }
        let n = self.len();
        let d = self.dim;
        let mean = self.mean();
        let cov = self.covariance();
        let h = (1.0 - a * a).sqrt();
        let chol = if a < 1.0 { Some(cholesky_ridge(&cov)?) } else { None };

        let cum = cumulative(&self.weights);
        let mut new_positions = vec![0.0; n * d];
        let mut noise = vec![0.0; d];
        for i in 0..n {
            let anc = draw_index(&cum, self.rng.gen::<f64>());
            let src = anc * d;
            if let Some(l) = &chol {
                for z in noise.iter_mut() {
                    *z = self.rng.sample::<f64, _>(StandardNormal);
                }
                // lower-triangular multiply, in place back to front
                for j in (0..d).rev() {
                    let mut acc = 0.0;
                    for k in 0..=j {
                        acc += l[j * d + k] * noise[k];
                    }
                    noise[j] = acc;
                }
            }
            let dst = &mut new_positions[i * d..(i + 1) * d];
            for j in 0..d {
                let shrunk = a * self.positions[src + j] + (1.0 - a) * mean[j];
                dst[j] = shrunk + if chol.is_some() { h * noise[j] } else { 0.0 };
            }
            self.domain.clamp(dst);
        }
        self.positions = new_positions;
        self.weights.fill(1.0 / n as f64);
        Ok(())
    }

    /// Two independent weighted draws (with replacement); they may coincide.
    pub fn sample_two(&mut self) -> (Vec<f64>, Vec<f64>) {
        let cum = cumulative(&self.weights);
        let i = draw_index(&cum, self.rng.gen::<f64>());
        let j = draw_index(&cum, self.rng.gen::<f64>());
        (self.position(i).to_vec(), self.position(j).to_vec())
    }

    /// Smallest set of highest-weight particles whose cumulative weight
    /// reaches `level`. For two-parameter problems the convex hull of the
    /// members is attached.
    pub fn credible_region(&self, level: f64) -> Result<CredibleRegion> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "credible level must be in (0, 1), got {level}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            self.weights[j].total_cmp(&self.weights[i]).then(i.cmp(&j))
        });
        let mut members = Vec::new();
        let mut mass = 0.0;
        for &i in &order {
            members.push(self.position(i).to_vec());
            mass += self.weights[i];
            if mass >= level {
                break;
            }
        }
        let hull_vertices = if self.dim == 2 {
            convex_hull(&members)
        } else {
            Vec::new()
        };
        Ok(CredibleRegion {
            level,
            member_positions: members,
            hull_vertices,
            covered_mass: mass,
        })
    }
}

/// Credible region over the posterior particle cloud.
#[derive(Clone, Debug)]
pub struct CredibleRegion {
    pub level: f64,
    pub member_positions: Vec<Vec<f64>>,
    /// Convex hull of the members (counterclockwise); populated for d = 2.
    pub hull_vertices: Vec<Vec<f64>>,
    pub covered_mass: f64,
}

impl CredibleRegion {
    /// Geometric membership test: interval of the members for d = 1,
    /// convex-hull containment for d = 2.
    pub fn contains(&self, point: &[f64]) -> bool {
        match point.len() {
            1 => {
                let x = point[0];
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in &self.member_positions {
                    lo = lo.min(p[0]);
                    hi = hi.max(p[0]);
                }
                x >= lo && x <= hi
            }
            2 => {
                if self.hull_vertices.len() < 3 {
                    return self
                        .hull_vertices
                        .iter()
                        .chain(&self.member_positions)
                        .any(|p| p[0] == point[0] && p[1] == point[1]);
                }
                let m = self.hull_vertices.len();
                for i in 0..m {
                    let a = &self.hull_vertices[i];
                    let b = &self.hull_vertices[(i + 1) % m];
                    if cross(a, b, point) < 0.0 {
                        return false;
                    }
                }
                true
            }
            _ => false,
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    // guard the final entry so a u ~ 1 draw cannot fall off the end
    if let Some(last) = cum.last_mut() {
        *last = f64::INFINITY;
    }
    cum
}

fn draw_index(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c < u).min(cum.len() - 1)
}

/// Cholesky factor of (cov + ridge * I), lower triangular, row-major.
fn cholesky_ridge(cov: &Covariance) -> Result<Vec<f64>> {
    let d = cov.dim();
    let mut a: Vec<f64> = (0..d * d).map(|i| cov.data[i]).collect();
    for j in 0..d {
        a[j * d + j] += COV_RIDGE;
    }
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                // centered covariance is PSD up to rounding; tolerate tiny
                // negative pivots from cancellation
                if sum < -1e-8 * (1.0 + a[i * d + i].abs()) {
                    return Err(Error::ResampleFailure(format!(
                        "covariance not positive semidefinite (pivot {sum})"
                    )));
                }
                l[i * d + j] = sum.max(0.0).sqrt();
            } else {
                let piv = l[j * d + j];
                l[i * d + j] = if piv > 0.0 { sum / piv } else { 0.0 };
            }
        }
    }
    Ok(l)
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull; returns vertices in counterclockwise order.
fn convex_hull(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts.into_iter().map(|(x, y)| vec![x, y]).collect();
    }
    let turn = |o: &(f64, f64), a: &(f64, f64), b: &(f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && turn(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && turn(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.into_iter().map(|(x, y)| vec![x, y]).collect()
}
