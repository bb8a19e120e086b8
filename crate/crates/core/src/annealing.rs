//! Statistical annealing of trained parameter systems: the two-sided
//! initialization-tail test, the random-walk equiprobability band with
//! iterative bandwidth expansion, the chi-square sequence-norm test, and
//! the binomial multi-channel consistency test. Edges failing the
//! criteria are zeroed, turning the parameter matrix into a general
//! sparse matrix whose structure the analysis pipeline exposes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::realmat::{ChannelBundle, RealMatrix};
use crate::stats;

/// Null model for untrained parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitDistribution {
    /// Zero-mean Gaussian scale.
    pub sigma: f64,
}

impl InitDistribution {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        Ok(InitDistribution { sigma })
    }

    /// Robust scale estimate from the full trained population; the
    /// median is insensitive to the learned (non-null) contamination.
    pub fn estimate(values: &[f64]) -> Result<Self> {
        Self::gaussian(stats::robust_sigma(values))
    }
}

/// Parameters of the annealing tests.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestConfig {
    /// Significance level, in (0, 1).
    pub alpha: f64,
    /// Initial equiprobability bandwidth.
    pub delta0: f64,
    /// Bandwidth increment per expansion round.
    pub tau: f64,
    /// Goodness-of-fit bin count (>= 2).
    pub bins: usize,
    /// Channel-sequence length for multi-channel systems.
    pub k: usize,
    /// Retain systematically suppressed edges instead of removing them.
    pub keep_suppressed: bool,
}

impl TestConfig {
    /// Defaults resolving the band at 10% granularity of the uniform
    /// level 1/n.
    pub fn defaults_for(n: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must be in (0,1)".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        let delta0 = 1.0 / (10.0 * n as f64);
        Ok(TestConfig {
            alpha,
            delta0,
            tau: delta0,
            bins: 10,
            k: 8,
            keep_suppressed: false,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must be in (0,1)".into()));
        }
        if !(self.delta0 > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidInput("delta0 and tau must be positive".into()));
        }
        if self.bins < 2 {
            return Err(Error::InvalidInput("bins must be >= 2".into()));
        }
        Ok(())
    }
}

/// Per-edge classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeLabel {
    /// Normalized weight above the equiprobability band.
    Preference,
    /// Inside the band: indistinguishable from random-walk noise.
    Noise,
    /// Below the band: systematically suppressed direction.
    Suppressed,
    /// Channel sequence failed the aggregate norm test.
    RemovedNorm,
    /// Channel edge passing both tests.
    Kept,
}

/// One label per ordered pair, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeClassification {
    pub n: usize,
    pub labels: Vec<EdgeLabel>,
}

impl EdgeClassification {
    pub fn label(&self, i: usize, j: usize) -> EdgeLabel {
        self.labels[i * self.n + j]
    }
}

/// Scalar weights or a multi-channel bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Scalar(RealMatrix),
    Channels(ChannelBundle),
}

impl Weights {
    pub fn n(&self) -> usize {
        match self {
            Weights::Scalar(m) => m.n_rows(),
            Weights::Channels(b) => b.n(),
        }
    }
}

/// Summary statistics of one annealing run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealReport {
    pub n: usize,
    pub mode: String,
    pub alpha: f64,
    pub sigma: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neyman_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi2_threshold: Option<f64>,
    pub kept_edges: usize,
    pub removed_edges: usize,
    pub preference_edges: usize,
    pub noise_edges: usize,
    pub suppressed_edges: usize,
    pub removed_norm_edges: usize,
    pub zero_rows: Vec<usize>,
}

/// Annealed output: weights with removed edges zeroed, plus the
/// per-edge classification and run report.
#[derive(Debug, Clone)]
pub struct AnnealedSystem {
    pub weights: Weights,
    pub classification: EdgeClassification,
    pub report: AnnealReport,
}

/// Decision of a keep/remove test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestDecision {
    Keep,
    Remove,
}

/// Two-sided tail test against the initialization null: reject iff
/// `|w| >= c_alpha` with `P_f0(|w| >= c_alpha) = alpha`.
pub fn neyman_tail_test(w: f64, f0: InitDistribution, alpha: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must be in (0,1)".into()));
    }
    if !w.is_finite() {
        return Err(Error::InvalidInput("test value must be finite".into()));
    }
    Ok(w.abs() >= neyman_threshold(f0, alpha))
}

/// Two-sided Gaussian rejection threshold `sigma * Phi^-1(1 - alpha/2)`.
pub fn neyman_threshold(f0: InitDistribution, alpha: f64) -> f64 {
    f0.sigma * stats::normal_quantile(1.0 - alpha / 2.0)
}

/// Row-normalized absolute weights plus the indices of all-zero rows.
#[derive(Debug, Clone)]
pub struct NormalizedMatrix {
    pub matrix: RealMatrix,
    pub zero_rows: Vec<usize>,
}

/// `wt_ij = |w_ij| / sum_j |w_ij|`; rows summing to zero stay all-zero
/// and are flagged.
pub fn row_normalize(w: &RealMatrix) -> NormalizedMatrix {
    let (rows, cols) = (w.n_rows(), w.n_cols());
    let mut out = RealMatrix::zeros(rows, cols);
    let mut zero_rows = Vec::new();
    for i in 0..rows {
        let sum: f64 = w.row(i).iter().map(|v| v.abs()).sum();
        if sum == 0.0 {
            zero_rows.push(i);
            continue;
        }
        for j in 0..cols {
            out.set(i, j, w.get(i, j).abs() / sum);
        }
    }
    NormalizedMatrix {
        matrix: out,
        zero_rows,
    }
}

/// Pearson chi-square uniformity test of the band population over
/// `bins` equal-width bins; `true` means uniformity is rejected.
fn uniformity_rejected(population: &[f64], lo: f64, hi: f64, bins: usize, alpha: f64) -> bool {
    let width = hi - lo;
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for &v in population {
        if v >= lo && v <= hi {
            let mut b = ((v - lo) / width * bins as f64) as usize;
            if b >= bins {
                b = bins - 1;
            }
            counts[b] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return false;
    }
    // A population concentrated in a single bin carries no spread
    // information; treat the statistic as zero and accept.
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return false;
    }
    let expected = total as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    stat > stats::chi_square_quantile(1.0 - alpha, bins - 1)
}

/// Iterative bandwidth expansion: starting at `delta0`, expand by `tau`
/// while the band population stays consistent with uniformity; return
/// the last accepted bandwidth, capped at `1/n`.
pub fn estimate_bandwidth(population: &[f64], n: usize, cfg: &TestConfig) -> Result<f64> {
    cfg.validate()?;
    if population.is_empty() {
        return Err(Error::InvalidInput("empty population".into()));
    }
    let center = 1.0 / n as f64;
    let delta_max = center;
    let mut delta = cfg.delta0.min(delta_max);
    let mut accepted = delta;
    loop {
        let rejected = uniformity_rejected(
            population,
            center - delta,
            center + delta,
            cfg.bins,
            cfg.alpha,
        );
        if rejected {
            return Ok(accepted);
        }
        accepted = delta;
        if delta >= delta_max {
            return Ok(delta_max);
        }
        delta = (delta + cfg.tau).min(delta_max);
    }
}

/// Three-way classification against the equiprobability band.
pub fn classify_edge(wt: f64, n: usize, delta: f64) -> EdgeLabel {
    let center = 1.0 / n as f64;
    if wt > center + delta {
        EdgeLabel::Preference
    } else if wt < center - delta {
        EdgeLabel::Suppressed
    } else {
        EdgeLabel::Noise
    }
}

/// Aggregate participation test: keep iff `sum x_g^2 / sigma^2` reaches
/// the (1 - alpha) quantile of chi-square with `k` degrees of freedom.
pub fn sequence_norm_test(seq: &[f64], sigma: f64, alpha: f64, k: usize) -> Result<TestDecision> {
    if k == 0 || seq.len() != k {
        return Err(Error::InvalidInput(format!(
            "sequence length {} does not match k={k}",
            seq.len()
        )));
    }
    if seq.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sequence entry".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("sigma must be positive".into()));
    }
    let statistic: f64 = seq.iter().map(|x| x * x).sum::<f64>() / (sigma * sigma);
    let threshold = stats::chi_square_quantile(1.0 - alpha, k);
    Ok(if statistic >= threshold {
        TestDecision::Keep
    } else {
        TestDecision::Remove
    })
}

/// Multi-channel consistency test: `K` = components inside the band;
/// keep (reject the random-walk null) iff the exact lower-tail
/// binomial p-value `P(Binom(k, p0) <= K)` is at most `alpha`.
pub fn channel_consistency_test(
    seq_normalized: &[f64],
    n: usize,
    delta: f64,
    p0: f64,
    alpha: f64,
) -> Result<TestDecision> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidInput("p0 must be in (0,1)".into()));
    }
    let k = seq_normalized.len();
    let center = 1.0 / n as f64;
    let in_band = seq_normalized
        .iter()
        .filter(|&&x| x >= center - delta && x <= center + delta)
        .count();
    let p_value = stats::binomial_cdf_le(in_band, k, p0);
    Ok(if p_value <= alpha {
        TestDecision::Keep
    } else {
        TestDecision::Remove
    })
}

/// Full edge-wise annealing pass; removed edges are zeroed (across all
/// channels in the bundle case).
pub fn anneal(weights: &Weights, f0: InitDistribution, cfg: &TestConfig) -> Result<AnnealedSystem> {
    cfg.validate()?;
    match weights {
        Weights::Scalar(w) => anneal_scalar(w, f0, cfg),
        Weights::Channels(b) => anneal_channels(b, f0, cfg),
    }
}

fn anneal_scalar(w: &RealMatrix, f0: InitDistribution, cfg: &TestConfig) -> Result<AnnealedSystem> {
    if !w.is_square() {
        return Err(Error::InvalidInput("annealing requires a square matrix".into()));
    }
    let n = w.n_rows();
    let threshold = neyman_threshold(f0, cfg.alpha);
    let normalized = row_normalize(w);
    let population: Vec<f64> = normalized.matrix.entries().to_vec();
    let delta = estimate_bandwidth(&population, n, cfg)?;

    let mut out = w.clone();
    let mut labels = Vec::with_capacity(n * n);
    let mut kept = 0usize;
    let (mut n_pref, mut n_noise, mut n_supp) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let label = classify_edge(normalized.matrix.get(i, j), n, delta);
            match label {
                EdgeLabel::Preference => n_pref += 1,
                EdgeLabel::Noise => n_noise += 1,
                EdgeLabel::Suppressed => n_supp += 1,
                _ => unreachable!(),
            }
            let significant = w.get(i, j).abs() >= threshold;
            let structurally_kept = match label {
                EdgeLabel::Preference => true,
                EdgeLabel::Suppressed => cfg.keep_suppressed,
                _ => false,
            };
            if significant && structurally_kept {
                kept += 1;
            } else {
                out.set(i, j, 0.0);
            }
            labels.push(label);
        }
    }
    let report = AnnealReport {
        n,
        mode: "scalar".into(),
        alpha: cfg.alpha,
        sigma: f0.sigma,
        delta,
        p0: None,
        neyman_threshold: Some(threshold),
        chi2_threshold: None,
        kept_edges: kept,
        removed_edges: n * n - kept,
        preference_edges: n_pref,
        noise_edges: n_noise,
        suppressed_edges: n_supp,
        removed_norm_edges: 0,
        zero_rows: normalized.zero_rows,
    };
    Ok(AnnealedSystem {
        weights: Weights::Scalar(out),
        classification: EdgeClassification { n, labels },
        report,
    })
}

fn anneal_channels(
    b: &ChannelBundle,
    f0: InitDistribution,
    cfg: &TestConfig,
) -> Result<AnnealedSystem> {
    let n = b.n();
    let k = b.k();
    if cfg.k != k {
        return Err(Error::InvalidInput(format!(
            "config k={} does not match bundle k={k}",
            cfg.k
        )));
    }
    // Each channel operator is normalized separately; the band and p0
    // come from the merged global population.
    let mut normalized_channels = Vec::with_capacity(k);
    let mut zero_rows = Vec::new();
    for m in b.w1().iter().chain(b.w2().iter()) {
        let norm = row_normalize(m);
        zero_rows.extend(norm.zero_rows.iter().copied());
        normalized_channels.push(norm.matrix);
    }
    zero_rows.sort_unstable();
    zero_rows.dedup();
    let population: Vec<f64> = normalized_channels
        .iter()
        .flat_map(|m| m.entries().iter().copied())
        .collect();
    let delta = estimate_bandwidth(&population, n, cfg)?;
    let center = 1.0 / n as f64;
    let in_band = population
        .iter()
        .filter(|&&x| x >= center - delta && x <= center + delta)
        .count();
    let p0 = (in_band as f64 / population.len() as f64).clamp(1e-12, 1.0 - 1e-12);
    let chi2_threshold = stats::chi_square_quantile(1.0 - cfg.alpha, k);

    let mut out = b.clone();
    let mut labels = Vec::with_capacity(n * n);
    let (mut kept, mut removed_norm, mut noise) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let seq = b.edge_sequence(i, j);
            let norm_keep = sequence_norm_test(&seq, f0.sigma, cfg.alpha, k)?;
            if norm_keep == TestDecision::Remove {
                out.set_edge_zero(i, j);
                labels.push(EdgeLabel::RemovedNorm);
                removed_norm += 1;
                continue;
            }
            let seq_norm: Vec<f64> = normalized_channels.iter().map(|m| m.get(i, j)).collect();
            let cons = channel_consistency_test(&seq_norm, n, delta, p0, cfg.alpha)?;
            if cons == TestDecision::Keep {
                labels.push(EdgeLabel::Kept);
                kept += 1;
            } else {
                out.set_edge_zero(i, j);
                labels.push(EdgeLabel::Noise);
                noise += 1;
            }
        }
    }
    let report = AnnealReport {
        n,
        mode: "channel".into(),
        alpha: cfg.alpha,
        sigma: f0.sigma,
        delta,
        p0: Some(p0),
        neyman_threshold: None,
        chi2_threshold: Some(chi2_threshold),
        kept_edges: kept,
        removed_edges: n * n - kept,
        preference_edges: 0,
        noise_edges: noise,
        suppressed_edges: 0,
        removed_norm_edges: removed_norm,
        zero_rows,
    };
    Ok(AnnealedSystem {
        weights: Weights::Channels(out),
        classification: EdgeClassification { n, labels },
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn neyman_accepts_center() {
        let f0 = InitDistribution::gaussian(1.0).unwrap();
        assert!(!neyman_tail_test(0.0, f0, 0.5).unwrap());
    }

    #[test]
    fn neyman_threshold_matches_quantile_oracle() {
        // sigma=1, alpha=0.05: threshold ~ 1.95996.
        let f0 = InitDistribution::gaussian(1.0).unwrap();
        let c = neyman_threshold(f0, 0.05);
        assert!((c - 1.959963984540054).abs() < 1e-9);
        assert!(neyman_tail_test(2.5, f0, 0.05).unwrap());
        assert!(!neyman_tail_test(1.5, f0, 0.05).unwrap());
    }

    #[test]
    fn neyman_monotone_in_alpha() {
        let f0 = InitDistribution::gaussian(0.7).unwrap();
        let w = 1.3;
        let mut rejected_before = false;
        for &alpha in &[0.001, 0.01, 0.05, 0.1, 0.3, 0.6] {
            let rej = neyman_tail_test(w, f0, alpha).unwrap();
            if rejected_before {
                assert!(rej, "rejection must persist as alpha grows");
            }
            rejected_before = rej;
        }
    }

    #[test]
    fn neyman_monte_carlo_calibration() {
        let f0 = InitDistribution::gaussian(1.5).unwrap();
        let alpha = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let normal = Normal::new(0.0, 1.5).unwrap();
        let trials = 100_000;
        let rejections = (0..trials)
            .filter(|_| neyman_tail_test(normal.sample(&mut rng), f0, alpha).unwrap())
            .count();
        let rate = rejections as f64 / trials as f64;
        let bound = 3.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt();
        assert!((rate - alpha).abs() <= bound, "rate={rate}");
    }

    #[test]
    fn row_normalize_uniform_row() {
        let w = RealMatrix::from_entries(2, 2, vec![3.0, 3.0, 1.0, 1.0]).unwrap();
        let norm = row_normalize(&w);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(norm.matrix.get(i, j), 0.5);
            }
        }
        assert!(norm.zero_rows.is_empty());
    }

    #[test]
    fn row_normalize_zero_row_flagged() {
        let w = RealMatrix::from_entries(2, 2, vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        let norm = row_normalize(&w);
        assert_eq!(norm.zero_rows, vec![0]);
        assert_eq!(norm.matrix.get(0, 0), 0.0);
        assert_eq!(norm.matrix.get(0, 1), 0.0);
    }

    #[test]
    fn row_normalize_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20;
        let w =
            RealMatrix::from_entries(n, n, (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .unwrap();
        let norm = row_normalize(&w);
        for i in 0..n {
            let s: f64 = norm.matrix.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bandwidth_degenerate_uniform_returns_cap() {
        let n = 10;
        let cfg = TestConfig::defaults_for(n, 0.05).unwrap();
        let population = vec![0.1; 500];
        let delta = estimate_bandwidth(&population, n, &cfg).unwrap();
        assert_eq!(delta, 0.1);
    }

    #[test]
    fn bandwidth_covers_synthetic_uniform_band() {
        let n = 100;
        let mut cfg = TestConfig::defaults_for(n, 0.05).unwrap();
        cfg.delta0 = 0.002;
        cfg.tau = 0.002;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let center = 1.0 / n as f64;
        let population: Vec<f64> = (0..20_000)
            .map(|_| rng.gen_range(center - 0.01..center + 0.01))
            .collect();
        let delta = estimate_bandwidth(&population, n, &cfg).unwrap();
        // Uniform draws on +-0.01: the estimate reaches 0.01 within one
        // tau step (values outside the band never appear, so expansion
        // continues to the cap or stops right past the true width).
        assert!(delta >= 0.01 - cfg.tau, "delta={delta}");
    }

    #[test]
    fn bandwidth_bimodal_rejects_early() {
        let n = 10;
        let mut cfg = TestConfig::defaults_for(n, 0.05).unwrap();
        cfg.delta0 = 0.05;
        cfg.tau = 0.01;
        // Mass piled near the band edges, far from 1/n = 0.1.
        let mut population = vec![0.051; 400];
        population.extend(vec![0.149; 400]);
        let delta = estimate_bandwidth(&population, n, &cfg).unwrap();
        // Uniformity fails immediately, so the initial bandwidth is
        // returned unexpanded.
        assert_eq!(delta, cfg.delta0);
    }

    #[test]
    fn classify_total_three_way() {
        let n = 10;
        let delta = 0.02;
        assert_eq!(classify_edge(0.1, n, delta), EdgeLabel::Noise);
        assert_eq!(classify_edge(0.2, n, delta), EdgeLabel::Preference);
        assert_eq!(classify_edge(0.05, n, delta), EdgeLabel::Suppressed);
        // Band edges are noise (closed interval).
        assert_eq!(classify_edge(0.12, n, delta), EdgeLabel::Noise);
        assert_eq!(classify_edge(0.08, n, delta), EdgeLabel::Noise);
    }

    #[test]
    fn sequence_norm_zero_sequence_removed() {
        let d = sequence_norm_test(&[0.0; 8], 1.0, 0.05, 8).unwrap();
        assert_eq!(d, TestDecision::Remove);
    }

    #[test]
    fn sequence_norm_threshold_value() {
        let t = stats::chi_square_quantile(0.95, 8);
        assert!((t - 15.50731305586545).abs() < 1e-6, "t={t}");
    }

    #[test]
    fn sequence_norm_invariant_under_sign_flip_and_permutation() {
        let seq = [0.3, -1.2, 0.7, 2.0, -0.1, 0.9, -1.5, 0.4];
        let flipped: Vec<f64> = seq.iter().map(|x| -x).collect();
        let mut permuted = seq.to_vec();
        permuted.reverse();
        let a = sequence_norm_test(&seq, 0.8, 0.05, 8).unwrap();
        assert_eq!(a, sequence_norm_test(&flipped, 0.8, 0.05, 8).unwrap());
        assert_eq!(a, sequence_norm_test(&permuted, 0.8, 0.05, 8).unwrap());
    }

    #[test]
    fn sequence_norm_monte_carlo_calibration() {
        let alpha = 0.05;
        let sigma = 1.3;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let normal = Normal::new(0.0, sigma).unwrap();
        let trials = 100_000;
        let keeps = (0..trials)
            .filter(|_| {
                let seq: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
                sequence_norm_test(&seq, sigma, alpha, 8).unwrap() == TestDecision::Keep
            })
            .count();
        let rate = keeps as f64 / trials as f64;
        let bound = 3.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt();
        assert!((rate - alpha).abs() <= bound, "rate={rate}");
    }

    #[test]
    fn consistency_all_in_band_removed() {
        let n = 10;
        let seq = vec![0.1; 8];
        let d = channel_consistency_test(&seq, n, 0.02, 0.5, 0.05).unwrap();
        assert_eq!(d, TestDecision::Remove);
    }

    #[test]
    fn consistency_zero_count_keeps_at_half() {
        // K=0, p0=0.5: p-value 0.5^8 ~ 0.0039 <= 0.05.
        let n = 10;
        let seq = vec![0.9; 8];
        let d = channel_consistency_test(&seq, n, 0.02, 0.5, 0.05).unwrap();
        assert_eq!(d, TestDecision::Keep);
    }

    #[test]
    fn consistency_matches_exact_binomial_oracle() {
        // k=8, p0=0.9, K=2: exact cdf decides.
        let n = 10;
        let mut seq = vec![0.9; 6];
        seq.extend(vec![0.1; 2]);
        let p_value = stats::binomial_cdf_le(2, 8, 0.9);
        let d = channel_consistency_test(&seq, n, 0.02, 0.9, 0.05).unwrap();
        assert_eq!(d == TestDecision::Keep, p_value <= 0.05);
    }

    #[test]
    fn consistency_rejects_bad_p0() {
        assert!(channel_consistency_test(&[0.1; 8], 10, 0.02, 0.0, 0.05).is_err());
    }

    #[test]
    fn anneal_all_zero_matrix_removes_everything() {
        let f0 = InitDistribution::gaussian(1.0).unwrap();
        let cfg = TestConfig::defaults_for(6, 0.05).unwrap();
        let sys = anneal(&Weights::Scalar(RealMatrix::zeros(6, 6)), f0, &cfg).unwrap();
        assert_eq!(sys.report.kept_edges, 0);
        match sys.weights {
            Weights::Scalar(m) => assert!(m.entries().iter().all(|&v| v == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn anneal_null_only_population_keeps_at_most_alpha() {
        let n = 60;
        let sigma = 0.5;
        let alpha = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let normal = Normal::new(0.0, sigma).unwrap();
        let w = RealMatrix::from_entries(
            n,
            n,
            (0..n * n).map(|_| normal.sample(&mut rng)).collect(),
        )
        .unwrap();
        let f0 = InitDistribution::gaussian(sigma).unwrap();
        let cfg = TestConfig::defaults_for(n, alpha).unwrap();
        let sys = anneal(&Weights::Scalar(w), f0, &cfg).unwrap();
        let total = (n * n) as f64;
        let kept_rate = sys.report.kept_edges as f64 / total;
        let bound = 3.0 * (alpha * (1.0 - alpha) / total).sqrt();
        assert!(kept_rate <= alpha + bound, "kept_rate={kept_rate}");
    }

    #[test]
    fn anneal_channel_bundle_zeroes_removed_edges_everywhere() {
        // Random-walk-like noise of uniform magnitude: every row
        // normalizes to exactly 1/n, so the equiprobability band holds
        // the bulk of the population and p0 is high. One planted edge
        // carries consistent strong weight across all channels.
        let n = 12;
        let sigma = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut mats: Vec<RealMatrix> = (0..8)
            .map(|_| {
                RealMatrix::from_entries(
                    n,
                    n,
                    (0..n * n)
                        .map(|_| if rng.gen_bool(0.5) { sigma } else { -sigma })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        for m in &mut mats {
            m.set(2, 5, 4.0);
        }
        let w2 = mats.split_off(4);
        let bundle = ChannelBundle::new(mats, w2).unwrap();
        let f0 = InitDistribution::gaussian(sigma).unwrap();
        let cfg = TestConfig::defaults_for(n, 0.05).unwrap();
        let sys = anneal(&Weights::Channels(bundle), f0, &cfg).unwrap();
        let bundle_out = match &sys.weights {
            Weights::Channels(b) => b,
            _ => unreachable!(),
        };
        for i in 0..n {
            for j in 0..n {
                let seq = bundle_out.edge_sequence(i, j);
                match sys.classification.label(i, j) {
                    EdgeLabel::Kept => {}
                    _ => assert!(seq.iter().all(|&v| v == 0.0), "({i},{j}) not zeroed"),
                }
            }
        }
        // Noise edges fail the aggregate norm test (statistic exactly
        // k < chi-square threshold); only the planted edge survives.
        assert_eq!(sys.classification.label(2, 5), EdgeLabel::Kept);
        assert_eq!(sys.report.kept_edges, 1);
    }
}
