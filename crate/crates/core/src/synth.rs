//! Synthetic corpora drawn from known mixtures, plus oracles used to check
//! the fast paths.
//!
//! All designs here are synthetic benchmarks; none come from a published
//! experiment.

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::em::{self, EmConfig, EmError, FitResult};
use crate::mixture::{self, kl_categorical, map_assign, MixtureError, MixtureModel};
use crate::selection::{self, SelectionError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid planted mixture: {0}")]
    Invalid(String),
    #[error("oracle infeasible: document {doc} has n_l·τ = {value:.1} > 600")]
    OracleInfeasible { doc: usize, value: f64 },
    #[error("could not reach separation {target} after {attempts} draws")]
    Separation { target: f64, attempts: usize },
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// A mixture with known parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMixture {
    pub weights: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    /// Smallest `KL(row_i, row_j)` over ordered pairs `i ≠ j`.
    pub separation: f64,
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(SynthError::Invalid(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(SynthError::Invalid(format!("{what} sums to {s}")));
    }
    Ok(())
}

impl PlantedMixture {
    pub fn new(weights: Vec<f64>, densities: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != densities.len() {
            return Err(SynthError::Invalid(format!(
                "{} weights for {} densities",
                weights.len(),
                densities.len()
            )));
        }
        let b = densities[0].len();
        if b == 0 || densities.iter().any(|r| r.len() != b) {
            return Err(SynthError::Invalid("density rows must share a positive length".into()));
        }
        check_simplex(&weights, "weights")?;
        for (k, row) in densities.iter().enumerate() {
            check_simplex(row, &format!("density {k}"))?;
        }
        let mut separation = f64::INFINITY;
        for i in 0..densities.len() {
            for j in 0..densities.len() {
                if i != j {
                    let kl = match kl_categorical(&densities[i], &densities[j]) {
                        Ok(v) => v,
                        Err(MixtureError::InfiniteDivergence { .. }) => f64::INFINITY,
                        Err(e) => return Err(e.into()),
                    };
                    separation = separation.min(kl);
                }
            }
        }
        Ok(Self {
            weights,
            densities,
            separation,
        })
    }

    /// Draws `k` rows from a flat Dirichlet over `b` words (blended with 2%
    /// uniform mass so every entry stays positive) until every ordered pair
    /// is at least `min_kl` apart. Weights are uniform.
    pub fn separated(k: usize, b: usize, min_kl: f64, seed: u64) -> Result<Self> {
        if k == 0 || b < 2 {
            return Err(SynthError::Invalid("need k ≥ 1 and b ≥ 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        const ATTEMPTS: usize = 10_000;
        for _ in 0..ATTEMPTS {
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    let g: Vec<f64> = (0..b).map(|_| gamma.sample(&mut rng)).collect();
                    let total: f64 = g.iter().sum();
                    g.iter().map(|x| 0.98 * x / total + 0.02 / b as f64).collect()
                })
                .collect();
            let mix = Self::new(vec![1.0 / k as f64; k], rows)?;
            if mix.separation >= min_kl {
                return Ok(mix);
            }
        }
        Err(SynthError::Separation {
            target: min_kl,
            attempts: ATTEMPTS,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn num_words(&self) -> usize {
        self.densities[0].len()
    }

    /// The planted parameters as a model with floor `epsilon`.
    pub fn to_model(&self, epsilon: f64) -> Result<MixtureModel> {
        Ok(MixtureModel::new(
            self.weights.clone(),
            self.densities.clone(),
            epsilon,
        )?)
    }
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    pub mixture: PlantedMixture,
    pub labels_true: Vec<usize>,
    /// Density `s_l` that generated document `l`.
    pub true_densities: Vec<Vec<f64>>,
}

/// Samples `num_docs` documents: a label from the weights, a length uniform
/// in `lengths`, then that many i.i.d. words from the labelled density.
pub fn generate_corpus(
    mix: &PlantedMixture,
    num_docs: usize,
    lengths: (usize, usize),
    seed: u64,
) -> Result<PlantedCorpus> {
    let (lo, hi) = lengths;
    if num_docs == 0 || lo == 0 || hi < lo {
        return Err(SynthError::Invalid(format!(
            "need num_docs ≥ 1 and 1 ≤ min ≤ max, got {num_docs} docs, lengths {lengths:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label_dist = WeightedIndex::new(&mix.weights).map_err(|e| SynthError::Invalid(format!("weights: {e}")))?;
    let word_dists: Vec<WeightedIndex<f64>> = mix
        .densities
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| SynthError::Invalid(format!("density: {e}"))))
        .collect::<Result<_>>()?;

    let mut docs = Vec::with_capacity(num_docs);
    let mut labels = Vec::with_capacity(num_docs);
    for _ in 0..num_docs {
        let z = label_dist.sample(&mut rng);
        let len = rng.random_range(lo..=hi);
        let mut counts = vec![0u32; mix.num_words()];
        for _ in 0..len {
            counts[word_dists[z].sample(&mut rng)] += 1;
        }
        let pairs = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(w, &c)| (w as u32, c));
        docs.push(Document::from_pairs(pairs)?);
        labels.push(z);
    }
    let vocab = Vocabulary::new((0..mix.num_words()).map(|w| format!("w{w}")).collect())?;
    let ids = (1..=num_docs as u64).collect();
    let corpus = Corpus::new(docs, ids, vocab)?;
    let true_densities = labels.iter().map(|&z| mix.densities[z].clone()).collect();
    Ok(PlantedCorpus {
        corpus,
        mixture: mix.clone(),
        labels_true: labels,
        true_densities,
    })
}

/// Double-double arithmetic (an unevaluated sum `hi + lo`), about 106 bits.
pub mod dd {
    use std::ops::{Add, Mul};

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Dd {
        pub hi: f64,
        pub lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    impl Dd {
        pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
        pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

        pub fn from_f64(x: f64) -> Self {
            Dd { hi: x, lo: 0.0 }
        }

        pub fn to_f64(self) -> f64 {
            self.hi + self.lo
        }

        /// Natural log, first order in `lo`. Accurate to about one f64 ulp,
        /// which is the precision of the inputs it is applied to.
        pub fn ln(self) -> Dd {
            Dd::from_f64(self.hi.ln()) + Dd::from_f64(self.lo / self.hi)
        }

        pub fn sqrt(self) -> Dd {
            if self.hi <= 0.0 {
                return Dd::ZERO;
            }
            let s = self.hi.sqrt();
            let sq = Dd::from_f64(s) * Dd::from_f64(s);
            let resid = (self.hi - sq.hi) - sq.lo + self.lo;
            Dd::from_f64(s) + Dd::from_f64(resid / (2.0 * s))
        }
    }

    impl Add for Dd {
        type Output = Dd;
        fn add(self, o: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, o.hi);
            let (t, f) = two_sum(self.lo, o.lo);
            let (s, e) = quick_two_sum(s, e + t);
            let (hi, lo) = quick_two_sum(s, e + f);
            Dd { hi, lo }
        }
    }

    impl Mul for Dd {
        type Output = Dd;
        fn mul(self, o: Dd) -> Dd {
            let p = self.hi * o.hi;
            let e = self.hi.mul_add(o.hi, -p);
            let e = e + (self.hi * o.lo + self.lo * o.hi);
            let (hi, lo) = quick_two_sum(p, e);
            Dd { hi, lo }
        }
    }
}

use dd::Dd;

/// Log-likelihood evaluated literally as `Σ_l log Σ_k π_k ∏_i f_k(x_l^i)`,
/// one token at a time in double-double arithmetic. Requires
/// `n_l · τ ≤ 600` so the products stay representable.
pub fn brute_force_loglik(corpus: &Corpus, model: &MixtureModel) -> Result<f64> {
    if corpus.vocab_size() != model.num_words() {
        return Err(MixtureError::Shape("vocabulary size mismatch".into()).into());
    }
    let tau = model.tau();
    let densities: Vec<Vec<f64>> = (0..model.num_components()).map(|k| model.density_row(k)).collect();
    let mut total = Dd::ZERO;
    for (l, doc) in corpus.docs().iter().enumerate() {
        let value = corpus.doc_lengths()[l] as f64 * tau;
        if value > 600.0 {
            return Err(SynthError::OracleInfeasible { doc: l, value });
        }
        let mut mixture_prob = Dd::ZERO;
        for (k, row) in densities.iter().enumerate() {
            let mut prod = Dd::from_f64(model.weights()[k]);
            for word in doc.tokens() {
                prod = prod * Dd::from_f64(row[word as usize]);
            }
            mixture_prob = mixture_prob + prod;
        }
        total = total + mixture_prob.ln();
    }
    Ok(total.to_f64())
}

/// Fraction of documents whose predicted cluster maps to their true one
/// under the best one-to-one matching of cluster labels. Unmatched clusters
/// count as errors.
pub fn best_permutation_agreement(truth: &[usize], predicted: &[usize], k_true: usize, k_pred: usize) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let mut table = vec![vec![0i64; k_pred]; k_true];
    for (&t, &p) in truth.iter().zip(predicted) {
        table[t][p] += 1;
    }
    // orient so rows ≤ columns
    let (rows, cols) = if k_true <= k_pred {
        (table, k_pred)
    } else {
        let t: Vec<Vec<i64>> = (0..k_pred)
            .map(|p| (0..k_true).map(|t| table[t][p]).collect())
            .collect();
        (t, k_true)
    };
    let matched = if cols <= 8 {
        (0..cols)
            .permutations(rows.len())
            .map(|perm| perm.iter().enumerate().map(|(r, &c)| rows[r][c]).sum::<i64>())
            .max()
            .unwrap_or(0)
    } else {
        let m = pathfinding::matrix::Matrix::from_rows(rows).expect("rectangular table");
        pathfinding::kuhn_munkres::kuhn_munkres(&m).0
    };
    matched as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// `Σ_l (n_l/n) KL(s_l, f̂_{k̂_l})`.
    pub risk: f64,
    pub agreement: f64,
    pub k_true: usize,
    pub k_fit: usize,
}

pub fn evaluate_model(planted: &PlantedCorpus, model: &MixtureModel) -> Result<RiskReport> {
    let assignment = map_assign(&planted.corpus, model)?;
    let risk = mixture::weighted_kl_risk(
        &planted.true_densities,
        model,
        &assignment,
        planted.corpus.doc_lengths(),
        planted.corpus.total_tokens(),
    )?;
    let k_true = planted.mixture.num_components();
    let agreement =
        best_permutation_agreement(&planted.labels_true, &assignment.labels, k_true, model.num_components());
    Ok(RiskReport {
        risk,
        agreement,
        k_true,
        k_fit: model.num_components(),
    })
}

/// KL risk and best-permutation label agreement of a fit against the truth.
pub fn evaluate_run(planted: &PlantedCorpus, fit: &FitResult) -> Result<RiskReport> {
    evaluate_model(planted, &fit.model)
}

/// Synthetic experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub k_true: usize,
    pub num_words: usize,
    pub num_docs: usize,
    pub length_min: usize,
    pub length_max: usize,
    /// Minimum pairwise KL between planted rows.
    pub separation: f64,
    pub seeds: Vec<u64>,
    /// `k_max` values for the sweep.
    pub k_ladder: Vec<usize>,
    #[serde(default)]
    pub em: Option<EmConfig>,
}

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

impl ExperimentConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema_version != EXPERIMENT_SCHEMA_VERSION {
            return Err(format!(
                "schema_version: expected {EXPERIMENT_SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        let checks = [
            (self.k_true >= 1, "k_true: must be at least 1"),
            (self.num_words >= 2, "num_words: must be at least 2"),
            (self.num_docs >= 1, "num_docs: must be at least 1"),
            (self.length_min >= 1, "length_min: must be at least 1"),
            (self.length_max >= self.length_min, "length_max: must be >= length_min"),
            (self.separation >= 0.0, "separation: must be non-negative"),
            (!self.k_ladder.is_empty(), "k_ladder: must not be empty"),
            (self.k_ladder.iter().all(|&k| k >= 1), "k_ladder: entries must be >= 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }
}

/// Outcome of one seed of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub k_hat: usize,
    pub lambda_min: f64,
    pub risk: f64,
    pub agreement: f64,
}

/// Planted mixture for a seed: rows are drawn from `seed`, the corpus from
/// `seed + 1`, EM from the configured seed offset by `seed`.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let mix = PlantedMixture::separated(config.k_true, config.num_words, config.separation, seed)?;
    let planted = generate_corpus(
        &mix,
        config.num_docs,
        (config.length_min, config.length_max),
        seed.wrapping_add(1),
    )?;
    let mut em_config = config.em.clone().unwrap_or_default();
    em_config.seed = em_config.seed.wrapping_add(seed.wrapping_mul(1_000_003));
    let sweep = selection::run_sweep(&planted.corpus, &config.k_ladder, &em_config);
    let report = selection::select_slope(&sweep)?;
    let fit = sweep
        .record(report.k_hat)
        .and_then(|r| r.fit.as_ref())
        .ok_or_else(|| SynthError::Invalid(format!("no fit stored for K = {}", report.k_hat)))?;
    let eval = evaluate_run(&planted, fit)?;
    Ok(SeedOutcome {
        seed,
        k_hat: report.k_hat,
        lambda_min: report.lambda_min.unwrap_or(f64::NAN),
        risk: eval.risk,
        agreement: eval.agreement,
    })
}

/// Convenience for tests: robust EM on a planted corpus, evaluated.
pub fn fit_and_evaluate(planted: &PlantedCorpus, k_max: usize, config: &EmConfig) -> Result<(FitResult, RiskReport)> {
    let fit = em::robust_em(&planted.corpus, k_max, config)?;
    let report = evaluate_run(planted, &fit)?;
    Ok((fit, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::log_likelihood;

    fn three_rows() -> PlantedMixture {
        PlantedMixture::new(
            vec![0.2, 0.3, 0.5],
            vec![
                vec![0.7, 0.1, 0.1, 0.1],
                vec![0.1, 0.7, 0.1, 0.1],
                vec![0.1, 0.1, 0.1, 0.7],
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_component_labels_and_frequencies() {
        let mix = PlantedMixture::new(vec![1.0], vec![vec![0.5, 0.3, 0.2]]).unwrap();
        let pc = generate_corpus(&mix, 50, (20, 40), 4).unwrap();
        assert!(pc.labels_true.iter().all(|&z| z == 0));
        let totals = pc.corpus.word_totals();
        let n = pc.corpus.total_tokens() as f64;
        for (t, p) in totals.iter().zip([0.5, 0.3, 0.2]) {
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((*t as f64 / n - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let mix = PlantedMixture::new(vec![1.0, 0.0], vec![vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let pc = generate_corpus(&mix, 100, (1, 5), 8).unwrap();
        assert!(pc.labels_true.iter().all(|&z| z == 0));
    }

    #[test]
    fn label_frequencies_within_three_standard_errors() {
        let pc = generate_corpus(&three_rows(), 200, (50, 200), 21).unwrap();
        for (k, &p) in [0.2, 0.3, 0.5].iter().enumerate() {
            let freq = pc.labels_true.iter().filter(|&&z| z == k).count() as f64 / 200.0;
            let se = (p * (1.0 - p) / 200.0f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "k={k} freq={freq}");
        }
        assert!(pc.corpus.doc_lengths().iter().all(|&n| (50..=200).contains(&n)));
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate_corpus(&three_rows(), 30, (5, 10), 99).unwrap();
        let b = generate_corpus(&three_rows(), 30, (5, 10), 99).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.labels_true, b.labels_true);
    }

    #[test]
    fn brute_force_small_cases() {
        let mix = three_rows();
        let pc = generate_corpus(&mix, 5, (1, 1), 3).unwrap();
        let m = mix.to_model(0.01).unwrap();
        let bf = brute_force_loglik(&pc.corpus, &m).unwrap();
        let mut expected = 0.0;
        for doc in pc.corpus.docs() {
            let w = doc.terms()[0].0 as usize;
            let p: f64 = (0..3).map(|k| mix.weights[k] * mix.densities[k][w]).sum();
            expected += p.ln();
        }
        assert!((bf - expected).abs() < 1e-14);

        let single = PlantedMixture::new(vec![1.0], vec![vec![0.6, 0.4]]).unwrap();
        let pc = generate_corpus(&single, 3, (2, 6), 1).unwrap();
        let m = single.to_model(0.01).unwrap();
        let direct: f64 = pc
            .corpus
            .docs()
            .iter()
            .flat_map(|d| {
                d.terms()
                    .iter()
                    .map(|&(w, c)| f64::from(c) * [0.6f64, 0.4][w as usize].ln())
            })
            .sum();
        assert!((brute_force_loglik(&pc.corpus, &m).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn brute_force_refuses_long_documents() {
        let mix = three_rows();
        let pc = generate_corpus(&mix, 2, (400, 500), 3).unwrap();
        let m = mix.to_model(0.01).unwrap();
        assert!(matches!(
            brute_force_loglik(&pc.corpus, &m),
            Err(SynthError::OracleInfeasible { .. })
        ));
    }

    #[test]
    fn brute_force_agrees_with_log_sum_exp_path() {
        let mix = three_rows();
        let pc = generate_corpus(&mix, 20, (1, 20), 17).unwrap();
        let m = mix.to_model(0.01).unwrap();
        let fast = log_likelihood(&pc.corpus, &m).unwrap();
        let slow = brute_force_loglik(&pc.corpus, &m).unwrap();
        assert!(((fast - slow) / slow).abs() < 1e-10);
    }

    #[test]
    fn dd_ln_and_sqrt() {
        let x = Dd::from_f64(2.0);
        let l = x.ln();
        assert!((l.to_f64() - std::f64::consts::LN_2).abs() < 1e-16);
        let s = x.sqrt();
        assert!((s.to_f64() - std::f64::consts::SQRT_2).abs() < 1e-16);
        let sq = s * s;
        assert!((sq.hi - 2.0).abs() + sq.lo.abs() < 1e-30 + 1e-16);
    }

    #[test]
    fn agreement_perfect_and_chance() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(best_permutation_agreement(&truth, &[2, 2, 0, 0, 1, 1], 3, 3), 1.0);
        // fewer predicted clusters: one true cluster is unmatched
        let a = best_permutation_agreement(&truth, &[0, 0, 0, 0, 1, 1], 3, 2);
        assert!((a - 4.0 / 6.0).abs() < 1e-15);
        // more predicted clusters than true
        let b = best_permutation_agreement(&truth, &[0, 3, 1, 1, 2, 2], 3, 4);
        assert!((b - 5.0 / 6.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth: Vec<usize> = (0..3000).map(|i| i % 3).collect();
        let random: Vec<usize> = (0..3000).map(|_| rng.random_range(0..3)).collect();
        let chance = best_permutation_agreement(&truth, &random, 3, 3);
        assert!((chance - 1.0 / 3.0).abs() < 0.05, "{chance}");
    }

    #[test]
    fn large_k_matching_uses_assignment_solver() {
        let truth: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let shifted: Vec<usize> = truth.iter().map(|t| (t + 3) % 10).collect();
        assert_eq!(best_permutation_agreement(&truth, &shifted, 10, 10), 1.0);
        let exhaustive_sized: Vec<usize> = (0..40).map(|i| i % 8).collect();
        let p: Vec<usize> = exhaustive_sized.iter().map(|t| (t + 1) % 8).collect();
        assert_eq!(best_permutation_agreement(&exhaustive_sized, &p, 8, 8), 1.0);
    }

    #[test]
    fn evaluate_exact_parameters() {
        let mix = three_rows();
        let pc = generate_corpus(&mix, 60, (30, 60), 5).unwrap();
        let m = mix.to_model(1e-4).unwrap();
        let r = evaluate_model(&pc, &m).unwrap();
        assert!(r.agreement > 0.95);
        // risk is zero exactly when every assigned row equals s_l
        if r.agreement == 1.0 {
            assert_eq!(r.risk, 0.0);
        }
    }

    #[test]
    fn separated_mixture_meets_target() {
        let mix = PlantedMixture::separated(3, 20, 0.5, 1).unwrap();
        assert!(mix.separation >= 0.5);
        assert!(mix.densities.iter().flatten().all(|&p| p >= 0.001));
        assert!(PlantedMixture::separated(3, 20, 1e6, 1).is_err());
    }

    #[test]
    fn experiment_config_validation_names_fields() {
        let cfg = ExperimentConfig {
            schema_version: 1,
            k_true: 3,
            num_words: 20,
            num_docs: 200,
            length_min: 50,
            length_max: 40,
            separation: 0.5,
            seeds: vec![],
            k_ladder: vec![1, 2],
            em: None,
        };
        assert!(cfg.validate().unwrap_err().starts_with("length_max"));
    }
}
