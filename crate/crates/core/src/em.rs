//! EM fitting with floor-constrained M-steps, multi-start short runs and
//! component annihilation.
//!
//! `robust_em` starts `n_starts` short EM runs at `k_max` components from
//! random parameters, keeps the best one, and then alternates between
//! removing components whose weight fell below `1 / (divisor · k_current)`
//! and running EM on the survivors until a run ends with no component
//! under the threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::mixture::{self, corpus_log_joints, MixtureError, MixtureModel};

#[derive(Debug, Error)]
pub enum EmError {
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("floor {epsilon} is infeasible for {num_words} words (B·ε > 1)")]
    InfeasibleFloor { epsilon: f64, num_words: usize },
    #[error("water-filling needs non-negative weights with a positive sum")]
    InvalidWeights,
    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("every component was annihilated")]
    Degenerate,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EmError>;

/// How the density floor `ε` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Floor {
    /// `ε = 1/n` with `n` the corpus token count.
    #[default]
    InverseTokens,
    Value(f64),
}

impl Floor {
    pub fn resolve(self, corpus: &Corpus) -> Result<f64> {
        let eps = match self {
            Floor::InverseTokens => 1.0 / corpus.total_tokens() as f64,
            Floor::Value(v) => v,
        };
        if !(eps > 0.0 && eps * corpus.vocab_size() as f64 <= 1.0) {
            return Err(EmError::InfeasibleFloor {
                epsilon: eps,
                num_words: corpus.vocab_size(),
            });
        }
        Ok(eps)
    }
}

impl std::str::FromStr for Floor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "1/n" {
            return Ok(Floor::InverseTokens);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && *v < 1.0)
            .map(Floor::Value)
            .ok_or_else(|| format!("expected `1/n` or a value in (0, 1), got {s:?}"))
    }
}

/// Missing fields take their defaults when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub n_starts: usize,
    pub short_iters: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub annihilation_divisor: f64,
    pub seed: u64,
    pub floor: Floor,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_starts: 15,
            short_iters: 10,
            max_iters: 500,
            rel_tol: 1e-6,
            annihilation_divisor: 100.0,
            seed: 0,
            floor: Floor::InverseTokens,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(EmError::Config("n_starts must be at least 1".into()));
        }
        if self.short_iters == 0 {
            return Err(EmError::Config("short_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(EmError::Config("rel_tol must be positive".into()));
        }
        if !(self.annihilation_divisor > 0.0) {
            return Err(EmError::Config("annihilation_divisor must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major `L×K` posterior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    num_components: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let num_components = rows.first().map_or(0, Vec::len);
        Self {
            num_components,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn num_docs(&self) -> usize {
        self.values.len().checked_div(self.num_components).unwrap_or(0)
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.num_components..(l + 1) * self.num_components]
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.num_components + k]
    }
}

/// Posterior responsibilities and the total log-likelihood of `model`.
pub fn e_step(corpus: &Corpus, model: &MixtureModel) -> Result<(Responsibilities, f64)> {
    let joints = corpus_log_joints(corpus, model)?;
    let k = model.num_components();
    let mut values = Vec::with_capacity(joints.len() * k);
    let mut loglik = 0.0;
    for j in &joints {
        loglik += j.doc_log_density;
        values.extend(j.per_component.iter().map(|a| (a - j.doc_log_density).exp()));
    }
    Ok((
        Responsibilities {
            num_components: k,
            values,
        },
        loglik,
    ))
}

/// Maximizes `Σ_b w_b log f_b` over the simplex with `f_b ≥ ε`.
///
/// The KKT solution is `f_b = max(ε, w_b / λ)`. Coordinates are sorted by
/// weight; the free set is always a prefix of that order, so the first
/// prefix length whose `λ` is self-consistent gives the exact maximizer.
pub fn water_fill_project(weights: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let b = weights.len();
    if b == 0 || !(epsilon >= 0.0) || epsilon * b as f64 > 1.0 + 1e-12 {
        return Err(EmError::InfeasibleFloor { epsilon, num_words: b });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(EmError::InvalidWeights);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(EmError::InvalidWeights);
    }
    if epsilon * b as f64 >= 1.0 {
        return Ok(vec![1.0 / b as f64; b]);
    }

    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]).then(x.cmp(&y)));

    let mut prefix = 0.0;
    let mut lambda = f64::NAN;
    for m in 1..=b {
        prefix += weights[order[m - 1]];
        let free_mass = 1.0 - (b - m) as f64 * epsilon;
        let candidate = prefix / free_mass;
        let smallest_free_ok = weights[order[m - 1]] > epsilon * candidate;
        let next_pinned_ok = m == b || weights[order[m]] <= epsilon * candidate;
        if smallest_free_ok && next_pinned_ok {
            lambda = candidate;
            break;
        }
        if smallest_free_ok {
            lambda = candidate;
        }
    }

    let mut f: Vec<f64> = weights.iter().map(|&w| (w / lambda).max(epsilon)).collect();
    // absorb rounding so the row sums to one without touching pinned entries
    let free_sum: f64 = f.iter().filter(|&&v| v > epsilon).sum();
    let pinned = f.iter().filter(|&&v| v <= epsilon).count() as f64 * epsilon;
    if free_sum > 0.0 {
        let scale = (1.0 - pinned) / free_sum;
        for v in f.iter_mut().filter(|v| **v > epsilon) {
            *v = (*v * scale).max(epsilon);
        }
    }
    Ok(f)
}

/// Weighted-count M-step.
///
/// A component whose responsibilities sum to zero gets weight zero and a
/// uniform density; annihilation removes it later.
pub fn m_step(corpus: &Corpus, resp: &Responsibilities, epsilon: f64) -> Result<MixtureModel> {
    let k = resp.num_components();
    let l = corpus.num_docs();
    if resp.num_docs() != l {
        return Err(MixtureError::Shape(format!(
            "responsibilities cover {} docs, corpus has {l}",
            resp.num_docs()
        ))
        .into());
    }
    let b = corpus.vocab_size();
    let rows: Vec<(f64, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|kk| {
            let mut mass = 0.0;
            let mut counts = vec![0.0; b];
            for (ll, doc) in corpus.docs().iter().enumerate() {
                let r = resp.get(ll, kk);
                if r == 0.0 {
                    continue;
                }
                mass += r;
                for &(w, c) in doc.terms() {
                    counts[w as usize] += r * f64::from(c);
                }
            }
            (mass, counts)
        })
        .collect();

    let total_mass: f64 = rows.iter().map(|(m, _)| m).sum();
    let mut weights = Vec::with_capacity(k);
    let mut log_densities = Vec::with_capacity(k * b);
    for (mass, counts) in rows {
        if mass > 0.0 && counts.iter().sum::<f64>() > 0.0 {
            weights.push(mass / total_mass);
            let f = water_fill_project(&counts, epsilon)?;
            log_densities.extend(f.iter().map(|p| p.ln()));
        } else {
            weights.push(0.0);
            log_densities.extend(std::iter::repeat_n(-(b as f64).ln(), b));
        }
    }
    let weights = mixture::normalize(weights);
    Ok(MixtureModel::from_log_parts(weights, log_densities, b, epsilon)?)
}

/// Removal of below-threshold components at one point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnihilationEvent {
    /// Index in `loglik_trace` of the first value after removal.
    pub trace_index: usize,
    /// EM iterations completed before the removal.
    pub iteration: usize,
    /// Indices (in the pre-removal model) of the removed components.
    pub removed: Vec<usize>,
    pub k_before: usize,
    pub k_after: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MixtureModel,
    /// Log-likelihood after each EM iteration; starts with the initial value.
    pub loglik_trace: Vec<f64>,
    pub k_initial: usize,
    pub k_final: usize,
    pub annihilation_events: Vec<AnnihilationEvent>,
    pub seed: u64,
    pub converged: bool,
    /// Relative log-likelihood change of the last iteration.
    pub eta_effective: f64,
    /// Total number of M-steps.
    pub iterations: usize,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }

    /// Trace split at annihilation events. EM is monotone within each piece;
    /// removing components can lower the likelihood between pieces.
    pub fn trace_segments(&self) -> Vec<&[f64]> {
        let mut cuts: Vec<usize> = self.annihilation_events.iter().map(|e| e.trace_index).collect();
        cuts.push(self.loglik_trace.len());
        let mut start = 0;
        let mut out = Vec::with_capacity(cuts.len());
        for cut in cuts {
            if cut > start {
                out.push(&self.loglik_trace[start..cut]);
            }
            start = cut;
        }
        out
    }

    /// Serializable summary of the run (everything but the model itself).
    pub fn run_log(&self, config: &EmConfig) -> RunLog {
        RunLog {
            k_initial: self.k_initial,
            k_final: self.k_final,
            seed: self.seed,
            converged: self.converged,
            eta_effective: self.eta_effective,
            iterations: self.iterations,
            loglik: self.loglik(),
            loglik_trace: self.loglik_trace.clone(),
            annihilation_events: self.annihilation_events.clone(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub k_initial: usize,
    pub k_final: usize,
    pub seed: u64,
    pub converged: bool,
    pub eta_effective: f64,
    pub iterations: usize,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub annihilation_events: Vec<AnnihilationEvent>,
    pub config: EmConfig,
}

struct Segment {
    model: MixtureModel,
    trace: Vec<f64>,
    converged: bool,
    eta: f64,
}

fn relative_change(prev: f64, next: f64) -> f64 {
    let scale = prev.abs();
    if scale > 0.0 {
        (next - prev) / scale
    } else {
        next - prev
    }
}

fn iterate(corpus: &Corpus, init: MixtureModel, max_iters: usize, rel_tol: f64, offset: usize) -> Result<Segment> {
    let epsilon = init.epsilon();
    let mut model = init;
    let (mut resp, mut ll) = e_step(corpus, &model)?;
    if !ll.is_finite() {
        return Err(EmError::NonFinite { iteration: offset });
    }
    let mut trace = vec![ll];
    let mut converged = false;
    let mut eta = f64::INFINITY;
    for it in 1..=max_iters {
        let next = m_step(corpus, &resp, epsilon)?;
        let (next_resp, next_ll) = e_step(corpus, &next)?;
        if !next_ll.is_finite() {
            return Err(EmError::NonFinite { iteration: offset + it });
        }
        eta = relative_change(ll, next_ll);
        model = next;
        resp = next_resp;
        ll = next_ll;
        trace.push(ll);
        if eta < rel_tol {
            converged = true;
            break;
        }
    }
    Ok(Segment {
        model,
        trace,
        converged,
        eta,
    })
}

/// Plain EM from `init` until the relative improvement drops below
/// `config.rel_tol` or `config.max_iters` iterations.
pub fn run_em(corpus: &Corpus, init: MixtureModel, config: &EmConfig) -> Result<FitResult> {
    let k = init.num_components();
    let seg = iterate(corpus, init, config.max_iters, config.rel_tol, 0)?;
    Ok(FitResult {
        k_initial: k,
        k_final: seg.model.num_components(),
        iterations: seg.trace.len() - 1,
        model: seg.model,
        loglik_trace: seg.trace,
        annihilation_events: Vec::new(),
        seed: config.seed,
        converged: seg.converged,
        eta_effective: seg.eta,
    })
}

/// Random starting parameters: exponential-draw weights, and densities that
/// perturb the corpus word distribution with multiplicative `Exp(1)` noise
/// before water-filling to the floor.
pub fn random_init(corpus: &Corpus, k: usize, epsilon: f64, rng: &mut impl Rng) -> Result<MixtureModel> {
    if k == 0 {
        return Err(EmError::Config("K must be at least 1".into()));
    }
    let b = corpus.vocab_size();
    let totals = corpus.word_totals();
    let n = corpus.total_tokens() as f64;
    let empirical: Vec<f64> = totals.iter().map(|&t| t as f64 / n).collect();

    let draws: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let weights = mixture::normalize(draws);
    let mut log_densities = Vec::with_capacity(k * b);
    for _ in 0..k {
        let noisy: Vec<f64> = empirical.iter().map(|&p| p * rng.sample::<f64, _>(Exp1)).collect();
        let f = if noisy.iter().sum::<f64>() > 0.0 {
            water_fill_project(&noisy, epsilon)?
        } else {
            vec![1.0 / b as f64; b]
        };
        log_densities.extend(f.iter().map(|p| p.ln()));
    }
    Ok(MixtureModel::from_log_parts(weights, log_densities, b, epsilon)?)
}

/// `short_iters` EM iterations from a random start seeded by `seed`.
pub fn short_em(corpus: &Corpus, k: usize, seed: u64, config: &EmConfig) -> Result<FitResult> {
    let epsilon = config.floor.resolve(corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = random_init(corpus, k, epsilon, &mut rng)?;
    let seg = iterate(corpus, init, config.short_iters, config.rel_tol, 0)?;
    Ok(FitResult {
        k_initial: k,
        k_final: k,
        iterations: seg.trace.len() - 1,
        model: seg.model,
        loglik_trace: seg.trace,
        annihilation_events: Vec::new(),
        seed,
        converged: seg.converged,
        eta_effective: seg.eta,
    })
}

/// Drops every component with weight below `1 / (divisor · K)` and
/// renormalizes. Returns `None` when nothing falls below the threshold.
pub fn annihilate(model: &MixtureModel, divisor: f64) -> Result<Option<(MixtureModel, Vec<usize>)>> {
    let k = model.num_components();
    let threshold = 1.0 / (divisor * k as f64);
    let (keep, removed): (Vec<usize>, Vec<usize>) = (0..k).partition(|&i| model.weights()[i] >= threshold);
    if removed.is_empty() {
        return Ok(None);
    }
    if keep.is_empty() {
        return Err(EmError::Degenerate);
    }
    Ok(Some((model.retain_components(&keep)?, removed)))
}

/// Multi-start EM with component annihilation, starting from `k_max`
/// components.
pub fn robust_em(corpus: &Corpus, k_max: usize, config: &EmConfig) -> Result<FitResult> {
    config.validate()?;
    if k_max == 0 {
        return Err(EmError::Config("k_max must be at least 1".into()));
    }
    let starts: Vec<FitResult> = (0..config.n_starts as u64)
        .into_par_iter()
        .map(|i| short_em(corpus, k_max, config.seed.wrapping_add(i), config))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, run) in starts.iter().enumerate() {
        if run.loglik() > starts[best].loglik() {
            best = i;
        }
    }
    let winner = starts.into_iter().nth(best).expect("n_starts >= 1");

    let mut model = winner.model;
    let mut trace = winner.loglik_trace;
    let mut iterations = winner.iterations;
    let mut converged = winner.converged;
    let mut eta = winner.eta_effective;
    let mut events = Vec::new();
    let mut needs_run = !converged;
    loop {
        if let Some((survivors, removed)) = annihilate(&model, config.annihilation_divisor)? {
            log::debug!(
                "annihilated {} of {} components after {iterations} iterations",
                removed.len(),
                model.num_components()
            );
            events.push(AnnihilationEvent {
                trace_index: trace.len(),
                iteration: iterations,
                removed,
                k_before: model.num_components(),
                k_after: survivors.num_components(),
            });
            model = survivors;
            needs_run = true;
        }
        if !needs_run {
            break;
        }
        let after_removal = events.last().is_some_and(|e| e.trace_index == trace.len());
        let seg = iterate(corpus, model, config.max_iters, config.rel_tol, iterations)?;
        iterations += seg.trace.len() - 1;
        // without a removal the first value repeats the previous one
        let skip = usize::from(!after_removal);
        trace.extend_from_slice(&seg.trace[skip..]);
        model = seg.model;
        converged = seg.converged;
        eta = seg.eta;
        needs_run = false;
    }

    Ok(FitResult {
        k_initial: k_max,
        k_final: model.num_components(),
        model,
        loglik_trace: trace,
        annihilation_events: events,
        seed: config.seed.wrapping_add(best as u64),
        converged,
        eta_effective: eta,
        iterations,
    })
}
