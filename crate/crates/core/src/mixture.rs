//! Floor-constrained multinomial mixtures.
//!
//! A model holds `K` weights `π` and `K` categorical densities over `B`
//! words, each entry bounded below by a floor `ε`. Densities are kept in
//! log space; a document's joint log-probability under component `k` is
//!
//! ```text
//! a_k = log π_k + Σ_b c_b · log f_k(b)
//! ```
//!
//! and its log-density is the log-sum-exp of the `a_k`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document};

pub const MODEL_FORMAT_VERSION: u32 = 1;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const DENSITY_SUM_TOL: f64 = 1e-10;
const FLOOR_SLACK: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("word index {index} out of range for vocabulary of {size}")]
    Index { index: usize, size: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("KL divergence is infinite: s[{index}] > 0 but t[{index}] = 0")]
    InfiniteDivergence { index: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MixtureError>;

/// Log-sum-exp that ignores `-∞` terms.
///
/// Terms are accumulated in sorted order so the result is independent of the
/// order of `values` (bit-for-bit).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut shifted: Vec<f64> = values
        .iter()
        .filter(|v| **v > f64::NEG_INFINITY)
        .map(|&v| v - max)
        .collect();
    shifted.sort_by(f64::total_cmp);
    max + shifted.iter().map(|d| d.exp()).sum::<f64>().ln()
}

/// Mixture of `K` floor-constrained categorical densities over `B` words.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Vec<f64>,
    log_densities: Vec<f64>,
    num_words: usize,
    epsilon: f64,
}

impl MixtureModel {
    /// Builds a model from weights and probability-space densities.
    pub fn new(weights: Vec<f64>, densities: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        let num_words = densities.first().map_or(0, Vec::len);
        if densities.iter().any(|row| row.len() != num_words) {
            return Err(MixtureError::Shape("density rows have different lengths".into()));
        }
        let log_densities = densities.iter().flatten().map(|p| p.ln()).collect();
        Self::from_log_parts(weights, log_densities, num_words, epsilon)
    }

    /// Builds a model from weights and a row-major `K×B` matrix of log-densities.
    pub fn from_log_parts(weights: Vec<f64>, log_densities: Vec<f64>, num_words: usize, epsilon: f64) -> Result<Self> {
        let model = Self {
            weights,
            log_densities,
            num_words,
            epsilon,
        };
        model.validate()?;
        let (k, b) = (model.num_components(), model.num_words);
        if b + 1 < 2 * k {
            log::warn!(
                "B = {b} < 2K - 1 = {}: the mixture is not guaranteed identifiable",
                2 * k - 1
            );
        }
        Ok(model)
    }

    /// Checks the simplex and floor invariants.
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        let b = self.num_words;
        if k == 0 {
            return Err(MixtureError::Invalid("model has no components".into()));
        }
        if b == 0 {
            return Err(MixtureError::Invalid("model has an empty vocabulary".into()));
        }
        if self.log_densities.len() != k * b {
            return Err(MixtureError::Shape(format!(
                "expected {k}×{b} = {} log-densities, got {}",
                k * b,
                self.log_densities.len()
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon * b as f64 <= 1.0 + 1e-12) {
            return Err(MixtureError::Invalid(format!(
                "floor {} infeasible for B = {b}",
                self.epsilon
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(MixtureError::Invalid(format!("weight {w} is not a probability")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MixtureError::Invalid(format!("weights sum to {total}")));
        }
        for kk in 0..k {
            let row = self.log_density_row(kk);
            let mut sum = 0.0;
            for (w, &lf) in row.iter().enumerate() {
                let p = lf.exp();
                if !lf.is_finite() || p < self.epsilon - FLOOR_SLACK {
                    return Err(MixtureError::Invalid(format!(
                        "density[{kk}][{w}] = {p} violates floor {}",
                        self.epsilon
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > DENSITY_SUM_TOL {
                return Err(MixtureError::Invalid(format!("density {kk} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `τ = −log ε`.
    pub fn tau(&self) -> f64 {
        -self.epsilon.ln()
    }

    pub fn log_density_row(&self, k: usize) -> &[f64] {
        &self.log_densities[k * self.num_words..(k + 1) * self.num_words]
    }

    pub fn density_row(&self, k: usize) -> Vec<f64> {
        self.log_density_row(k).iter().map(|v| v.exp()).collect()
    }

    pub fn log_densities(&self) -> &[f64] {
        &self.log_densities
    }

    /// Reorders components: new component `i` is old component `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.num_components();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(MixtureError::Shape(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        Ok(Self {
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            log_densities: perm
                .iter()
                .flat_map(|&p| self.log_density_row(p).iter().copied())
                .collect(),
            num_words: self.num_words,
            epsilon: self.epsilon,
        })
    }

    /// Keeps only the listed components and renormalizes their weights.
    pub fn retain_components(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(MixtureError::Invalid("cannot drop every component".into()));
        }
        let total: f64 = keep.iter().map(|&k| self.weights[k]).sum();
        if !(total > 0.0) {
            return Err(MixtureError::Invalid("retained components carry no weight".into()));
        }
        let weights = normalize(keep.iter().map(|&k| self.weights[k]).collect());
        let log_densities = keep
            .iter()
            .flat_map(|&k| self.log_density_row(k).iter().copied())
            .collect();
        Self::from_log_parts(weights, log_densities, self.num_words, self.epsilon)
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if corpus.vocab_size() != self.num_words {
            return Err(MixtureError::Shape(format!(
                "corpus has B = {} but model has B = {}",
                corpus.vocab_size(),
                self.num_words
            )));
        }
        Ok(())
    }
}

/// Divides by the sum. Used wherever weights are renormalized.
pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Per-component joint log-probabilities for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocLogJoint {
    pub per_component: Vec<f64>,
    pub doc_log_density: f64,
}

impl DocLogJoint {
    /// Lowest index attaining the maximum `a_k`.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &a) in self.per_component.iter().enumerate() {
            if a > self.per_component[best] {
                best = k;
            }
        }
        best
    }
}

pub fn doc_log_joint(doc: &Document, model: &MixtureModel) -> Result<DocLogJoint> {
    let b = model.num_words;
    if let Some(&(w, _)) = doc.terms().iter().find(|&&(w, _)| w as usize >= b) {
        return Err(MixtureError::Index {
            index: w as usize,
            size: b,
        });
    }
    let per_component: Vec<f64> = (0..model.num_components())
        .map(|k| {
            let pi = model.weights[k];
            if pi == 0.0 {
                return f64::NEG_INFINITY;
            }
            let row = model.log_density_row(k);
            let data: f64 = doc.terms().iter().map(|&(w, c)| f64::from(c) * row[w as usize]).sum();
            pi.ln() + data
        })
        .collect();
    let doc_log_density = log_sum_exp(&per_component);
    Ok(DocLogJoint {
        per_component,
        doc_log_density,
    })
}

/// Joint log-probabilities for every document, in document order.
pub fn corpus_log_joints(corpus: &Corpus, model: &MixtureModel) -> Result<Vec<DocLogJoint>> {
    model.check_corpus(corpus)?;
    corpus.docs().par_iter().map(|doc| doc_log_joint(doc, model)).collect()
}

/// Total log-likelihood `Σ_l log P(x_l)`, the negated empirical contrast.
///
/// Per-document values are computed in parallel and summed in document order.
pub fn log_likelihood(corpus: &Corpus, model: &MixtureModel) -> Result<f64> {
    Ok(corpus_log_joints(corpus, model)?
        .iter()
        .map(|j| j.doc_log_density)
        .sum())
}

/// MAP cluster labels; every label is `< K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

pub fn map_assign(corpus: &Corpus, model: &MixtureModel) -> Result<Assignment> {
    Ok(Assignment {
        labels: corpus_log_joints(corpus, model)?
            .iter()
            .map(DocLogJoint::argmax)
            .collect(),
    })
}

/// `Σ_b s_b log(s_b / t_b)`, with `0 log 0 = 0`.
pub fn kl_categorical(s: &[f64], t: &[f64]) -> Result<f64> {
    if s.len() != t.len() {
        return Err(MixtureError::Shape(format!(
            "KL between vectors of length {} and {}",
            s.len(),
            t.len()
        )));
    }
    let mut kl = 0.0;
    for (b, (&sb, &tb)) in s.iter().zip(t).enumerate() {
        if sb <= 0.0 {
            continue;
        }
        if tb <= 0.0 {
            return Err(MixtureError::InfiniteDivergence { index: b });
        }
        kl += sb * (sb / tb).ln();
    }
    // rounding can leave a tiny negative value when s ≈ t
    Ok(kl.max(0.0))
}

/// `Σ_l (n_l / n) KL(s_l, f_{label_l})`.
pub fn weighted_kl_risk(
    true_densities: &[Vec<f64>],
    model: &MixtureModel,
    assignment: &Assignment,
    doc_lengths: &[u64],
    total_tokens: u64,
) -> Result<f64> {
    let l = true_densities.len();
    if assignment.labels.len() != l || doc_lengths.len() != l {
        return Err(MixtureError::Shape(format!(
            "{l} densities, {} labels, {} lengths",
            assignment.labels.len(),
            doc_lengths.len()
        )));
    }
    if total_tokens == 0 {
        return Err(MixtureError::Shape("total token count is zero".into()));
    }
    let rows: Vec<Vec<f64>> = (0..model.num_components()).map(|k| model.density_row(k)).collect();
    let n = total_tokens as f64;
    let mut risk = 0.0;
    for ((s, &label), &len) in true_densities.iter().zip(&assignment.labels).zip(doc_lengths) {
        let row = rows
            .get(label)
            .ok_or_else(|| MixtureError::Shape(format!("label {label} >= K = {}", model.num_components())))?;
        risk += (len as f64 / n) * kl_categorical(s, row)?;
    }
    Ok(risk)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    k: usize,
    b: usize,
    epsilon_n: f64,
    pi: Vec<f64>,
    log_f: Vec<Vec<f64>>,
}

/// Writes the model as versioned JSON `{K, B, epsilon_n, pi, log_f}`.
pub fn save_model(model: &MixtureModel, out: impl Write) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        k: model.num_components(),
        b: model.num_words,
        epsilon_n: model.epsilon,
        pi: model.weights.clone(),
        log_f: (0..model.num_components())
            .map(|k| model.log_density_row(k).to_vec())
            .collect(),
    };
    serde_json::to_writer_pretty(out, &file).map_err(|e| MixtureError::Format(e.to_string()))
}

pub fn load_model(input: impl Read) -> Result<MixtureModel> {
    let file: ModelFile = serde_json::from_reader(input).map_err(|e| MixtureError::Format(e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(MixtureError::Format(format!(
            "unsupported model format version {}",
            file.format_version
        )));
    }
    if file.pi.len() != file.k || file.log_f.len() != file.k {
        return Err(MixtureError::Format("K does not match pi/log_f lengths".into()));
    }
    if file.log_f.iter().any(|row| row.len() != file.b) {
        return Err(MixtureError::Format("B does not match log_f row length".into()));
    }
    MixtureModel::from_log_parts(
        file.pi,
        file.log_f.into_iter().flatten().collect(),
        file.b,
        file.epsilon_n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_bag_of_words;

    fn toy_corpus() -> Corpus {
        parse_bag_of_words("2\n4\n3\n1 1 4\n1 3 1\n2 2 2\n".as_bytes(), "a\nb\nc\nd\n".as_bytes()).unwrap()
    }

    fn uniform(k: usize, b: usize) -> MixtureModel {
        MixtureModel::new(vec![1.0 / k as f64; k], vec![vec![1.0 / b as f64; b]; k], 0.01).unwrap()
    }

    #[test]
    fn single_component_is_count_weighted_sum() {
        let m = MixtureModel::new(vec![1.0], vec![vec![0.1, 0.2, 0.3, 0.4]], 0.05).unwrap();
        let doc = Document::from_pairs([(0, 2), (3, 1)]).unwrap();
        let j = doc_log_joint(&doc, &m).unwrap();
        let expected = 2.0 * 0.1f64.ln() + 0.4f64.ln();
        assert_eq!(j.per_component[0], expected);
        assert!((j.doc_log_density - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_components_add_log_two() {
        let row = vec![0.1, 0.2, 0.3, 0.4];
        let m = MixtureModel::new(vec![0.5, 0.5], vec![row.clone(), row], 0.05).unwrap();
        let doc = Document::from_pairs([(1, 3), (2, 1)]).unwrap();
        let j = doc_log_joint(&doc, &m).unwrap();
        assert_eq!(j.per_component[0], j.per_component[1]);
        let data = 3.0 * 0.2f64.ln() + 0.3f64.ln();
        assert!((j.doc_log_density - data).abs() < 1e-14);
    }

    #[test]
    fn uniform_model_loglik() {
        let ll = log_likelihood(&toy_corpus(), &uniform(1, 4)).unwrap();
        assert!((ll - 7.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_component_is_skipped() {
        let m = MixtureModel::new(vec![1.0, 0.0], vec![vec![0.25; 4], vec![0.7, 0.1, 0.1, 0.1]], 0.01).unwrap();
        let j = doc_log_joint(toy_corpus().doc(0), &m).unwrap();
        assert_eq!(j.per_component[1], f64::NEG_INFINITY);
        assert!(j.doc_log_density.is_finite());
        let ll = log_likelihood(&toy_corpus(), &m).unwrap();
        assert!((ll - 7.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn index_and_shape_errors() {
        let m = uniform(2, 3);
        let doc = Document::from_pairs([(5, 1)]).unwrap();
        assert!(matches!(
            doc_log_joint(&doc, &m),
            Err(MixtureError::Index { index: 5, size: 3 })
        ));
        assert!(matches!(log_likelihood(&toy_corpus(), &m), Err(MixtureError::Shape(_))));
    }

    #[test]
    fn map_prefers_higher_joint_and_breaks_ties_low() {
        let m = MixtureModel::new(
            vec![0.5, 0.5],
            vec![vec![0.1, 0.7, 0.1, 0.1], vec![0.7, 0.1, 0.1, 0.1]],
            0.01,
        )
        .unwrap();
        let a = map_assign(&toy_corpus(), &m).unwrap();
        assert_eq!(a.labels, vec![1, 0]);
        let tie = map_assign(&toy_corpus(), &uniform(3, 4)).unwrap();
        assert_eq!(tie.labels, vec![0, 0]);
    }

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_categorical(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap(), 0.0);
        let v = kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            kl_categorical(&[0.5, 0.5], &[1.0, 0.0]),
            Err(MixtureError::InfiniteDivergence { index: 1 })
        ));
        assert!(kl_categorical(&[1.0], &[0.5, 0.5]).is_err());
    }

    // Reference values from 50-digit mpmath summation of s_b (ln s_b - ln t_b).
    #[test]
    fn kl_matches_extended_precision_reference() {
        let s = [
            0.10325642627897644,
            0.04809935342584809,
            0.20755517886682048,
            0.023096835485635167,
            0.17086986457479467,
            0.11660256401070726,
            0.018493377911728,
            0.161799564668467,
            0.011955762702675139,
            0.1382710720743477,
        ];
        let t = [
            0.016215632208230427,
            0.021057332210048643,
            0.09854420292961147,
            0.19193828135554042,
            0.028738313590151846,
            0.051820757206442344,
            0.1456469068416121,
            0.21999293490673888,
            0.13396367357318267,
            0.09208196517844124,
        ];
        let got = kl_categorical(&s, &t).unwrap();
        assert!((got - KL_REFERENCE).abs() <= 1e-12 * KL_REFERENCE, "{got}");
    }
    const KL_REFERENCE: f64 = 0.6751957063752491;

    #[test]
    fn risk_is_zero_for_exact_fit_and_averages_equal_weights() {
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.4, 0.3, 0.2, 0.1]];
        let m = MixtureModel::new(vec![0.5, 0.5], rows.clone(), 0.05).unwrap();
        let a = Assignment { labels: vec![1, 0] };
        let truth = vec![rows[1].clone(), rows[0].clone()];
        assert_eq!(weighted_kl_risk(&truth, &m, &a, &[3, 3], 6).unwrap(), 0.0);

        let u = uniform(1, 4);
        let s1 = vec![0.3, 0.2, 0.25, 0.25];
        let s2 = vec![0.25, 0.25, 0.4, 0.1];
        let r = weighted_kl_risk(
            &[s1.clone(), s2.clone()],
            &u,
            &Assignment { labels: vec![0, 0] },
            &[5, 5],
            10,
        )
        .unwrap();
        let expected = 0.5 * kl_categorical(&s1, &u.density_row(0)).unwrap()
            + 0.5 * kl_categorical(&s2, &u.density_row(0)).unwrap();
        assert!((r - expected).abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_broken_invariants() {
        assert!(MixtureModel::new(vec![0.6, 0.6], vec![vec![0.5, 0.5]; 2], 0.1).is_err());
        assert!(MixtureModel::new(vec![1.0], vec![vec![0.95, 0.05]], 0.1).is_err());
        assert!(MixtureModel::new(vec![1.0], vec![vec![0.5, 0.4]], 0.1).is_err());
        assert!(MixtureModel::new(vec![1.0], vec![vec![0.5, 0.5]], 0.6).is_err());
    }

    #[test]
    fn retain_renormalizes() {
        let m = MixtureModel::new(vec![0.5, 0.3, 0.2], vec![vec![0.5, 0.5]; 3], 0.1).unwrap();
        let r = m.retain_components(&[0, 2]).unwrap();
        assert_eq!(r.num_components(), 2);
        assert!((r.weights()[0] - 0.5 / 0.7).abs() < 1e-15);
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.retain_components(&[]).is_err());
    }

    #[test]
    fn model_round_trip() {
        let m = MixtureModel::new(
            vec![0.25, 0.75],
            vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.4, 0.3, 0.2, 0.1]],
            0.05,
        )
        .unwrap();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        assert_eq!(load_model(buf.as_slice()).unwrap(), m);
        assert!(load_model(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn permuted_rejects_non_permutation() {
        let m = uniform(3, 4);
        assert!(m.permuted(&[0, 0, 1]).is_err());
        assert!(m.permuted(&[2, 0, 1]).is_ok());
    }
}
