//! Plot-ready tables describing a fitted model on a corpus.

use std::collections::BTreeMap;

use multimix::em::e_step;
use multimix::mixture::map_assign;
use multimix::{Corpus, MixtureModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    pub cluster: usize,
    pub weight: f64,
    pub rank: usize,
    pub word: String,
    pub probability: f64,
}

pub const TOPIC_HEADER: [&str; 5] = ["cluster", "weight", "rank", "word", "probability"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRow {
    pub year: i32,
    pub cluster: usize,
    pub mean_posterior: f64,
}

pub const EVOLUTION_HEADER: [&str; 3] = ["year", "cluster", "mean_posterior"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub doc_id: u64,
    pub cluster: usize,
}

pub const ASSIGNMENT_HEADER: [&str; 2] = ["doc_id", "cluster"];

#[derive(Debug, Clone)]
pub struct TopicReport {
    pub topics: Vec<TopicRow>,
    /// Empty when no document has a year.
    pub evolution: Vec<EvolutionRow>,
    pub assignments: Vec<AssignmentRow>,
    pub docs_without_year: usize,
    pub years: usize,
}

/// Top-`top_m` words per cluster (descending, ties to the lower word
/// index), MAP labels, and per-year unweighted means of the posterior
/// responsibilities.
pub fn build(
    corpus: &Corpus,
    model: &MixtureModel,
    years: Option<&BTreeMap<u64, i32>>,
    top_m: usize,
) -> Result<TopicReport> {
    if model.num_words() != corpus.vocab_size() {
        return Err(CliError::Data(format!(
            "model has B = {} words but the corpus has {}",
            model.num_words(),
            corpus.vocab_size()
        )));
    }
    let k = model.num_components();
    let mut topics = Vec::with_capacity(k * top_m);
    for cluster in 0..k {
        let density = model.density_row(cluster);
        let mut order: Vec<usize> = (0..density.len()).collect();
        order.sort_by(|&a, &b| density[b].total_cmp(&density[a]));
        for (rank, &w) in order.iter().take(top_m).enumerate() {
            topics.push(TopicRow {
                cluster,
                weight: model.weights()[cluster],
                rank: rank + 1,
                word: corpus.vocab().word(w).unwrap_or_default().to_string(),
                probability: density[w],
            });
        }
    }

    let labels = map_assign(corpus, model)?.labels;
    let assignments = corpus
        .doc_ids()
        .iter()
        .zip(&labels)
        .map(|(&doc_id, &cluster)| AssignmentRow { doc_id, cluster })
        .collect();

    let mut evolution = Vec::new();
    let mut docs_without_year = 0;
    let mut per_year: BTreeMap<i32, (usize, Vec<f64>)> = BTreeMap::new();
    if let Some(years) = years {
        let (resp, _) = e_step(corpus, model)?;
        for (l, id) in corpus.doc_ids().iter().enumerate() {
            match years.get(id) {
                Some(&year) => {
                    let slot = per_year.entry(year).or_insert_with(|| (0, vec![0.0; k]));
                    slot.0 += 1;
                    for (acc, r) in slot.1.iter_mut().zip(resp.row(l)) {
                        *acc += r;
                    }
                }
                None => docs_without_year += 1,
            }
        }
        for (&year, (count, sums)) in &per_year {
            for (cluster, s) in sums.iter().enumerate() {
                evolution.push(EvolutionRow {
                    year,
                    cluster,
                    mean_posterior: s / *count as f64,
                });
            }
        }
    } else {
        docs_without_year = corpus.num_docs();
    }

    Ok(TopicReport {
        topics,
        evolution,
        assignments,
        docs_without_year,
        years: per_year.len(),
    })
}
