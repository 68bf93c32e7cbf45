//! End-to-end training of every artifact from a pairs corpus and ranker triples.

use std::collections::HashMap;

use crate::cdssm::{train_cdssm, CdssmConfig, CdssmModel, TrainReport};
use crate::corpus::{ConversationTriple, MrPair, Utterance};
use crate::error::Result;
use crate::eval::System;
use crate::index::InvertedIndex;
use crate::ranker::{build_training_set, train_mart, MartConfig, MartEnsemble, TrainingSample};

pub const NEGATIVES_PER_POSITIVE: usize = 2;

pub struct Artifacts {
    pub index: InvertedIndex,
    pub model: CdssmModel,
    pub cdssm_report: TrainReport,
    /// One ensemble per ranking system that needs one.
    pub ensembles: HashMap<System, MartEnsemble>,
}

/// Responses of every triple, the pool ranker negatives are drawn from.
pub fn response_pool(triples: &[ConversationTriple]) -> Vec<Utterance> {
    triples.iter().map(|t| t.response.clone()).collect()
}

/// Trains an ensemble for `system` from already featurized samples.
pub fn train_system(samples: &[TrainingSample], system: System, base: &MartConfig) -> Result<Option<MartEnsemble>> {
    let Some(features) = system.feature_subset() else {
        return Ok(None);
    };
    let cfg = MartConfig {
        features,
        ..base.clone()
    };
    Ok(Some(train_mart(samples, &cfg)?.0))
}

pub fn train_all(
    pairs: &[MrPair],
    triples: &[ConversationTriple],
    cdssm: &CdssmConfig,
    mart: &MartConfig,
    systems: &[System],
    seed: u64,
) -> Result<Artifacts> {
    let index = InvertedIndex::build(pairs.to_vec())?;
    let (model, cdssm_report) = train_cdssm(pairs, cdssm)?;
    let pool = response_pool(triples);
    let samples = build_training_set(&model, triples, &pool, NEGATIVES_PER_POSITIVE, seed)?;
    let mut ensembles = HashMap::new();
    for &sys in systems {
        if let Some(ens) = train_system(&samples, sys, mart)? {
            ensembles.insert(sys, ens);
        }
    }
    Ok(Artifacts {
        index,
        model,
        cdssm_report,
        ensembles,
    })
}
