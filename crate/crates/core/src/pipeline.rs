//! End-to-end runs shared by the command line and the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::corpus::QARecord;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::policy::{encode_all, init_params, EncodedRecord, ModelDims, PolicyParams, Vocab};
use crate::reward::reward_registry;
use crate::trainer::{train_ppo, train_sft, PpoHistory, SftHistory};

/// Freshly initialized parameters and the splits encoded against their vocabulary.
pub struct Prepared {
    pub init: PolicyParams,
    pub train: Vec<EncodedRecord>,
    pub dev: Vec<EncodedRecord>,
    pub test: Vec<EncodedRecord>,
}

pub fn prepare(train: &[QARecord], dev: &[QARecord], test: &[QARecord], dims: ModelDims, seed: u64) -> Result<Prepared> {
    let vocab = Vocab::build(train);
    let init = init_params(&mut ChaCha8Rng::seed_from_u64(seed), dims, vocab)?;
    Ok(Prepared {
        train: encode_all(train, &init)?,
        dev: encode_all(dev, &init)?,
        test: encode_all(test, &init)?,
        init,
    })
}

pub struct TwoStage {
    pub sft: PolicyParams,
    pub sft_history: SftHistory,
    pub ppo: PolicyParams,
    pub ppo_history: PpoHistory,
    pub sft_test: Metrics,
    pub ppo_test: Metrics,
}

/// Supervised stage followed by PPO with `reward_kind`.
pub fn two_stage(prepared: &Prepared, config: &RunConfig, reward_kind: &str) -> Result<TwoStage> {
    let (sft, sft_history) = train_sft(prepared.init.clone(), &prepared.train, &prepared.dev, &config.sft)?;
    let (ppo, ppo_history) = ppo_stage(&sft, prepared, config, reward_kind)?;
    Ok(TwoStage {
        sft_test: evaluate(&prepared.test, &sft)?,
        ppo_test: evaluate(&prepared.test, &ppo)?,
        sft,
        sft_history,
        ppo,
        ppo_history,
    })
}

pub fn ppo_stage(
    sft: &PolicyParams,
    prepared: &Prepared,
    config: &RunConfig,
    reward_kind: &str,
) -> Result<(PolicyParams, PpoHistory)> {
    let strategy = reward_registry().build(reward_kind, &config.reward)?;
    let mut ppo = config.ppo.clone();
    ppo.reward_kind = reward_kind.to_string();
    train_ppo(sft.clone(), &prepared.train, &prepared.dev, &ppo, strategy.as_ref())
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub temporal_fusion: bool,
    pub reward_kind: String,
    pub test_em: f64,
    pub test_f1: f64,
}

/// The grid {temporal fusion on, off} x {contrastive, exact_match}.
pub fn run_ablation(train: &[QARecord], dev: &[QARecord], test: &[QARecord], config: &RunConfig) -> Result<Vec<AblationCell>> {
    let mut cells = Vec::new();
    for temporal_fusion in [true, false] {
        let dims = ModelDims {
            temporal_fusion,
            ..config.features
        };
        let prepared = prepare(train, dev, test, dims, config.seed)?;
        let (sft, _) = train_sft(prepared.init.clone(), &prepared.train, &prepared.dev, &config.sft)?;
        for kind in ["contrastive", "exact_match"] {
            let (ppo, _) = ppo_stage(&sft, &prepared, config, kind)?;
            let m = evaluate(&prepared.test, &ppo)?;
            cells.push(AblationCell {
                temporal_fusion,
                reward_kind: kind.to_string(),
                test_em: m.em,
                test_f1: m.f1,
            });
        }
    }
    Ok(cells)
}

pub fn ablation_csv(cells: &[AblationCell]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Training(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn ablation_markdown(cells: &[AblationCell]) -> String {
    let mut out = String::from("| temporal fusion | reward | EM | F1 |\n|---|---|---|---|\n");
    for c in cells {
        out.push_str(&format!(
            "| {} | {} | {:.1} | {:.1} |\n",
            if c.temporal_fusion { "on" } else { "off" },
            c.reward_kind,
            100.0 * c.test_em,
            100.0 * c.test_f1
        ));
    }
    out
}
