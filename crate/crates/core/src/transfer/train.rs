use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss_total, PairedDataset};
use crate::array_sim::{CMatrix, Dataset};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::model::{encode, forward_batch, leaves, train, train_subset, ModelConfig, TrainConfig, TrainOutcome, TransDoaParams};
use crate::rng;
use crate::{DoaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPolicy {
    /// Keep the source head unchanged on the aligned backbone.
    ReuseSourceHead,
    /// After alignment, retrain only the head on the labeled target records.
    FineTuneHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub alpha: f64,
    pub beta: f64,
    pub adam: AdamConfig,
    /// Mini-batches per epoch.
    pub batches: usize,
    pub epochs: usize,
    pub head: HeadPolicy,
    /// Head-only epochs for [`HeadPolicy::FineTuneHead`].
    pub head_epochs: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            alpha: 1.0,
            beta: 1.0,
            adam: AdamConfig::default(),
            batches: 8,
            epochs: 100,
            head: HeadPolicy::ReuseSourceHead,
            head_epochs: 50,
            seed: 0,
        }
    }
}

/// Full-set alignment loss after an epoch; epoch 0 is the source copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferEpoch {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    /// Aligned target parameters (best alignment epoch) with the head
    /// chosen by the policy.
    pub params: TransDoaParams,
    pub history: Vec<TransferEpoch>,
    pub best_epoch: usize,
    pub aborted: Option<String>,
}

/// Flags the head weight and bias only.
pub fn head_mask(params: &TransDoaParams) -> Vec<bool> {
    let n = params.values().len();
    (0..n).map(|i| i + 2 >= n).collect()
}

fn check_pairs(model: &ModelConfig, pairs: &PairedDataset) -> Result<()> {
    let h = &pairs.header;
    if h.elements != model.elements || h.sources != model.sources || h.label_dims != model.label_dims() {
        return Err(DoaError::Dimension(format!(
            "paired set has M={}, K={}; model expects M={}, K={}",
            h.elements, h.sources, model.elements, model.sources
        )));
    }
    if pairs.is_empty() {
        return Err(DoaError::Empty("paired set".into()));
    }
    Ok(())
}

fn features(model: &ModelConfig, params: &TransDoaParams, scms: &[&CMatrix]) -> Result<Vec<Vec<f64>>> {
    Ok(forward_batch(model, params, scms)?.into_iter().map(|o| o.features).collect())
}

/// Aligns a copy of the source backbone so that imperfect-array features
/// match the frozen source's features on the paired ideal SCMs.
pub fn transfer_train(
    model: &ModelConfig,
    source: &TransDoaParams,
    pairs: &PairedDataset,
    tc: &TransferConfig,
) -> Result<TransferOutcome> {
    model.validate()?;
    if !source.matches(model) {
        return Err(DoaError::Dimension("source parameters do not match model config".into()));
    }
    check_pairs(model, pairs)?;
    if tc.alpha < 0.0 || tc.beta < 0.0 || tc.alpha + tc.beta <= 0.0 {
        return Err(DoaError::InvalidArgument(format!("need α, β ≥ 0 with α + β > 0, got {} and {}", tc.alpha, tc.beta)));
    }
    if tc.batches == 0 {
        return Err(DoaError::InvalidArgument("batch count must be positive".into()));
    }

    let ideal: Vec<&CMatrix> = pairs.pairs.iter().map(|p| &p.ideal_scm).collect();
    let target: Vec<&CMatrix> = pairs.pairs.iter().map(|p| &p.target_scm).collect();
    let zs = features(model, source, &ideal)?;
    let alignment = |params: &TransDoaParams| -> Result<f64> {
        loss_total(&zs, &features(model, params, &target)?, tc.alpha, tc.beta)
    };

    let mut params = source.clone();
    let mut outcome = TransferOutcome {
        params: params.clone(),
        history: vec![TransferEpoch { epoch: 0, loss: alignment(&params)? }],
        best_epoch: 0,
        aborted: None,
    };
    let backbone: Vec<bool> = head_mask(&params).iter().map(|h| !h).collect();
    let mut adam = AdamState::new(
        tc.adam,
        params.values().into_iter().zip(&backbone).filter(|(_, &m)| m).map(|(t, _)| t),
    );
    let mut rng = rng::stream(tc.seed, 13);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let batch_size = pairs.len().div_ceil(tc.batches);
    let d = model.embed_dim;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let run = (|| -> Result<f64> {
            for idx in order.chunks(batch_size) {
                let mut tape = Tape::new();
                let p = leaves(&mut tape, &params);
                let scms: Vec<&CMatrix> = idx.iter().map(|&i| target[i]).collect();
                let zt = encode(&mut tape, &p, model, &scms)?;
                let goal = Tensor::matrix(idx.len(), d, idx.iter().flat_map(|&i| zs[i].iter().copied()).collect())?;
                let cos = tape.cosine_rows(zt, goal.clone())?;
                let mse = tape.sq_dist_rows(zt, goal)?;
                let cos = tape.scale(cos, tc.alpha)?;
                let mse = tape.scale(mse, tc.beta)?;
                let loss = tape.add(cos, mse)?;
                let mut grads = tape.backward(loss)?;
                let g: Vec<Tensor> = p
                    .values()
                    .into_iter()
                    .zip(&backbone)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| grads.take(v))
                    .collect();
                if g.iter().any(|t| !t.is_finite()) {
                    return Err(DoaError::Numeric("non-finite alignment gradient".into()));
                }
                let mut refs: Vec<&mut Tensor> =
                    params.values_mut().into_iter().zip(&backbone).filter(|(_, &m)| m).map(|(t, _)| t).collect();
                adam_step(&mut refs, &g, &mut adam)?;
            }
            alignment(&params)
        })();
        let loss = match run {
            Ok(l) => l,
            Err(DoaError::Numeric(msg)) => {
                outcome.aborted = Some(format!("epoch {epoch}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        outcome.history.push(TransferEpoch { epoch, loss });
        if loss < outcome.history[outcome.best_epoch].loss {
            outcome.best_epoch = epoch;
            outcome.params = params.clone();
        }
    }

    if tc.head == HeadPolicy::FineTuneHead && tc.head_epochs > 0 {
        let labeled = pairs.targets();
        let head_tc = TrainConfig {
            epochs: tc.head_epochs,
            batch_size,
            patience: tc.head_epochs,
            adam: tc.adam,
            seed: tc.seed,
        };
        let mask = head_mask(&outcome.params);
        let tuned = train_subset(model, &outcome.params, &labeled, &labeled, &head_tc, Some(&mask), &mut |_| {})?;
        outcome.params = tuned.params;
    }
    Ok(outcome)
}

/// Supervised PIT training starting from the source weights.
pub fn finetune_baseline(
    model: &ModelConfig,
    source: &TransDoaParams,
    labeled: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    train(model, source, labeled, val, tc)
}

/// Supervised PIT training from a fresh initialization seeded with `tc.seed`.
pub fn direct_train_baseline(model: &ModelConfig, labeled: &Dataset, val: &Dataset, tc: &TrainConfig) -> Result<TrainOutcome> {
    train(model, &TransDoaParams::init(model, tc.seed), labeled, val, tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::{generate_dataset, ArrayGeometry, DoaSpec, Fov, ImperfectionSpec, SignalScenario};
    use crate::model::OutputMode;
    use crate::scenario::ImperfectionKnobs;
    use crate::transfer::make_pairs;

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 16, depth: 1, heads: 2, mlp_ratio: 4, sources: 2, elements: 4, output: OutputMode::OneD }
    }

    fn scenario() -> SignalScenario {
        SignalScenario {
            geometry: ArrayGeometry::ula(4, 0.5).unwrap(),
            sources: 2,
            snr_db: 10.0,
            snapshots: 20,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        }
    }

    fn pairs(rho: f64, n: usize) -> PairedDataset {
        let sc = scenario();
        let imp = ImperfectionKnobs::with_rho(rho).build(&sc.geometry).unwrap();
        let ds = generate_dataset(&sc, &imp, n, 5).unwrap();
        make_pairs(&ds, &sc, 5).unwrap()
    }

    #[test]
    fn zero_epochs_copy_the_source() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 1);
        let tc = TransferConfig { epochs: 0, ..TransferConfig::default() };
        let out = transfer_train(&c, &src, &pairs(1.0, 8), &tc).unwrap();
        assert!(out.params.bitwise_eq(&src));
    }

    #[test]
    fn identical_domains_start_aligned() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 1);
        let tc = TransferConfig { epochs: 3, ..TransferConfig::default() };
        let out = transfer_train(&c, &src, &pairs(0.0, 8), &tc).unwrap();
        assert_eq!(out.history[0].loss, 0.0);
        assert_eq!(out.best_epoch, 0);
        assert!(out.params.bitwise_eq(&src));
    }

    #[test]
    fn alignment_reduces_loss_and_keeps_source() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 2);
        let snapshot = src.clone();
        let tc = TransferConfig { epochs: 10, adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() }, ..TransferConfig::default() };
        let out = transfer_train(&c, &src, &pairs(1.0, 32), &tc).unwrap();
        assert!(src.bitwise_eq(&snapshot));
        assert!(out.history.last().unwrap().loss < out.history[0].loss);
        // head untouched under the default policy
        let (a, b) = (src.values(), out.params.values());
        let n = a.len();
        assert!(a[n - 1].bitwise_eq(b[n - 1]) && a[n - 2].bitwise_eq(b[n - 2]));
    }

    #[test]
    fn finetune_head_changes_only_head_after_alignment() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 2);
        let p = pairs(1.0, 16);
        let base = TransferConfig { epochs: 2, adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() }, ..TransferConfig::default() };
        let reuse = transfer_train(&c, &src, &p, &base).unwrap();
        let tuned = transfer_train(&c, &src, &p, &TransferConfig { head: HeadPolicy::FineTuneHead, head_epochs: 3, ..base }).unwrap();
        let (a, b) = (reuse.params.values(), tuned.params.values());
        let n = a.len();
        for i in 0..n - 2 {
            assert!(a[i].bitwise_eq(b[i]));
        }
        assert!(!a[n - 1].bitwise_eq(b[n - 1]));
    }

    #[test]
    fn rejects_bad_weights_and_dims() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 2);
        let p = pairs(1.0, 4);
        let tc = TransferConfig { alpha: 0.0, beta: 0.0, ..TransferConfig::default() };
        assert!(transfer_train(&c, &src, &p, &tc).is_err());
        let other = ModelConfig { sources: 3, ..c };
        let err = transfer_train(&other, &TransDoaParams::init(&other, 1), &p, &TransferConfig::default()).unwrap_err();
        assert!(err.is_mismatch());
    }

    #[test]
    fn baselines_zero_epochs() {
        let c = tiny();
        let src = TransDoaParams::init(&c, 2);
        let sc = scenario();
        let ds = generate_dataset(&sc, &ImperfectionSpec::ideal(&sc.geometry), 4, 1).unwrap();
        let tc = TrainConfig { epochs: 0, seed: 8, ..TrainConfig::default() };
        assert!(finetune_baseline(&c, &src, &ds, &ds, &tc).unwrap().params.bitwise_eq(&src));
        let direct = direct_train_baseline(&c, &ds, &ds, &tc).unwrap();
        assert!(direct.params.bitwise_eq(&TransDoaParams::init(&c, 8)));
    }
}
