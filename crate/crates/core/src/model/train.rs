use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{encode, head, leaves};
use super::{forward_batch, pit_loss_1d, pit_loss_2d, pit_targets, ModelConfig, OutputMode, TransDoaParams};
use crate::array_sim::{CMatrix, Dataset, DoaLabel};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::rng;
use crate::{DoaError, Result};

/// Rows per gradient chunk; chunk gradients are summed in chunk order.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 500, batch_size: 256, patience: 30, adam: AdamConfig::default(), seed: 0 }
    }
}

/// Losses after an epoch. Epoch 0 describes the starting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub params: TransDoaParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Set when a non-finite value ended training; `params` is still the
    /// best checkpoint seen before the failure.
    pub aborted: Option<String>,
}

impl TrainOutcome {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch].val_loss
    }
}

pub(crate) fn check_dataset(config: &ModelConfig, ds: &Dataset, what: &str) -> Result<()> {
    let h = &ds.header;
    if h.elements != config.elements || h.sources != config.sources || h.label_dims != config.label_dims() {
        return Err(DoaError::Dimension(format!(
            "{what} set has M={}, K={}, {}D labels; model expects M={}, K={}, {}D",
            h.elements,
            h.sources,
            h.label_dims,
            config.elements,
            config.sources,
            config.label_dims()
        )));
    }
    if ds.is_empty() {
        return Err(DoaError::Empty(format!("{what} set")));
    }
    Ok(())
}

fn sample_loss(label: &DoaLabel, pred: &[f64], mode: OutputMode) -> Result<f64> {
    let k = label.sources();
    match (mode, &label.phis) {
        (OutputMode::TwoD, Some(phis)) => pit_loss_2d(&label.thetas, phis, &pred[..k], &pred[k..]),
        _ => pit_loss_1d(&label.thetas, pred),
    }
}

/// Mean PIT loss of `params` over a dataset.
pub fn evaluate_loss(config: &ModelConfig, params: &TransDoaParams, ds: &Dataset) -> Result<f64> {
    check_dataset(config, ds, "evaluation")?;
    let scms: Vec<&CMatrix> = ds.samples.iter().map(|s| &s.scm).collect();
    let out = forward_batch(config, params, &scms)?;
    let mut total = 0.0;
    for (s, o) in ds.samples.iter().zip(out) {
        total += sample_loss(&s.label, &o.estimate.into_label().flat(), config.output)?;
    }
    Ok(total / ds.len() as f64)
}

/// Gradient of `weight · mean PIT loss` over a chunk, plus the unweighted loss sum.
fn chunk_gradient(
    config: &ModelConfig,
    params: &TransDoaParams,
    samples: &[&crate::array_sim::Sample],
    weight: f64,
) -> Result<(Vec<Tensor>, f64)> {
    let mut tape = Tape::new();
    let p = leaves(&mut tape, params);
    let scms: Vec<&CMatrix> = samples.iter().map(|s| &s.scm).collect();
    let z = encode(&mut tape, &p, config, &scms)?;
    let y = head(&mut tape, &p, z)?;
    let pred = tape.value(y).clone();
    let mut target = Vec::with_capacity(pred.len());
    for (r, s) in samples.iter().enumerate() {
        target.extend(pit_targets(&s.label, pred.row_slice(r), config.output)?);
    }
    let target = Tensor::matrix(pred.rows(), pred.cols(), target)?;
    let loss = tape.row_rmse(y, target)?;
    let loss_sum = tape.value(loss).item() * samples.len() as f64;
    let scaled = tape.scale(loss, weight)?;
    let mut grads = tape.backward(scaled)?;
    Ok((p.values().into_iter().map(|&v| grads.take(v)).collect(), loss_sum))
}

/// Gradient of the mean PIT loss over a batch, and that mean loss.
pub(crate) fn batch_gradient(
    config: &ModelConfig,
    params: &TransDoaParams,
    batch: &[&crate::array_sim::Sample],
) -> Result<(Vec<Tensor>, f64)> {
    let weight_per_row = 1.0 / batch.len() as f64;
    let parts: Vec<Result<(Vec<Tensor>, f64)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|c| chunk_gradient(config, params, c, c.len() as f64 * weight_per_row))
        .collect();
    let mut total: Option<Vec<Tensor>> = None;
    let mut loss = 0.0;
    for part in parts {
        let (g, l) = part?;
        loss += l;
        match &mut total {
            None => total = Some(g),
            Some(t) => t.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
        }
    }
    let grads = total.ok_or_else(|| DoaError::Empty("training batch".into()))?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(DoaError::Numeric("non-finite gradient".into()));
    }
    Ok((grads, loss * weight_per_row))
}

/// Mean PIT loss over a dataset and its gradient with respect to every parameter.
pub fn loss_gradient(config: &ModelConfig, params: &TransDoaParams, ds: &Dataset) -> Result<(f64, TransDoaParams)> {
    check_dataset(config, ds, "gradient")?;
    let batch: Vec<&crate::array_sim::Sample> = ds.samples.iter().collect();
    let (grads, loss) = batch_gradient(config, params, &batch)?;
    let net = TransDoaParams::from_values(config.depth, grads)
        .ok_or_else(|| DoaError::Contract("gradient count does not match the parameter set".into()))?;
    Ok((loss, net))
}

/// Supervised PIT training with early stopping on validation loss.
pub fn train(
    config: &ModelConfig,
    init: &TransDoaParams,
    train_set: &Dataset,
    val_set: &Dataset,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    train_subset(config, init, train_set, val_set, tc, None, &mut |_| {})
}

/// [`train`] restricted to the parameter tensors flagged in `trainable`
/// (canonical order; `None` trains everything), reporting each epoch to
/// `on_epoch` as it finishes.
pub fn train_subset(
    config: &ModelConfig,
    init: &TransDoaParams,
    train_set: &Dataset,
    val_set: &Dataset,
    tc: &TrainConfig,
    trainable: Option<&[bool]>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if !init.matches(config) {
        return Err(DoaError::Dimension("initial parameters do not match model config".into()));
    }
    check_dataset(config, train_set, "training")?;
    check_dataset(config, val_set, "validation")?;
    if tc.batch_size == 0 {
        return Err(DoaError::InvalidArgument("batch size must be positive".into()));
    }
    let n_tensors = init.values().len();
    let mask: Vec<bool> = match trainable {
        Some(m) if m.len() != n_tensors => {
            return Err(DoaError::Dimension(format!("mask has {} entries for {n_tensors} tensors", m.len())))
        }
        Some(m) => m.to_vec(),
        None => vec![true; n_tensors],
    };

    let mut params = init.clone();
    let first = EpochRecord {
        epoch: 0,
        train_loss: evaluate_loss(config, &params, train_set)?,
        val_loss: evaluate_loss(config, &params, val_set)?,
    };
    on_epoch(&first);
    let mut outcome = TrainOutcome {
        params: params.clone(),
        history: vec![first],
        best_epoch: 0,
        stopped_early: false,
        aborted: None,
    };
    let mut adam = AdamState::new(
        tc.adam,
        params.values().into_iter().zip(&mask).filter(|(_, &m)| m).map(|(t, _)| t),
    );
    let mut rng = rng::stream(tc.seed, 11);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut since_best = 0;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let step = (|| -> Result<()> {
            for idx in order.chunks(tc.batch_size) {
                let batch: Vec<_> = idx.iter().map(|&i| &train_set.samples[i]).collect();
                let (grads, loss) = batch_gradient(config, &params, &batch)?;
                loss_sum += loss * batch.len() as f64;
                let grads: Vec<Tensor> = grads.into_iter().zip(&mask).filter(|(_, &m)| m).map(|(g, _)| g).collect();
                let mut refs: Vec<&mut Tensor> =
                    params.values_mut().into_iter().zip(&mask).filter(|(_, &m)| m).map(|(t, _)| t).collect();
                adam_step(&mut refs, &grads, &mut adam)?;
            }
            Ok(())
        })();
        let val = step.and_then(|_| evaluate_loss(config, &params, val_set));
        let val_loss = match val {
            Ok(v) => v,
            Err(DoaError::Numeric(msg)) => {
                outcome.aborted = Some(format!("epoch {epoch}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord { epoch, train_loss: loss_sum / train_set.len() as f64, val_loss };
        on_epoch(&record);
        outcome.history.push(record);
        if val_loss < outcome.best_val_loss() {
            outcome.best_epoch = epoch;
            outcome.params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.patience {
                outcome.stopped_early = true;
                break;
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_sim::{generate_dataset, ArrayGeometry, DoaSpec, Fov, ImperfectionSpec, SignalScenario};

    fn tiny() -> ModelConfig {
        ModelConfig { embed_dim: 16, depth: 1, heads: 2, mlp_ratio: 4, sources: 2, elements: 4, output: OutputMode::OneD }
    }

    fn data(count: usize, seed: u64) -> Dataset {
        let g = ArrayGeometry::ula(4, 0.5).unwrap();
        let sc = SignalScenario {
            geometry: g.clone(),
            sources: 2,
            snr_db: 10.0,
            snapshots: 20,
            doa: DoaSpec::default(),
            fov: Fov::ula(),
        };
        generate_dataset(&sc, &ImperfectionSpec::ideal(&g), count, seed).unwrap()
    }

    #[test]
    fn zero_epochs_keep_parameters() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 1);
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(&c, &p, &data(8, 1), &data(4, 2), &tc).unwrap();
        assert!(out.params.bitwise_eq(&p));
        assert_eq!(out.history.len(), 1);
        assert!(out.history[0].val_loss.is_finite());
    }

    #[test]
    fn overfits_one_sample() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 3);
        let ds = data(1, 5);
        let tc = TrainConfig {
            epochs: 1500,
            batch_size: 1,
            patience: 1500,
            adam: AdamConfig { lr: 3e-2, ..AdamConfig::default() },
            seed: 1,
        };
        let out = train(&c, &p, &ds, &ds, &tc).unwrap();
        assert!(out.best_val_loss() < 0.1, "loss {}", out.best_val_loss());
    }

    #[test]
    fn patience_stops_training() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 3);
        // a zero learning rate never improves on epoch 0
        let tc = TrainConfig { epochs: 50, batch_size: 4, patience: 3, adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, seed: 0 };
        let out = train(&c, &p, &data(8, 1), &data(4, 2), &tc).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn deterministic_and_masked() {
        let c = tiny();
        let p = TransDoaParams::init(&c, 3);
        let (tr, va) = (data(24, 1), data(8, 2));
        let tc = TrainConfig { epochs: 3, batch_size: 8, patience: 30, adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() }, seed: 9 };
        let a = train(&c, &p, &tr, &va, &tc).unwrap();
        let b = train(&c, &p, &tr, &va, &tc).unwrap();
        assert!(a.params.bitwise_eq(&b.params));
        assert_eq!(a.history, b.history);

        let n = p.values().len();
        let mut mask = vec![false; n];
        mask[n - 1] = true;
        mask[n - 2] = true;
        let tc = TrainConfig { patience: 0, ..tc };
        let m = train_subset(&c, &p, &tr, &va, &TrainConfig { patience: 30, ..tc }, Some(&mask), &mut |_| {}).unwrap();
        let (before, after) = (p.values(), m.params.values());
        for i in 0..n - 2 {
            assert!(before[i].bitwise_eq(after[i]));
        }
    }

    #[test]
    fn mismatch_is_reported() {
        let c = ModelConfig { sources: 3, ..tiny() };
        let p = TransDoaParams::init(&c, 3);
        let err = train(&c, &p, &data(4, 1), &data(4, 2), &TrainConfig::default()).unwrap_err();
        assert!(err.is_mismatch());
    }
}
