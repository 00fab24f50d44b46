//! Mini-batch training with held-out model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{augment, collate, FoldPlan, Sample};
use crate::error::{Error, Result};
use crate::loss::bce_loss;
use crate::nn::{MlcNet, Mode, ModelParams};
use crate::optim::{adam_step, AdamHyper, AdamState};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Parameters after the epoch with the lowest held-out loss (training
    /// loss when there is no held-out set).
    BestLoss,
    /// Parameters after the final step.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Master seed for shuffling, augmentation and dropout.
    pub seed: u64,
    /// Stop after this many optimizer steps, possibly mid-epoch.
    pub max_steps: Option<usize>,
    /// Random flips and rescaling, redrawn every epoch.
    pub augment: bool,
    pub adam: AdamHyper,
    pub selection: Selection,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            max_epochs: 200,
            batch_size: 4,
            seed: 0,
            max_steps: None,
            augment: true,
            adam: AdamHyper::default(),
            selection: Selection::BestLoss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training-mode loss over the steps of the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Append-only per-epoch loss record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    entries: Vec<EpochLog>,
}

impl LossLog {
    pub fn push(&mut self, e: EpochLog) {
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[EpochLog] {
        &self.entries
    }

    /// `epoch<TAB>train_loss<TAB>val_loss` lines; `-` marks a missing value.
    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.9}"));
                format!("{}\t{:.9}\t{val}\n", e.epoch, e.train_loss)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Selected parameters per [`Selection`].
    pub best: ModelParams<T>,
    pub best_epoch: usize,
    pub log: LossLog,
    pub steps: usize,
}

/// Mean inference-mode loss over `samples`.
pub fn mean_loss<T: Scalar>(net: &MlcNet<T>, samples: &[Sample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = collate::<T>(&refs)?;
        let p = net.predict(&x)?;
        total += bce_loss(&p, &y)?.to_f64_lossy() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// One forward/backward/Adam update on a batch; returns the batch loss.
/// Running normalization statistics are refreshed from the batch.
pub fn train_step<T: Scalar>(
    net: &mut MlcNet<T>,
    state: &mut AdamState<T>,
    batch: &[&Sample],
    dropout_seed: u64,
    step: usize,
) -> Result<f64> {
    let (x, y) = collate::<T>(batch)?;
    let mut tape = Tape::new();
    let xv = tape.input(x);
    let (out, bn) = net.forward(&mut tape, xv, Mode::Train, dropout_seed)?;
    if !tape.value(out.prob).is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let loss = tape.bce(out.prob, y)?;
    let value = tape.value(loss).data()[0].to_f64_lossy();
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let grads = tape.backward(loss)?;
    drop(tape);
    adam_step(net.params_mut(), &grads, state)?;
    net.apply_bn_updates(&bn)?;
    Ok(value)
}

/// Trains `net` in place on `train_set`, scoring `heldout` after every epoch.
pub fn train<T: Scalar>(
    net: &mut MlcNet<T>,
    train_set: &[Sample],
    heldout: &[Sample],
    cfg: &TrainRunConfig,
) -> Result<TrainOutcome<T>> {
    train_with(net, train_set, heldout, cfg, |_| {})
}

/// [`train`] with a callback invoked after each logged epoch.
pub fn train_with<T: Scalar>(
    net: &mut MlcNet<T>,
    train_set: &[Sample],
    heldout: &[Sample],
    cfg: &TrainRunConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() {
        return Err(Error::invalid("train", "training set is empty"));
    }
    if cfg.max_epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid(
            "train",
            "max_epochs and batch_size must be positive",
        ));
    }
    let mut state = AdamState::new(cfg.adam);
    let mut log = LossLog::default();
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut step = 0;
    let n = train_set.len();

    for epoch in 0..cfg.max_epochs {
        if cfg.max_steps.is_some_and(|m| step >= m) {
            break;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive_indexed(
            cfg.seed,
            seed::SHUFFLE,
            epoch as u64,
        )));
        let augmented: Vec<Sample> = if cfg.augment {
            order
                .iter()
                .map(|&i| {
                    augment(
                        &train_set[i],
                        seed::derive_indexed(cfg.seed, seed::AUGMENT, (epoch * n + i) as u64),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let (mut sum, mut seen) = (0.0, 0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let batch: Vec<&Sample> = if cfg.augment {
                augmented[b * cfg.batch_size..][..idx.len()]
                    .iter()
                    .collect()
            } else {
                idx.iter().map(|&i| &train_set[i]).collect()
            };
            let dropout_seed = seed::derive_indexed(cfg.seed, seed::DROPOUT, step as u64);
            let loss = train_step(net, &mut state, &batch, dropout_seed, step)?;
            sum += loss * batch.len() as f64;
            seen += batch.len();
            step += 1;
        }
        let train_loss = sum / seen as f64;
        let val_loss = if heldout.is_empty() {
            None
        } else {
            Some(mean_loss(net, heldout, cfg.batch_size)?)
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
        };
        log.push(entry);
        on_epoch(&entry);

        let score = val_loss.unwrap_or(train_loss);
        let improved = match (&best, cfg.selection) {
            (_, Selection::Last) | (None, _) => true,
            (Some((b, _, _)), Selection::BestLoss) => score < *b,
        };
        if improved {
            best = Some((score, epoch, net.params().clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        steps: step,
    })
}

/// Splits `samples` by `plan` and trains on every fold except `fold`,
/// holding `fold` out for model selection.
pub fn train_fold<T: Scalar>(
    net: &mut MlcNet<T>,
    samples: &[Sample],
    plan: &FoldPlan,
    fold: usize,
    cfg: &TrainRunConfig,
) -> Result<TrainOutcome<T>> {
    let (train_set, heldout) = split_fold(samples, plan, fold)?;
    train(net, &train_set, &heldout, cfg)
}

/// `(train, held-out)` samples of `fold`; every sample must be in the plan.
pub fn split_fold(
    samples: &[Sample],
    plan: &FoldPlan,
    fold: usize,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    plan.test_ids(fold)?;
    let mut train_set = Vec::new();
    let mut heldout = Vec::new();
    for s in samples {
        match plan.fold_of(&s.id) {
            Some(f) if f == fold => heldout.push(s.clone()),
            Some(_) => train_set.push(s.clone()),
            None => {
                return Err(Error::invalid(
                    "split_fold",
                    format!("sample `{}` is not in the fold plan", s.id),
                ))
            }
        }
    }
    if heldout.is_empty() || train_set.is_empty() {
        return Err(Error::invalid(
            "split_fold",
            format!("fold {fold} leaves an empty train or held-out set"),
        ));
    }
    Ok((train_set, heldout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthStyle};
    use crate::nn::{is_trainable, ModelConfig};

    fn small_cfg() -> TrainRunConfig {
        TrainRunConfig {
            max_epochs: 3,
            batch_size: 2,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_trainable_parameters() {
        let data = synth_dataset(4, 32, 1, SynthStyle::Rings).unwrap();
        let mut net = MlcNet::<f64>::new(ModelConfig::miniature(), 1).unwrap();
        let init = net.params().clone();
        let cfg = TrainRunConfig {
            adam: AdamHyper {
                lr: 0.0,
                ..Default::default()
            },
            ..small_cfg()
        };
        let out = train(&mut net, &data[..3], &data[3..], &cfg).unwrap();
        for (name, t) in init.iter().filter(|(n, _)| is_trainable(n)) {
            assert_eq!(net.params().get(name).unwrap(), t, "{name}");
            assert_eq!(out.best.get(name).unwrap(), t, "{name}");
        }
        assert_eq!(out.steps, 6);
        assert_eq!(out.log.entries().len(), 3);
    }

    #[test]
    fn same_seed_same_log() {
        let data = synth_dataset(4, 32, 2, SynthStyle::Blobs).unwrap();
        let run = || {
            let mut net = MlcNet::<f32>::new(ModelConfig::miniature(), 3).unwrap();
            train(&mut net, &data[..3], &data[3..], &small_cfg()).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.to_tsv(), b.log.to_tsv());
        assert_eq!(a.best, b.best);
        assert!(a.log.to_tsv().lines().all(|l| l.split('\t').count() == 3));
    }

    #[test]
    fn step_budget_and_selection() {
        let data = synth_dataset(3, 32, 2, SynthStyle::Rings).unwrap();
        let mut net = MlcNet::<f32>::new(ModelConfig::miniature(), 3).unwrap();
        let cfg = TrainRunConfig {
            max_epochs: 10,
            max_steps: Some(5),
            selection: Selection::Last,
            ..small_cfg()
        };
        let out = train(&mut net, &data, &[], &cfg).unwrap();
        assert_eq!(out.steps, 5);
        assert_eq!(out.log.entries().len(), 3);
        assert_eq!(&out.best, net.params());
        assert!(out.log.to_tsv().lines().all(|l| l.ends_with("\t-")));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let data = synth_dataset(4, 32, 2, SynthStyle::Rings).unwrap();
        let mut net = MlcNet::<f32>::new(ModelConfig::miniature(), 3).unwrap();
        assert!(train(&mut net, &[], &data, &small_cfg()).is_err());
        let ids: Vec<&str> = data.iter().map(|s| s.id.as_str()).collect();
        let plan = crate::data::kfold_split(&ids, 2, 0).unwrap();
        assert!(split_fold(&data, &plan, 2).is_err());
        assert!(
            split_fold(&data[..1], &plan, 0).is_err() || split_fold(&data[..1], &plan, 1).is_err()
        );
        let (tr, te) = split_fold(&data, &plan, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (2, 2));
    }

    #[test]
    fn non_finite_loss_reports_step() {
        let data = synth_dataset(2, 32, 2, SynthStyle::Rings).unwrap();
        let mut net = MlcNet::<f32>::new(ModelConfig::miniature(), 3).unwrap();
        let w = net.params_mut().get_mut("head.weight").unwrap();
        w.data_mut()[0] = f32::NAN;
        let err = train(&mut net, &data, &[], &small_cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 0 }), "{err}");
    }
}
