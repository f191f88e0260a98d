//! Mini-batch Adam training with per-epoch validation and best-epoch
//! checkpoint selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, loss_value, Checkpoint, LossKind, Network, NetworkConfig, ShiftSource, TensorMap};
use crate::burst::BurstSample;
use crate::error::{Error, Result};
use crate::parallel::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossKind,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 15,
            batch_size: 8,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossKind::L1,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("train.{field}: {why}")));
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must be in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps", "must be > 0");
        }
        Ok(())
    }
}

/// A burst converted to network tensors, with its HR target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub frames: Vec<TensorMap<f32>>,
    pub target: TensorMap<f32>,
}

impl TrainItem {
    pub fn from_sample(sample: &BurstSample) -> Result<Self> {
        let hr = sample
            .hr_target
            .as_ref()
            .ok_or_else(|| Error::Argument("training sample has no hr target".into()))?;
        Ok(TrainItem {
            frames: sample.frames.iter().map(TensorMap::from_image).collect(),
            target: TensorMap::from_image(hr),
        })
    }
}

/// Adam with first/second moments held in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, hyper: &TrainHyper) -> Self {
        Adam {
            lr: hyper.lr,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            eps: hyper.eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            *p = (*p as f64 - update) as f32;
        }
    }
}

/// Result of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub fallbacks: usize,
}

/// Holds the model and optimizer state across steps.
pub struct Trainer {
    net: Network<f32>,
    adam: Adam,
    hyper: TrainHyper,
    exec: Exec,
    steps: usize,
}

impl Trainer {
    pub fn new(cfg: NetworkConfig, hyper: TrainHyper, exec: Exec) -> Result<Self> {
        hyper.validate()?;
        let net = Network::new(cfg)?;
        let adam = Adam::new(net.params().len(), &hyper);
        Ok(Trainer {
            net,
            adam,
            hyper,
            exec,
            steps: 0,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Loss and parameter gradient of one item.
    fn sample_grad(&self, item: &TrainItem) -> Result<(f64, Vec<f32>, usize)> {
        let trace = self.net.forward_trace(&item.frames, &ShiftSource::Estimate)?;
        let (loss, g_out) = loss_and_grad(self.hyper.loss, &trace.output, &item.target)?;
        Ok((loss, self.net.backward(&trace, &g_out), trace.fallbacks))
    }

    /// One Adam step on the batch mean loss. A non-finite loss aborts before
    /// the parameters are touched; `epoch` is only used in that report.
    pub fn step(&mut self, batch: &[&TrainItem], epoch: usize) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let per_sample = self.exec.try_map(batch, |item| self.sample_grad(item))?;
        let scale = 1.0 / batch.len() as f64;
        let mut grads = vec![0.0f64; self.net.params().len()];
        let mut loss = 0.0;
        let mut fallbacks = 0;
        for (l, g, fb) in &per_sample {
            loss += l;
            fallbacks += fb;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += *v as f64;
            }
        }
        loss *= scale;
        grads.iter_mut().for_each(|g| *g *= scale);
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                step: self.steps + 1,
                loss,
            });
        }
        if fallbacks > 0 {
            log::debug!("step {}: {fallbacks} degenerate alignments used zero shift", self.steps + 1);
        }
        self.adam.step(self.net.params_mut(), &grads);
        self.steps += 1;
        Ok(StepStats { loss, fallbacks })
    }

    /// Mean loss of the current parameters over `items`.
    pub fn evaluate(&self, items: &[TrainItem]) -> Result<f64> {
        evaluate_loss(&self.net, items, self.hyper.loss, self.exec)
    }
}

/// Mean per-item loss of `net` over `items`.
pub fn evaluate_loss(net: &Network<f32>, items: &[TrainItem], loss: LossKind, exec: Exec) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let losses = exec.try_map(items, |item| {
        let trace = net.forward_trace(&item.frames, &ShiftSource::Estimate)?;
        loss_value(loss, &trace.output, &item.target)
    })?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

/// One line of the loss log: a training step (`val_loss` empty) or an
/// end-of-epoch summary with the mean epoch train loss and the val loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
    pub fallbacks: usize,
}

/// Trains from `cfg.seed`; data order is shuffled per epoch by a generator
/// seeded from the same value, so runs are reproducible.
pub fn train(
    train_set: &[TrainItem],
    val_set: &[TrainItem],
    cfg: &NetworkConfig,
    hyper: &TrainHyper,
    exec: Exec,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Argument("empty training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    let mut trainer = Trainer::new(cfg.clone(), hyper.clone(), exec)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut fallbacks = 0;
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<&TrainItem> = chunk.iter().map(|&i| &train_set[i]).collect();
            let stats = trainer.step(&batch, epoch)?;
            fallbacks += stats.fallbacks;
            epoch_loss += stats.loss;
            batches += 1;
            log.push(LossRecord {
                epoch,
                step: trainer.steps(),
                train_loss: stats.loss,
                val_loss: None,
            });
        }
        let val_loss = trainer.evaluate(val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: trainer.steps(),
                loss: val_loss,
            });
        }
        log::info!("epoch {epoch}: train {:.6} val {val_loss:.6}", epoch_loss / batches as f64);
        log.push(LossRecord {
            epoch,
            step: trainer.steps(),
            train_loss: epoch_loss / batches as f64,
            val_loss: Some(val_loss),
        });
        if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
            best = Some(Checkpoint::new(trainer.network(), epoch, val_loss));
        }
    }
    Ok(TrainOutcome {
        checkpoint: best.expect("at least one epoch"),
        log,
        fallbacks,
    })
}

/// Writes the loss log as CSV (`epoch,step,train_loss,val_loss`).
pub fn write_loss_csv(log: &[LossRecord], out: impl std::io::Write) -> Result<()> {
    let mut out = out;
    let io = |e| Error::io("loss log", e);
    writeln!(out, "epoch,step,train_loss,val_loss").map_err(io)?;
    for r in log {
        let val = r.val_loss.map(|v| format!("{v:.9}")).unwrap_or_default();
        writeln!(out, "{},{},{:.9},{}", r.epoch, r.step, r.train_loss, val).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burst::synthesize_burst;
    use crate::imageops::Rect;
    use crate::synthgen::{generate_scene, SceneParams};

    fn tiny_cfg() -> NetworkConfig {
        NetworkConfig {
            embed_dim: 4,
            rdg_count: 1,
            blocks_per_group: 1,
            growth: 2,
            ..NetworkConfig::default()
        }
    }

    fn items(n: usize) -> Vec<TrainItem> {
        (0..n)
            .map(|i| {
                let scene = generate_scene(&SceneParams {
                    height: 64,
                    width: 64,
                    seed: i as u64,
                    ..SceneParams::default()
                })
                .unwrap();
                let b = synthesize_burst(&scene.image, Rect::new(16, 16, 16, 16), &[-3, 0, 3]).unwrap();
                TrainItem::from_sample(&b).unwrap()
            })
            .collect()
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let hyper = TrainHyper::default();
        let mut adam = Adam::new(2, &hyper);
        let mut p = [1.0f32, -1.0];
        adam.step(&mut p, &[0.5, -2.0]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn empty_train_set_is_rejected() {
        let val = items(1);
        let r = train(&[], &val, &tiny_cfg(), &TrainHyper::default(), Exec::Sequential);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn best_checkpoint_bookkeeping() {
        let data = items(4);
        let hyper = TrainHyper {
            epochs: 3,
            batch_size: 2,
            ..TrainHyper::default()
        };
        let out = train(&data[..3], &data[3..], &tiny_cfg(), &hyper, Exec::Sequential).unwrap();
        let ck = &out.checkpoint;
        assert!(ck.epoch >= 1 && ck.epoch <= 3);
        let net = ck.network().unwrap();
        let again = evaluate_loss(&net, &data[3..], LossKind::L1, Exec::Sequential).unwrap();
        assert_eq!(again, ck.val_loss);
        let epoch_vals: Vec<f64> = out.log.iter().filter_map(|r| r.val_loss).collect();
        assert_eq!(epoch_vals.len(), 3);
        assert_eq!(epoch_vals.iter().cloned().fold(f64::INFINITY, f64::min), ck.val_loss);
    }

    #[test]
    fn divergence_is_reported() {
        let data = items(2);
        let mut trainer = Trainer::new(tiny_cfg(), TrainHyper::default(), Exec::Sequential).unwrap();
        trainer.net.params_mut()[0] = f32::NAN;
        let batch: Vec<&TrainItem> = data.iter().collect();
        let r = trainer.step(&batch, 4);
        assert!(matches!(r, Err(Error::Diverged { epoch: 4, step: 1, .. })));
    }

    #[test]
    fn loss_csv_format() {
        let log = [
            LossRecord { epoch: 1, step: 1, train_loss: 0.5, val_loss: None },
            LossRecord { epoch: 1, step: 1, train_loss: 0.5, val_loss: Some(0.25) },
        ];
        let mut buf = Vec::new();
        write_loss_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "epoch,step,train_loss,val_loss\n1,1,0.500000000,\n1,1,0.500000000,0.250000000\n"
        );
    }
}
