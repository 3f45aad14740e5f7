use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, ModelKind, StudentModel};
use crate::tensor::{adam_step, clip_grad_norm, AdamConfig, AdamState, Graph, Scalar, ScalarFn, TensorError, Var};

/// Per-run overrides; everything else comes from the model config.
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub epochs: Option<usize>,
    pub lr: Option<f32>,
    /// Shuffling and dropout seed.
    pub seed: u64,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochStats)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss of each epoch, in order.
    pub epoch_losses: Vec<f64>,
    pub first_batch_loss: f64,
    pub steps: u64,
    pub val_losses: Vec<f64>,
    /// 1-based epoch whose weights were kept, when validation picked one.
    pub best_epoch: Option<usize>,
    pub clip_norm: Option<f32>,
}

struct Plan {
    epochs: usize,
    lr: f32,
    batch: usize,
}

fn plan(model: &StudentModel, opts: &TrainOptions) -> Plan {
    Plan {
        epochs: opts.epochs.unwrap_or(model.config.epochs),
        lr: opts.lr.unwrap_or(model.config.lr),
        batch: model.config.batch_size,
    }
}

/// Next-token inputs, targets and mask for a right-padded batch. Every
/// position whose successor is a real token is scored, code and summary
/// alike.
fn shifted(batch: &[&[u32]]) -> (Vec<usize>, Vec<bool>) {
    let len = batch.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut targets = Vec::with_capacity(batch.len() * len);
    let mut mask = Vec::with_capacity(batch.len() * len);
    for s in batch {
        for t in 0..len {
            match s.get(t + 1) {
                Some(&next) => {
                    targets.push(next as usize);
                    mask.push(true);
                }
                None => {
                    targets.push(0);
                    mask.push(false);
                }
            }
        }
    }
    (targets, mask)
}

/// Evaluation-mode next-token loss of a decoder-only batch as a function
/// of the model parameters, for `grad_check`.
pub struct DecoderLoss<'a> {
    pub model: &'a StudentModel,
    pub batch: Vec<&'a [u32]>,
}

impl ScalarFn for DecoderLoss<'_> {
    fn eval<S: Scalar>(&self, g: &mut Graph<S>, vars: &[Var]) -> Result<Var, TensorError> {
        let m = self.model;
        let (targets, mask) = shifted(&self.batch);
        let h = m.decoder_hidden(g, vars, false, &self.batch).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => unreachable!("decoder stack only fails inside tensor ops: {other}"),
        })?;
        let f = m.forward(vars, false);
        let logits = f.logits(g, &m.layout.decoder, h)?;
        g.cross_entropy(logits, &targets, &mask)
    }
}

fn step(
    model: &mut StudentModel,
    adam: &mut AdamState,
    lr: f32,
    seed: u64,
    build: impl FnOnce(&StudentModel, &mut Graph, &[Var]) -> Result<Var, ModelError>,
) -> Result<f64, ModelError> {
    let mut g = Graph::training(seed);
    let vars: Vec<Var> = model.params.iter().map(|p| g.input(p)).collect();
    let loss = build(model, &mut g, &vars)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Ok(value);
    }
    g.backward(loss)?;
    for p in model.params_mut() {
        p.zero_grad();
    }
    g.write_grads(&vars, model.params_mut());
    drop(g);
    if let Some(max) = model.config.clip_norm {
        clip_grad_norm(model.params_mut(), max);
    }
    adam_step(model.params_mut(), adam, lr)?;
    Ok(value)
}

fn check_seq(seq: &[u32], vocab: usize, ctx: usize) -> Result<(), ModelError> {
    StudentModel::check_ids(seq, vocab, ctx)
}

/// Autoregressive training of a decoder-only model on tokenized records.
/// Records are shuffled each epoch; dropout follows the config.
pub fn train(
    model: &mut StudentModel,
    records: &[Vec<u32>],
    mut opts: TrainOptions,
) -> Result<TrainReport, ModelError> {
    model.expect(ModelKind::DecoderOnly)?;
    let usable: Vec<&[u32]> = records.iter().map(Vec::as_slice).filter(|r| r.len() >= 2).collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for r in &usable {
        check_seq(r, model.config.vocab_size, model.config.context_length)?;
    }
    let p = plan(model, &opts);
    let mut adam = AdamState::new(model.params(), AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(p.epochs),
        first_batch_loss: f64::NAN,
        steps: 0,
        val_losses: Vec::new(),
        best_epoch: None,
        clip_norm: model.config.clip_norm,
    };
    for epoch in 1..=p.epochs {
        let started = std::time::Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (i, chunk) in order.chunks(p.batch).enumerate() {
            let batch: Vec<&[u32]> = chunk.iter().map(|&j| usable[j]).collect();
            let (targets, mask) = shifted(&batch);
            let seed = opts.seed ^ report.steps.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let loss = step(model, &mut adam, p.lr, seed, |m, g, vars| {
                let h = m.decoder_hidden(g, vars, true, &batch)?;
                let f = m.forward(vars, true);
                let logits = f.logits(g, &m.layout.decoder, h)?;
                Ok(g.cross_entropy(logits, &targets, &mask)?)
            })?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    step: i,
                    loss,
                });
            }
            if report.steps == 0 {
                report.first_batch_loss = loss;
            }
            report.steps += 1;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        report.epoch_losses.push(mean);
        if let Some(cb) = opts.on_epoch.as_mut() {
            cb(&EpochStats {
                epoch,
                mean_loss: mean,
                val_loss: None,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(report)
}

/// One encoder-decoder example: code ids, decoder input, decoder target.
pub type Seq2SeqExample = (Vec<u32>, Vec<u32>, Vec<u32>);

fn seq2seq_loss(
    m: &StudentModel,
    g: &mut Graph,
    vars: &[Var],
    training: bool,
    batch: &[&Seq2SeqExample],
) -> Result<Var, ModelError> {
    let src: Vec<&[u32]> = batch.iter().map(|e| e.0.as_slice()).collect();
    let input: Vec<&[u32]> = batch.iter().map(|e| e.1.as_slice()).collect();
    let len = input.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut targets = Vec::with_capacity(batch.len() * len);
    let mut mask = Vec::with_capacity(batch.len() * len);
    for e in batch {
        for t in 0..len {
            let y = e.2.get(t);
            targets.push(y.map_or(0, |&y| y as usize));
            mask.push(y.is_some());
        }
    }
    let h = m.seq2seq_hidden(g, vars, training, &src, &input)?;
    let f = m.forward(vars, training);
    let logits = f.logits(g, &m.layout.decoder, h)?;
    Ok(g.cross_entropy(logits, &targets, &mask)?)
}

fn mean_loss(m: &StudentModel, data: &[Seq2SeqExample], batch: usize) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in data.chunks(batch) {
        let refs: Vec<&Seq2SeqExample> = chunk.iter().collect();
        let mut g = Graph::new();
        let vars: Vec<Var> = m.params.iter().map(|p| g.input(p)).collect();
        let loss = seq2seq_loss(m, &mut g, &vars, false, &refs)?;
        total += g.scalar(loss) * chunk.len() as f64;
        n += chunk.len();
    }
    Ok(total / n as f64)
}

/// Trains the encoder-decoder baseline and keeps the weights of the epoch
/// with the lowest validation loss. Without validation data the last
/// epoch is kept.
pub fn train_seq2seq(
    model: &mut StudentModel,
    train: &[Seq2SeqExample],
    val: &[Seq2SeqExample],
    mut opts: TrainOptions,
) -> Result<TrainReport, ModelError> {
    model.expect(ModelKind::EncoderDecoder)?;
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let c = &model.config;
    for (src, input, target) in train.iter().chain(val) {
        check_seq(src, c.src_vocab_size, c.src_context_length)?;
        check_seq(input, c.vocab_size, c.context_length)?;
        check_seq(target, c.vocab_size, c.context_length)?;
    }
    let p = plan(model, &opts);
    let mut adam = AdamState::new(model.params(), AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Vec<crate::tensor::Tensor>)> = None;
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(p.epochs),
        first_batch_loss: f64::NAN,
        steps: 0,
        val_losses: Vec::new(),
        best_epoch: None,
        clip_norm: model.config.clip_norm,
    };
    for epoch in 1..=p.epochs {
        let started = std::time::Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (i, chunk) in order.chunks(p.batch).enumerate() {
            let batch: Vec<&Seq2SeqExample> = chunk.iter().map(|&j| &train[j]).collect();
            let seed = opts.seed ^ report.steps.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let loss = step(model, &mut adam, p.lr, seed, |m, g, vars| {
                seq2seq_loss(m, g, vars, true, &batch)
            })?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    step: i,
                    loss,
                });
            }
            if report.steps == 0 {
                report.first_batch_loss = loss;
            }
            report.steps += 1;
            total += loss;
            batches += 1;
        }
        report.epoch_losses.push(total / batches as f64);
        let val_loss = if val.is_empty() {
            None
        } else {
            let v = mean_loss(model, val, p.batch)?;
            report.val_losses.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                report.best_epoch = Some(epoch);
            }
            Some(v)
        };
        if let Some(cb) = opts.on_epoch.as_mut() {
            cb(&EpochStats {
                epoch,
                mean_loss: total / batches as f64,
                val_loss,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn shifted_targets_skip_padding() {
        let (t, m) = shifted(&[&[5, 6, 7], &[8, 9]]);
        assert_eq!(t, [6, 7, 0, 9, 0, 0]);
        assert_eq!(m, [true, true, false, true, false, false]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut m = StudentModel::init(ModelConfig::desk(300), 0).unwrap();
        assert!(matches!(
            train(&mut m, &[], TrainOptions::default()),
            Err(ModelError::EmptyDataset)
        ));
        assert!(matches!(
            train(&mut m, &[vec![5]], TrainOptions::default()),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let mut m = StudentModel::init(ModelConfig::desk(300), 0).unwrap();
        m.params[0].data_mut()[5] = f32::NAN;
        let err = train(&mut m, &[vec![5, 6, 7]], TrainOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteLoss { epoch: 1, step: 0, .. }), "{err}");
    }

    #[test]
    fn loss_goes_down_on_a_tiny_set() {
        let mut c = ModelConfig::desk(300);
        c.d = 32;
        c.dropout = 0.0;
        let mut m = StudentModel::init(c, 1).unwrap();
        let data: Vec<Vec<u32>> = (0..8u32).map(|i| vec![0, 10 + i, 20 + i, 30 + i, 1, 40 + i, 2]).collect();
        let opts = TrainOptions {
            epochs: Some(20),
            ..Default::default()
        };
        let r = train(&mut m, &data, opts).unwrap();
        assert!(r.epoch_losses[19] < r.epoch_losses[0]);
        assert_eq!(r.steps, 20);
    }
}
