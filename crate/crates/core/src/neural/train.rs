use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::bind;
use super::model::{GraphModel, Scaling};
use super::tape::{sigmoid, Tape, Var, PROB_CLAMP};
use super::tensor::Mat;
use super::NeuralError;
use crate::data::{DatasetSplit, GraphSet, GraphSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Loss weight on positive labels.
    pub pos_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            pos_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Epoch 0 is the untrained model.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Flattened labels and loss weights for a batch, in logit order.
fn targets(batch: &[&GraphSnapshot], pos_weight: f64) -> (Arc<Vec<f64>>, Arc<Vec<f64>>) {
    let y: Vec<f64> = batch
        .iter()
        .flat_map(|g| g.labels.iter().flatten().map(|&v| f64::from(v)))
        .collect();
    let w = y.iter().map(|&v| if v > 0.5 { pos_weight } else { 1.0 }).collect();
    (Arc::new(y), Arc::new(w))
}

struct BatchResult {
    /// loss summed over entries (not averaged)
    loss_sum: f64,
    entries: usize,
    correct: usize,
    grads: Option<Vec<Mat>>,
}

/// Graphs per tape; batches are split into fixed chunks so the summation
/// order does not depend on the thread count.
const CHUNK: usize = 8;

fn eval_chunk<M: GraphModel>(model: &M, chunk: &[&GraphSnapshot], pos_weight: f64, with_grad: bool) -> BatchResult {
    let mut tape = Tape::new();
    let params: Vec<Var> = bind(&mut tape, &model.params().into_iter().cloned().collect::<Vec<_>>());
    let logits = model.forward(&mut tape, &params, chunk);
    let (y, w) = targets(chunk, pos_weight);
    let loss = tape.bce_with_logits(logits, y.clone(), w.clone());
    let entries = w.iter().filter(|v| **v > 0.0).count();
    let correct = tape
        .value(logits)
        .data
        .iter()
        .zip(y.iter())
        .filter(|(z, y)| (**z >= 0.0) == (**y > 0.5))
        .count();
    let grads = with_grad.then(|| {
        let g = tape.backward(loss);
        params.iter().map(|&p| g.wrt(&tape, p)).collect()
    });
    BatchResult {
        loss_sum: tape.value(loss).data[0] * entries as f64,
        entries,
        correct,
        grads,
    }
}

fn eval_batch<M: GraphModel + Sync>(model: &M, batch: &[&GraphSnapshot], pos_weight: f64, with_grad: bool) -> BatchResult {
    let parts: Vec<BatchResult> = batch
        .par_chunks(CHUNK)
        .map(|c| eval_chunk(model, c, pos_weight, with_grad))
        .collect();
    let mut total = BatchResult {
        loss_sum: 0.0,
        entries: 0,
        correct: 0,
        grads: None,
    };
    for p in parts {
        total.loss_sum += p.loss_sum;
        total.entries += p.entries;
        total.correct += p.correct;
        if let Some(g) = p.grads {
            // chunk gradients are of chunk means; reweight to the batch mean
            let scale = p.entries as f64;
            match &mut total.grads {
                None => {
                    total.grads = Some(
                        g.into_iter()
                            .map(|m| m.map(|v| v * scale))
                            .collect(),
                    )
                }
                Some(acc) => {
                    for (a, m) in acc.iter_mut().zip(g) {
                        for (x, v) in a.data.iter_mut().zip(&m.data) {
                            *x += v * scale;
                        }
                    }
                }
            }
        }
    }
    if let Some(acc) = &mut total.grads {
        let n = total.entries.max(1) as f64;
        for a in acc.iter_mut() {
            a.data.iter_mut().for_each(|x| *x /= n);
        }
    }
    total
}

/// Mean loss and accuracy over `graphs`, evaluated in batches.
pub fn evaluate<M: GraphModel + Sync>(model: &M, graphs: &[&GraphSnapshot], batch_size: usize, pos_weight: f64) -> (f64, f64) {
    let (mut loss, mut n, mut correct) = (0.0, 0usize, 0usize);
    for batch in graphs.chunks(batch_size.max(1)) {
        let r = eval_batch(model, batch, pos_weight, false);
        loss += r.loss_sum;
        n += r.entries;
        correct += r.correct;
    }
    let n = n.max(1) as f64;
    (loss / n, correct as f64 / n)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    fn new(lr: f64, params: &[&Mat]) -> Self {
        let zeros: Vec<Mat> = params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, params: Vec<&mut Mat>, grads: &[Mat]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

fn pick<'a>(set: &'a GraphSet, idx: &[usize]) -> Result<Vec<&'a GraphSnapshot>, NeuralError> {
    idx.iter()
        .map(|&i| {
            set.graphs
                .get(i)
                .ok_or_else(|| NeuralError::Dimension(format!("split index {i} outside {} graphs", set.graphs.len())))
        })
        .collect()
}

/// Trains with Adam on mini-batches and keeps the parameters with the lowest
/// validation loss. Feature scaling is fitted on the training partition
/// first.
pub fn train<M: GraphModel + Clone + Sync>(
    model: &mut M,
    graphs: &GraphSet,
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    if graphs.mode != model.mode() {
        return Err(NeuralError::Mode);
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(NeuralError::EmptySplit);
    }
    if config.batch_size == 0 || config.lr <= 0.0 {
        return Err(NeuralError::Config("batch size and learning rate must be positive".into()));
    }
    let train_set = pick(graphs, &split.train)?;
    let val_set = pick(graphs, &split.val)?;
    for g in train_set.iter().chain(&val_set) {
        model.check(g)?;
    }
    *model.scaling_mut() = Scaling::fit(&train_set);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.lr, &model.params());
    let (tl, ta) = evaluate(model, &train_set, config.batch_size, config.pos_weight);
    let (vl, va) = evaluate(model, &val_set, config.batch_size, config.pos_weight);
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: tl,
        train_accuracy: ta,
        val_loss: vl,
        val_accuracy: va,
    }];
    let mut best = (0, vl, model.clone());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut n, mut correct) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&GraphSnapshot> = chunk.iter().map(|&i| train_set[i]).collect();
            let r = eval_batch(model, &batch, config.pos_weight, true);
            if !r.loss_sum.is_finite() {
                return Err(NeuralError::Diverged { epoch });
            }
            loss += r.loss_sum;
            n += r.entries;
            correct += r.correct;
            adam.update(model.params_mut(), r.grads.as_deref().unwrap_or(&[]));
        }
        let (vl, va) = evaluate(model, &val_set, config.batch_size, config.pos_weight);
        if !vl.is_finite() {
            return Err(NeuralError::Diverged { epoch });
        }
        let n = n.max(1) as f64;
        history.push(EpochRecord {
            epoch,
            train_loss: loss / n,
            train_accuracy: correct as f64 / n,
            val_loss: vl,
            val_accuracy: va,
        });
        if vl < best.1 {
            best = (epoch, vl, model.clone());
        }
    }
    let (best_epoch, best_val_loss, snapshot) = best;
    *model = snapshot;
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Probabilities for one graph, `rows x T`, each in the open interval (0, 1).
pub fn predict<M: GraphModel>(model: &M, graph: &GraphSnapshot) -> Result<Vec<Vec<f64>>, NeuralError> {
    model.check(graph)?;
    let mut tape = Tape::new();
    let params = bind(&mut tape, &model.params().into_iter().cloned().collect::<Vec<_>>());
    let logits = model.forward(&mut tape, &params, &[graph]);
    let t_len = model.topology().horizon;
    let probs: Vec<f64> = tape
        .value(logits)
        .data
        .iter()
        .map(|&z| sigmoid(z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect();
    Ok(probs.chunks(t_len).map(<[f64]>::to_vec).collect())
}

/// Worst relative error between reverse-mode and central-difference
/// gradients of `loss` with respect to every entry of `params`.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check_params(params: &mut [Mat], loss: impl Fn(&mut Tape, &[Var]) -> Var, epsilon: f64) -> f64 {
    let eval = |params: &[Mat]| {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, params);
        let out = loss(&mut tape, &vars);
        tape.value(out).data[0]
    };
    let analytic: Vec<Mat> = {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, params);
        let out = loss(&mut tape, &vars);
        let g = tape.backward(out);
        vars.iter().map(|&v| g.wrt(&tape, v)).collect()
    };
    let mut worst: f64 = 0.0;
    for p in 0..params.len() {
        for i in 0..params[p].data.len() {
            let orig = params[p].data[i];
            params[p].data[i] = orig + epsilon;
            let up = eval(params);
            params[p].data[i] = orig - epsilon;
            let down = eval(params);
            params[p].data[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[p].data[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Gradient check of a whole model on the BCE loss over `graphs`.
pub fn gradient_check<M: GraphModel + Clone>(model: &M, graphs: &[&GraphSnapshot], epsilon: f64) -> f64 {
    let mut params: Vec<Mat> = model.params().into_iter().cloned().collect();
    let (y, w) = targets(graphs, 1.0);
    gradient_check_params(
        &mut params,
        |tape, vars| {
            let logits = model.forward(tape, vars, graphs);
            tape.bce_with_logits(logits, y.clone(), w.clone())
        },
        epsilon,
    )
}
