//! Toy MLP adaptation: a base network pre-trained on a source labelling is
//! adapted to a target labelling produced from rotated inputs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerConfig};
use super::{diverged, DivergenceInfo, FamilyConfig, LossPoint, TrainReport, REPORT_FORMAT_VERSION};
use crate::adapters::{Adapter, AnyAdapter, FrozenFactorStore};
use crate::error::{Result, TeraError};
use crate::linalg::{numerical_rank, RANK_REL_TOL};
use crate::rng::{derive_seed, gaussian_matrix, random_orthogonal, seeded, uniform_matrix};
use crate::tensor::Matrix;

/// Bias-free MLP with `tanh` hidden activations and linear logits.
/// Layer `l` maps `widths[l]` to `widths[l + 1]`; weights are `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
}

struct Trace {
    /// `acts[0]` is the input batch, `acts[l]` the output of layer `l − 1`.
    acts: Vec<Matrix>,
}

impl Mlp {
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(TeraError::InvalidArgument(format!(
                "MLP widths must have at least two positive entries, got {widths:?}"
            )));
        }
        let mut rng = seeded(seed);
        let weights = widths
            .windows(2)
            .map(|w| uniform_matrix(&mut rng, w[1], w[0], (6.0 / (w[0] + w[1]) as f64).sqrt()))
            .collect();
        Ok(Self { weights })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    fn trace(&self, x: &Matrix) -> Result<Trace> {
        let mut acts = vec![x.clone()];
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = acts[l].matmul(&w.transpose())?;
            if l + 1 < self.weights.len() {
                z.data_mut().iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(Trace { acts })
    }

    /// Logits for a batch with one sample per row.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.acts.pop().expect("non-empty"))
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.forward(x)?;
        let hits = (0..logits.rows())
            .filter(|&i| argmax(logits.row(i)) == labels[i])
            .count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }

    /// Mean cross-entropy and `∂L/∂W_l` for every layer.
    pub fn loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let trace = self.trace(x)?;
        let n = x.rows();
        let logits = trace.acts.last().expect("non-empty");
        let mut loss = 0.0;
        let mut delta = Matrix::zeros(n, logits.cols());
        for i in 0..n {
            let row = logits.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            loss += z.ln() + m - row[labels[i]];
            for (c, v) in row.iter().enumerate() {
                let p = (v - m).exp() / z;
                let y = if c == labels[i] { 1.0 } else { 0.0 };
                delta.set(i, c, (p - y) / n as f64);
            }
        }
        let mut grads = Vec::with_capacity(self.layers());
        for l in (0..self.layers()).rev() {
            grads.push(delta.transpose().matmul(&trace.acts[l])?);
            if l > 0 {
                let mut back = delta.matmul(&self.weights[l])?;
                for (b, h) in back.data_mut().iter_mut().zip(trace.acts[l].data()) {
                    *b *= 1.0 - h * h;
                }
                delta = back;
            }
        }
        grads.reverse();
        Ok((loss / n as f64, grads))
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTaskConfig {
    /// Input width, hidden widths, class count.
    pub widths: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    /// Zero-based layers that receive adapters; empty means all.
    pub adapted_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for MlpTaskConfig {
    fn default() -> Self {
        Self {
            widths: vec![64, 64, 64, 64],
            n_train: 512,
            n_test: 512,
            pretrain_steps: 300,
            pretrain_lr: 1e-2,
            adapted_layers: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MlpAdaptTask {
    pub config: MlpTaskConfig,
    /// Pre-trained on the source task and never modified afterwards.
    pub base: Mlp,
    pub source_train: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
    pub adapted_layers: Vec<usize>,
}

impl MlpAdaptTask {
    /// Builds datasets from a random teacher network and pre-trains the base.
    /// Target labels are the teacher's labels of `Q x` for a random rotation `Q`.
    pub fn new(config: MlpTaskConfig) -> Result<Self> {
        let seed = config.seed;
        let teacher = Mlp::random(&config.widths, derive_seed(seed, &[1]))?;
        let input = config.widths[0];
        let rotation = random_orthogonal(&mut seeded(derive_seed(seed, &[2])), input);
        let sample = |n: usize, s: u64, rotate: bool| -> Result<Dataset> {
            let x = gaussian_matrix(&mut seeded(derive_seed(seed, &[3, s])), n, input);
            let seen = if rotate { x.matmul(&rotation.transpose())? } else { x.clone() };
            let logits = teacher.forward(&seen)?;
            let labels = (0..n).map(|i| argmax(logits.row(i))).collect();
            Ok(Dataset { x, labels })
        };
        let source_train = sample(config.n_train, 0, false)?;
        let target_train = sample(config.n_train, 1, true)?;
        let target_test = sample(config.n_test, 2, true)?;

        let layers = config.widths.len() - 1;
        let adapted_layers = if config.adapted_layers.is_empty() {
            (0..layers).collect()
        } else {
            config.adapted_layers.clone()
        };
        if let Some(&bad) = adapted_layers.iter().find(|&&l| l >= layers) {
            return Err(TeraError::InvalidArgument(format!(
                "adapted layer {bad} out of range for {layers} layers"
            )));
        }

        let init = Mlp::random(&config.widths, derive_seed(seed, &[4]))?;
        let opt = OptimizerConfig {
            learning_rate: config.pretrain_lr,
            warmup_steps: 0,
            max_steps: config.pretrain_steps,
            ..Default::default()
        };
        let base = train_full(&init, &source_train, &opt)?.0;
        Ok(Self {
            config,
            base,
            source_train,
            target_train,
            target_test,
            adapted_layers,
        })
    }

    /// `W_ft − W0` per layer after full fine-tuning on the target task.
    pub fn full_finetune_deltas(&self, cfg: &OptimizerConfig) -> Result<Vec<Matrix>> {
        let (tuned, _) = train_full(&self.base, &self.target_train, cfg)?;
        tuned
            .weights
            .iter()
            .zip(&self.base.weights)
            .map(|(t, w)| t.sub(w))
            .collect()
    }
}

fn flatten(m: &[Matrix]) -> Vec<f64> {
    m.iter().flat_map(|w| w.data().iter().copied()).collect()
}

/// Full-batch training of every weight; returns the network and its final loss.
fn train_full(init: &Mlp, data: &Dataset, cfg: &OptimizerConfig) -> Result<(Mlp, f64)> {
    cfg.validate()?;
    let mut net = init.clone();
    let mut params = flatten(&net.weights);
    let mut opt = Optimizer::new(cfg.clone(), params.len());
    let mut loss = 0.0;
    for step in 0..=cfg.max_steps {
        let (l, grads) = net.loss_and_grads(&data.x, &data.labels)?;
        loss = l;
        if !l.is_finite() {
            return Err(TeraError::Divergence { step, loss: l });
        }
        if step == cfg.max_steps {
            break;
        }
        opt.step(&mut params, &flatten(&grads));
        let mut off = 0;
        for w in &mut net.weights {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&params[off..off + n]);
            off += n;
        }
    }
    Ok((net, loss))
}

/// Trains adapters on the task's adapted layers with the base frozen.
/// Returns the report and the trained adapters in layer order.
pub fn fit_mlp_adapt(
    task: &MlpAdaptTask,
    family: &FamilyConfig,
    store: &FrozenFactorStore,
    cfg: &OptimizerConfig,
) -> Result<(TrainReport, Vec<AnyAdapter>)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut adapters = Vec::with_capacity(task.adapted_layers.len());
    for &l in &task.adapted_layers {
        let w0 = &task.base.weights[l];
        let spec = family.spec_for(w0.rows(), w0.cols())?;
        adapters.push(spec.build(store, derive_seed(cfg.seed, &[l as u64]), Some(w0))?);
    }
    let mut params: Vec<f64> = adapters.iter().flat_map(|a| a.params()).collect();
    let mut opt = Optimizer::new(cfg.clone(), params.len());
    let mut curve = Vec::with_capacity(cfg.max_steps + 1);
    let mut initial = None;
    let mut divergence = None;
    let data = &task.target_train;
    for step in 0..=cfg.max_steps {
        let net = merged(task, &adapters)?;
        let (loss, grads) = net.loss_and_grads(&data.x, &data.labels)?;
        curve.push(LossPoint { step, loss });
        let init = *initial.get_or_insert(loss);
        if diverged(loss, init) {
            divergence = Some(DivergenceInfo {
                step,
                loss,
                initial_loss: init,
            });
            break;
        }
        if step == cfg.max_steps {
            break;
        }
        let mut grad = Vec::with_capacity(params.len());
        for (a, &l) in adapters.iter().zip(&task.adapted_layers) {
            grad.extend(a.gradient(&grads[l])?);
        }
        opt.step(&mut params, &grad);
        let mut off = 0;
        for a in &mut adapters {
            let n = a.trainable_param_count();
            a.set_params(&params[off..off + n])?;
            off += n;
        }
    }
    let test = &task.target_test;
    let final_ranks = adapters
        .iter()
        .map(|a| {
            let d = a.materialize_delta();
            if d.is_finite() {
                numerical_rank(&d, RANK_REL_TOL)
            } else {
                Ok(0)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let report = TrainReport {
        format_version: REPORT_FORMAT_VERSION,
        family: family.family(),
        final_loss: curve.last().map_or(0.0, |p| p.loss),
        loss_curve: curve,
        final_relative_residual: None,
        target_accuracy: Some(merged(task, &adapters)?.accuracy(&test.x, &test.labels)?),
        base_accuracy: Some(task.base.accuracy(&test.x, &test.labels)?),
        wall_time_secs: start.elapsed().as_secs_f64(),
        trainable_params: adapters.iter().map(|a| a.trainable_param_count()).sum(),
        final_ranks,
        rank_tolerance: RANK_REL_TOL,
        diverged: divergence,
        config: cfg.clone(),
    };
    Ok((report, adapters))
}

fn merged(task: &MlpAdaptTask, adapters: &[AnyAdapter]) -> Result<Mlp> {
    let mut net = task.base.clone();
    for (a, &l) in adapters.iter().zip(&task.adapted_layers) {
        net.weights[l] = a.merge(&task.base.weights[l])?;
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task() -> MlpAdaptTask {
        MlpAdaptTask::new(MlpTaskConfig {
            widths: vec![9, 9, 4],
            n_train: 64,
            n_test: 64,
            pretrain_steps: 100,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let task = small_task();
        let net = &task.base;
        let data = &task.target_train;
        let (_, grads) = net.loss_and_grads(&data.x, &data.labels).unwrap();
        let h = 1e-6;
        for l in 0..net.layers() {
            for &(i, j) in &[(0, 0), (1, 3), (3, 8)] {
                let mut p = net.clone();
                p.weights[l].set(i, j, net.weights[l].get(i, j) + h);
                let mut m = net.clone();
                m.weights[l].set(i, j, net.weights[l].get(i, j) - h);
                let lp = p.loss_and_grads(&data.x, &data.labels).unwrap().0;
                let lm = m.loss_and_grads(&data.x, &data.labels).unwrap().0;
                let num = (lp - lm) / (2.0 * h);
                let ana = grads[l].get(i, j);
                assert!((num - ana).abs() <= 1e-6 * (1.0 + ana.abs()), "{num} vs {ana}");
            }
        }
    }

    #[test]
    fn pretraining_fits_source_task() {
        let task = small_task();
        let acc = task
            .base
            .accuracy(&task.source_train.x, &task.source_train.labels)
            .unwrap();
        assert!(acc > 0.6, "{acc}");
    }

    #[test]
    fn zero_steps_keeps_base_accuracy() {
        let task = small_task();
        let store = FrozenFactorStore::new(0);
        let cfg = OptimizerConfig {
            max_steps: 0,
            ..Default::default()
        };
        for fam in [
            FamilyConfig::Tera {
                parts: 2,
                init: Default::default(),
            },
            FamilyConfig::Lora { rank: 2 },
            FamilyConfig::Vera { rank: 2 },
            FamilyConfig::Hira { rank: 2 },
        ] {
            let (r, _) = fit_mlp_adapt(&task, &fam, &store, &cfg).unwrap();
            assert_eq!(r.target_accuracy, r.base_accuracy);
            assert_eq!(r.loss_curve.len(), 1);
        }
    }

    #[test]
    fn adaptation_reduces_target_loss_and_leaves_base_untouched() {
        let task = small_task();
        let before = task.base.clone();
        let store = FrozenFactorStore::new(0);
        let cfg = OptimizerConfig {
            max_steps: 200,
            warmup_steps: 10,
            ..Default::default()
        };
        let fam = FamilyConfig::Tera {
            parts: 2,
            init: Default::default(),
        };
        let (r, adapters) = fit_mlp_adapt(&task, &fam, &store, &cfg).unwrap();
        assert!(r.final_loss < r.loss_curve[0].loss);
        assert_eq!(task.base, before);
        assert_eq!(adapters.len(), 2);
        assert_eq!(r.final_ranks.len(), 2);
        assert_eq!(r.trainable_params, (9 + 3 + 3) + (4 + 3 + 3));
    }

    #[test]
    fn rejects_out_of_range_layer() {
        let cfg = MlpTaskConfig {
            widths: vec![4, 4],
            adapted_layers: vec![1],
            n_train: 8,
            n_test: 8,
            pretrain_steps: 1,
            ..Default::default()
        };
        assert!(MlpAdaptTask::new(cfg).is_err());
    }
}
