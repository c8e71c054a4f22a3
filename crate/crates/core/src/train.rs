//! Optimizers and the two training procedures: cycle-consistent training of
//! the five-network stack, and the wake-sleep baseline on the same
//! architecture.
//!
//! Training is a pure function of (architecture, config, data, seed): batch
//! shuffles, sampling noise, and evaluation noise all come from streams
//! derived from the config seed.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{BoundModel, C2hmParams, ModelConfig};
use crate::objectives::{
    composite_graph, content_fit_graph, entropy_steer_proxy, LossBreakdown, LossWeights,
};
use crate::rng::SeededRng;
use crate::tape::Tape;
use crate::tensor::Tensor;
use std::time::Instant;

const LOG_2PI: f64 = 1.837877066409345483560659472811;

/// Adam with bias correction. Accumulator slots are aligned with the
/// parameter list the state was created for.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    names: Vec<String>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], names: Vec<String>, lr: f64) -> Self {
        assert_eq!(params.len(), names.len(), "one name per parameter");
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: params.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            names,
        }
    }

    pub fn unnamed(params: &[&Tensor], lr: f64) -> Self {
        let names = (0..params.len()).map(|i| format!("param{i}")).collect();
        AdamState::new(params, names, lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Gradients must be finite and shape-matched;
    /// a NaN gradient aborts naming the offending tensor.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam state holds {} slots, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if !g.all_finite() {
                return Err(Error::NonFinite {
                    what: format!("gradient for {}", self.names[i]),
                });
            }
            if g.shape() != params[i].shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: params[i].shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..grads.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            let g = grads[i].data();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Training hyperparameters shared by both procedures.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Early stopping: stop after this many non-improving epochs.
    pub patience: usize,
    /// Validation total must improve by at least this much to count.
    pub min_delta: f64,
    /// Fraction of the dataset held out as validation (taken from the end,
    /// fixed before shuffling).
    pub val_fraction: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub sigma_obs: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            patience: 5,
            min_delta: 1e-5,
            val_fraction: 0.1,
            seed: 0,
            weights: LossWeights::default(),
            sigma_obs: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.epochs == 0 {
            return Err(Error::Contract(
                "epochs, batch_size and patience must all be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Contract(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch record: mean training losses, validation total, the
/// entropy-steering diagnostic, and wall-clock seconds.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val_total: f64,
    pub steer: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedC2hm {
    pub params: C2hmParams,
    pub logs: Vec<EpochLog>,
    pub optimizer_steps: u64,
}

#[derive(Clone, Debug)]
pub struct TrainedWakeSleep {
    pub params: C2hmParams,
    pub logs: Vec<EpochLog>,
    pub wake_steps: u64,
    pub sleep_steps: u64,
}

fn split_train_val(n: usize, val_fraction: f64) -> (usize, usize) {
    let n_val = (n as f64 * val_fraction).floor() as usize;
    (n - n_val, n_val)
}

/// Forward-only composite breakdown over a slice of the dataset.
fn eval_breakdown(
    params: &C2hmParams,
    data: &LabeledDataset,
    indices: &[usize],
    batch_size: usize,
    weights: &LossWeights,
    rng: &mut SeededRng,
) -> Result<LossBreakdown> {
    let k = params.dims.latent_dim;
    let mut acc = LossBreakdown::default();
    let mut batches = 0.0;
    for chunk in indices.chunks(batch_size) {
        let (x, labels) = data.batch(chunk)?;
        let eps1 = rng.normal_tensor(&[chunk.len(), k]);
        let eps2 = rng.normal_tensor(&[chunk.len(), k]);
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, params);
        let phi = bound.embed(&mut tape, &labels)?;
        let nodes = composite_graph(&mut tape, &bound, phi, &x, &eps1, &eps2, weights)?;
        let b = nodes.breakdown(&tape);
        acc.rec += b.rec;
        acc.cycle += b.cycle;
        acc.latent += b.latent;
        acc.total += b.total;
        batches += 1.0;
    }
    acc.rec /= batches;
    acc.cycle /= batches;
    acc.latent /= batches;
    acc.total /= batches;
    Ok(acc)
}

/// Train the five-network stack with the composite objective. The cycle
/// decoder rides along on a detached content-reconstruction fit. Returns the
/// best-validation parameters (early stopping) and per-epoch logs.
pub fn train_c2hm(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &LabeledDataset,
) -> Result<TrainedC2hm> {
    cfg.validate()?;
    if data.len() == 0 {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    let base = SeededRng::new(cfg.seed);
    let mut init_rng = base.derive(1);
    let mut shuffle_rng = base.derive(2);
    let mut noise_rng = base.derive(3);

    let mut params = C2hmParams::init(model_cfg, &mut init_rng)?;
    let names = params.param_names();
    let mut opt = AdamState::new(&params.param_tensors(), names, cfg.lr);

    let (n_train, n_val) = split_train_val(data.len(), cfg.val_fraction);
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n_train + n_val).collect();
    let k = params.dims.latent_dim;

    let mut logs = Vec::new();
    let mut best: Option<(f64, C2hmParams)> = None;
    let mut bad_epochs = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order = train_idx.clone();
        shuffle_rng.shuffle(&mut order);

        let mut acc = LossBreakdown::default();
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = data.batch(chunk)?;
            let eps1 = noise_rng.normal_tensor(&[chunk.len(), k]);
            let eps2 = noise_rng.normal_tensor(&[chunk.len(), k]);

            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &params);
            let phi = bound.embed(&mut tape, &labels)?;
            let nodes = composite_graph(&mut tape, &bound, phi, &x, &eps1, &eps2, &cfg.weights)?;
            let fit = content_fit_graph(&mut tape, &bound, nodes.cycle.phi, nodes.cycle.z2_sample)?;
            let objective = tape.add(nodes.total, fit)?;

            let grads = tape.backward(objective)?;
            let ids = bound.param_ids();
            let grad_tensors: Vec<Tensor> = ids.iter().map(|&id| grads.wrt(&tape, id)).collect();
            let b = nodes.breakdown(&tape);
            drop(tape);

            let mut tensors = params.param_tensors_mut();
            opt.step(&mut tensors, &grad_tensors)?;

            acc.rec += b.rec;
            acc.cycle += b.cycle;
            acc.latent += b.latent;
            acc.total += b.total;
            batches += 1.0;
        }
        acc.rec /= batches;
        acc.cycle /= batches;
        acc.latent /= batches;
        acc.total /= batches;

        if !params.all_finite() {
            return Err(Error::NonFinite {
                what: format!("model parameters after epoch {epoch}"),
            });
        }

        let mut eval_rng = base.derive(1000 + epoch as u64);
        let (val_total, steer_idx): (f64, &[usize]) = if val_idx.is_empty() {
            (acc.total, &train_idx)
        } else {
            let b = eval_breakdown(
                &params,
                data,
                &val_idx,
                cfg.batch_size,
                &cfg.weights,
                &mut eval_rng,
            )?;
            (b.total, &val_idx)
        };
        let steer_n = steer_idx.len().min(256);
        let (steer_x, steer_labels) = data.batch(&steer_idx[..steer_n])?;
        let steer = entropy_steer_proxy(
            &params,
            &steer_x,
            &steer_labels,
            &mut eval_rng,
            cfg.sigma_obs,
        )?
        .total;

        logs.push(EpochLog {
            epoch,
            train: acc,
            val_total,
            steer,
            seconds: started.elapsed().as_secs_f64(),
        });

        match &best {
            Some((best_val, _)) if val_total >= best_val - cfg.min_delta => {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_total, params.clone()));
                bad_epochs = 0;
            }
        }
    }

    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok(TrainedC2hm {
        params,
        logs,
        optimizer_steps: opt.step_count(),
    })
}

/// One wake step: sample z from the recognition path on real data (gradients
/// blocked), then fit the generative side {goal_embed, sim, dec} by maximum
/// likelihood of the observation and of z under the conditional prior.
/// Recognition parameters are untouched.
pub fn wake_phase(
    params: &mut C2hmParams,
    images: &Tensor,
    labels: &[usize],
    rng: &mut SeededRng,
    opt: &mut AdamState,
    sigma_obs: f64,
) -> Result<f64> {
    let batch = labels.len();
    let k = params.dims.latent_dim;
    let obs_dim = params.dims.obs_dim as f64;

    // recognition sample, computed outside the tape so no gradients flow back
    let (enc_mean, enc_lv) = params.cycle_encode_batch(images)?;
    let eps = rng.normal_tensor(&[batch, k]);
    let mut z = enc_mean;
    for ((zv, lv), e) in z.data_mut().iter_mut().zip(enc_lv.data()).zip(eps.data()) {
        *zv += (0.5 * lv).exp() * e;
    }

    let var = sigma_obs * sigma_obs;
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, params);

    // -log p(psi | z) under fixed observation noise
    let z_node = tape.leaf(z.clone());
    let x_hat = bound.decode(&mut tape, z_node)?;
    let x_node = tape.leaf(images.clone());
    let sse = tape.sq_err_sum(x_node, x_hat)?;
    let recon_quad = tape.scale(sse, 0.5 / (batch as f64 * var))?;
    let recon = tape.add_scalar(recon_quad, 0.5 * obs_dim * (LOG_2PI + var.ln()))?;

    // -log q(z | phi): fit the conditional prior to the recognition sample
    let phi = bound.embed(&mut tape, labels)?;
    let g = bound.simulate(&mut tape, phi)?;
    let diff = tape.sub(z_node, g.mean)?;
    let d2 = tape.hadamard(diff, diff)?;
    let neg_lv = tape.scale(g.log_var, -1.0)?;
    let inv_var = tape.exp(neg_lv)?;
    let quad = tape.hadamard(d2, inv_var)?;
    let terms = tape.add(quad, g.log_var)?;
    let s = tape.sum(terms);
    let prior_quad = tape.scale(s, 0.5 / batch as f64)?;
    let prior_nll = tape.add_scalar(prior_quad, 0.5 * k as f64 * LOG_2PI)?;

    let loss = tape.add(recon, prior_nll)?;
    let grads = tape.backward(loss)?;
    let ids = bound.param_ids();
    let gen = params.generative_indices();
    let grad_tensors: Vec<Tensor> = gen.iter().map(|&i| grads.wrt(&tape, ids[i])).collect();
    let loss_value = tape.value(loss).scalar_value()?;
    drop(tape);

    let mut all = params.param_tensors_mut();
    let mut subset: Vec<&mut Tensor> = Vec::with_capacity(gen.len());
    for (i, t) in all.iter_mut().enumerate() {
        if gen.contains(&i) {
            subset.push(*t);
        }
    }
    opt.step(&mut subset, &grad_tensors)?;
    Ok(loss_value)
}

/// One sleep step: dream z ~ N(0, I), decode pseudo-data, and fit the cycle
/// encoder's mean head to recover z by squared error. Generative parameters
/// are untouched.
pub fn sleep_phase(
    params: &mut C2hmParams,
    rng: &mut SeededRng,
    opt: &mut AdamState,
    batch_size: usize,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::Contract("sleep batch size must be positive".into()));
    }
    let k = params.dims.latent_dim;
    let z_dream = rng.normal_tensor(&[batch_size, k]);
    let psi_dream = params.decode_batch(&z_dream)?;

    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, params);
    let psi_node = tape.leaf(psi_dream);
    let g = bound.cycle_encode(&mut tape, psi_node)?;
    let z_node = tape.leaf(z_dream);
    let loss = tape.sq_err_mean(g.mean, z_node)?;

    let grads = tape.backward(loss)?;
    let ids = bound.param_ids();
    // the sleep optimizer owns exactly the cycle-encoder tensors
    let enc_range = params.cyc_enc_param_range();
    let grad_tensors: Vec<Tensor> = enc_range
        .clone()
        .map(|i| grads.wrt(&tape, ids[i]))
        .collect();
    let loss_value = tape.value(loss).scalar_value()?;
    drop(tape);

    let mut all = params.param_tensors_mut();
    let mut subset: Vec<&mut Tensor> = Vec::with_capacity(enc_range.len());
    for (i, t) in all.iter_mut().enumerate() {
        if enc_range.contains(&i) {
            subset.push(*t);
        }
    }
    opt.step(&mut subset, &grad_tensors)?;
    Ok(loss_value)
}

/// Wake-sleep baseline: one wake and one sleep step per batch, same
/// architecture and logging as the cycle-consistent trainer. Validation uses
/// the composite breakdown so both models are scored with one yardstick.
pub fn train_wakesleep(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &LabeledDataset,
) -> Result<TrainedWakeSleep> {
    cfg.validate()?;
    if data.len() == 0 {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    let base = SeededRng::new(cfg.seed);
    let mut init_rng = base.derive(1);
    let mut shuffle_rng = base.derive(2);
    let mut noise_rng = base.derive(3);

    let mut params = C2hmParams::init(model_cfg, &mut init_rng)?;
    let names = params.param_names();
    let gen = params.generative_indices();
    let enc_range = params.cyc_enc_param_range();

    let all = params.param_tensors();
    let gen_tensors: Vec<&Tensor> = gen.iter().map(|&i| all[i]).collect();
    let gen_names: Vec<String> = gen.iter().map(|&i| names[i].clone()).collect();
    let enc_tensors: Vec<&Tensor> = enc_range.clone().map(|i| all[i]).collect();
    let enc_names: Vec<String> = enc_range.clone().map(|i| names[i].clone()).collect();
    let mut wake_opt = AdamState::new(&gen_tensors, gen_names, cfg.lr);
    let mut sleep_opt = AdamState::new(&enc_tensors, enc_names, cfg.lr);
    drop(all);

    let (n_train, n_val) = split_train_val(data.len(), cfg.val_fraction);
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n_train + n_val).collect();

    let mut logs = Vec::new();
    let mut best: Option<(f64, C2hmParams)> = None;
    let mut bad_epochs = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order = train_idx.clone();
        shuffle_rng.shuffle(&mut order);

        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = data.batch(chunk)?;
            wake_phase(
                &mut params,
                &x,
                &labels,
                &mut noise_rng,
                &mut wake_opt,
                cfg.sigma_obs,
            )?;
            sleep_phase(&mut params, &mut noise_rng, &mut sleep_opt, chunk.len())?;
        }

        if !params.all_finite() {
            return Err(Error::NonFinite {
                what: format!("model parameters after epoch {epoch}"),
            });
        }

        let mut eval_rng = base.derive(1000 + epoch as u64);
        let train_eval_n = train_idx.len().min(1024);
        let train_b = eval_breakdown(
            &params,
            data,
            &train_idx[..train_eval_n],
            cfg.batch_size,
            &cfg.weights,
            &mut eval_rng,
        )?;
        let (val_total, steer_idx): (f64, &[usize]) = if val_idx.is_empty() {
            (train_b.total, &train_idx)
        } else {
            let b = eval_breakdown(
                &params,
                data,
                &val_idx,
                cfg.batch_size,
                &cfg.weights,
                &mut eval_rng,
            )?;
            (b.total, &val_idx)
        };
        let steer_n = steer_idx.len().min(256);
        let (steer_x, steer_labels) = data.batch(&steer_idx[..steer_n])?;
        let steer = entropy_steer_proxy(
            &params,
            &steer_x,
            &steer_labels,
            &mut eval_rng,
            cfg.sigma_obs,
        )?
        .total;

        logs.push(EpochLog {
            epoch,
            train: train_b,
            val_total,
            steer,
            seconds: started.elapsed().as_secs_f64(),
        });

        match &best {
            Some((best_val, _)) if val_total >= best_val - cfg.min_delta => {
                bad_epochs += 1;
                if bad_epochs >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_total, params.clone()));
                bad_epochs = 0;
            }
        }
    }

    let params = best.map(|(_, p)| p).unwrap_or(params);
    Ok(TrainedWakeSleep {
        params,
        logs,
        wake_steps: wake_opt.step_count(),
        sleep_steps: sleep_opt.step_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, ModelDims};

    fn tiny_model_cfg() -> ModelConfig {
        ModelConfig {
            dims: ModelDims {
                content_dim: 2,
                latent_dim: 3,
                obs_dim: 6,
                num_classes: 4,
            },
            hidden_dim: 8,
            hidden_layers: 1,
            dec_output: Activation::Sigmoid,
        }
    }

    fn toy_dataset(n: usize, seed: u64) -> LabeledDataset {
        // each class is a noisy corner of the 6-cube
        let mut rng = SeededRng::new(seed);
        let mut images = Vec::with_capacity(n * 6);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 4;
            for j in 0..6 {
                let base = if (class >> (j % 2)) & 1 == 1 { 0.8 } else { 0.2 };
                images.push((base + 0.05 * rng.standard_normal()).clamp(0.0, 1.0));
            }
            labels.push(class);
        }
        LabeledDataset::new(Tensor::new(vec![n, 6], images).unwrap(), labels, "toy").unwrap()
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0]).unwrap();
        let mut opt = AdamState::unnamed(&[&p], 1e-3);
        let before = p.clone();
        let zero = Tensor::zeros(&[2]);
        let mut params = [&mut p];
        opt.step(&mut params, &[zero]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_converges_on_scalar_quadratic() {
        // minimize f(w) = w^2 from w0 = 1
        let mut w = Tensor::scalar(1.0);
        let mut opt = AdamState::unnamed(&[&w], 1e-2);
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * w.data()[0]);
            let mut params = [&mut w];
            opt.step(&mut params, &[g]).unwrap();
        }
        assert!(w.data()[0].abs() < 1e-3, "w = {}", w.data()[0]);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut w = Tensor::scalar(0.0);
        let mut opt = AdamState::unnamed(&[&w], 1e-3);
        let g = Tensor::scalar(1.0);
        let mut params = [&mut w];
        opt.step(&mut params, &[g]).unwrap();
        let step = w.data()[0].abs();
        assert!((step - 1e-3).abs() < 1e-6, "step {step}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_rejects_nan_gradient_naming_tensor() {
        let mut w = Tensor::scalar(0.0);
        let mut opt = AdamState::new(&[&w], vec!["dec.l0.w".into()], 1e-3);
        let mut bad = Tensor::scalar(0.0);
        bad.data_mut()[0] = f64::NAN;
        let mut params = [&mut w];
        match opt.step(&mut params, &[bad]) {
            Err(Error::NonFinite { what }) => assert!(what.contains("dec.l0.w")),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn step_count_is_exact_for_640_samples_at_batch_64() {
        let data = toy_dataset(640, 1);
        let cfg = TrainConfig {
            epochs: 1,
            val_fraction: 0.0,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_c2hm(&tiny_model_cfg(), &cfg, &data).unwrap();
        assert_eq!(out.optimizer_steps, 10);
    }

    #[test]
    fn training_is_deterministic_and_loss_improves() {
        let data = toy_dataset(256, 2);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 32,
            lr: 3e-3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_c2hm(&tiny_model_cfg(), &cfg, &data).unwrap();
        let b = train_c2hm(&tiny_model_cfg(), &cfg, &data).unwrap();
        assert_eq!(a.logs.len(), b.logs.len());
        for (x, y) in a.logs.iter().zip(&b.logs) {
            assert_eq!(x.train.total.to_bits(), y.train.total.to_bits());
            assert_eq!(x.val_total.to_bits(), y.val_total.to_bits());
        }
        assert_eq!(a.params, b.params);
        let first = a.logs.first().unwrap().train.total;
        let last = a.logs.last().unwrap().train.total;
        assert!(last < first, "loss did not improve: {first} -> {last}");
    }

    #[test]
    fn wake_leaves_recognition_untouched_and_sleep_leaves_generative_untouched() {
        let data = toy_dataset(64, 7);
        let mut rng = SeededRng::new(11);
        let mut params = C2hmParams::init(&tiny_model_cfg(), &mut rng).unwrap();

        let names = params.param_names();
        let gen = params.generative_indices();
        let enc_range = params.cyc_enc_param_range();
        let all = params.param_tensors();
        let gen_tensors: Vec<&Tensor> = gen.iter().map(|&i| all[i]).collect();
        let enc_tensors: Vec<&Tensor> = enc_range.clone().map(|i| all[i]).collect();
        let mut wake_opt = AdamState::new(
            &gen_tensors,
            gen.iter().map(|&i| names[i].clone()).collect(),
            1e-3,
        );
        let mut sleep_opt = AdamState::new(
            &enc_tensors,
            enc_range.clone().map(|i| names[i].clone()).collect(),
            1e-3,
        );
        drop(all);

        let rec_before: Vec<Tensor> = params
            .recognition_indices()
            .iter()
            .map(|&i| params.param_tensors()[i].clone())
            .collect();
        let (x, labels) = data.batch(&(0..32).collect::<Vec<_>>()).unwrap();
        wake_phase(&mut params, &x, &labels, &mut rng, &mut wake_opt, 0.1).unwrap();
        let rec_after: Vec<Tensor> = params
            .recognition_indices()
            .iter()
            .map(|&i| params.param_tensors()[i].clone())
            .collect();
        assert_eq!(rec_before, rec_after, "wake touched recognition params");

        let gen_before: Vec<Tensor> = gen.iter().map(|&i| params.param_tensors()[i].clone()).collect();
        sleep_phase(&mut params, &mut rng, &mut sleep_opt, 32).unwrap();
        let gen_after: Vec<Tensor> = gen.iter().map(|&i| params.param_tensors()[i].clone()).collect();
        assert_eq!(gen_before, gen_after, "sleep touched generative params");
    }

    #[test]
    fn wake_loss_decreases_over_100_steps_on_toy_set() {
        let data = toy_dataset(64, 13);
        let mut rng = SeededRng::new(17);
        let mut params = C2hmParams::init(&tiny_model_cfg(), &mut rng).unwrap();
        let names = params.param_names();
        let gen = params.generative_indices();
        let all = params.param_tensors();
        let gen_tensors: Vec<&Tensor> = gen.iter().map(|&i| all[i]).collect();
        let mut opt = AdamState::new(
            &gen_tensors,
            gen.iter().map(|&i| names[i].clone()).collect(),
            3e-3,
        );
        drop(all);

        let idx: Vec<usize> = (0..64).collect();
        let (x, labels) = data.batch(&idx).unwrap();
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..100 {
            last = wake_phase(&mut params, &x, &labels, &mut rng, &mut opt, 0.1).unwrap();
            first.get_or_insert(last);
        }
        assert!(
            last < first.unwrap(),
            "wake loss did not improve: {} -> {last}",
            first.unwrap()
        );
    }

    #[test]
    fn sleep_recognition_error_decreases_and_dreams_are_deterministic() {
        let mut rng = SeededRng::new(19);
        let mut params = C2hmParams::init(&tiny_model_cfg(), &mut rng).unwrap();
        let names = params.param_names();
        let enc_range = params.cyc_enc_param_range();
        let all = params.param_tensors();
        let enc_tensors: Vec<&Tensor> = enc_range.clone().map(|i| all[i]).collect();
        let mut opt = AdamState::new(
            &enc_tensors,
            enc_range.clone().map(|i| names[i].clone()).collect(),
            3e-3,
        );
        drop(all);

        let mut sleep_rng = SeededRng::new(23);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..100 {
            last = sleep_phase(&mut params, &mut sleep_rng, &mut opt, 32).unwrap();
            first.get_or_insert(last);
        }
        assert!(last < first.unwrap(), "sleep error did not improve");

        // same seed, same dream batch
        let mut r1 = SeededRng::new(29);
        let mut r2 = SeededRng::new(29);
        assert_eq!(r1.normal_tensor(&[8, 3]), r2.normal_tensor(&[8, 3]));
    }

    #[test]
    fn wakesleep_alternation_counts_match() {
        let data = toy_dataset(128, 23);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            seed: 31,
            ..TrainConfig::default()
        };
        let out = train_wakesleep(&tiny_model_cfg(), &cfg, &data).unwrap();
        assert_eq!(out.wake_steps, out.sleep_steps);
        assert!(out.wake_steps > 0);
    }

    #[test]
    fn wakesleep_is_deterministic() {
        let data = toy_dataset(128, 37);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            seed: 41,
            ..TrainConfig::default()
        };
        let a = train_wakesleep(&tiny_model_cfg(), &cfg, &data).unwrap();
        let b = train_wakesleep(&tiny_model_cfg(), &cfg, &data).unwrap();
        assert_eq!(a.params, b.params);
        for (x, y) in a.logs.iter().zip(&b.logs) {
            assert_eq!(x.val_total.to_bits(), y.val_total.to_bits());
        }
    }
}
