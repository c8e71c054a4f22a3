//! Training objectives: the three-term composite loss, the variational
//! bottleneck objective, and the entropy-steering diagnostic.
//!
//! Squared-error terms are means over batch and elements (not sums); the
//! observation likelihood treats the decoder output as a Gaussian mean with
//! fixed noise `sigma_obs`.

use crate::error::Result;
use crate::model::{
    gaussian_heads, mlp_forward, reparam_sample, BoundModel, C2hmParams, CycleNodes,
    CycleOutputs,
};
use crate::rng::SeededRng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

const LOG_2PI: f64 = 1.837877066409345483560659472811;

/// Fixed observation noise for Gaussian likelihood proxies.
pub const DEFAULT_SIGMA_OBS: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_z: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 0.1,
            lambda_z: 0.01,
            beta: 1.0,
        }
    }
}

/// Per-term values of the composite objective;
/// total = rec + lambda_cyc * cycle + lambda_z * latent.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub rec: f64,
    pub cycle: f64,
    pub latent: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(rec: f64, cycle: f64, latent: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            rec,
            cycle,
            latent,
            total: rec + w.lambda_cyc * cycle + w.lambda_z * latent,
        }
    }
}

/// Mean per-element squared error between an observation and its
/// reconstruction.
pub fn rec_loss(x: &Tensor, x_hat: &Tensor) -> Result<f64> {
    x.mse(x_hat)
}

/// Same reduction applied to the second (re-decoded) reconstruction.
pub fn loop_loss(x: &Tensor, x_loop: &Tensor) -> Result<f64> {
    x.mse(x_loop)
}

/// Mean squared difference between first-pass and re-encoded latent means.
pub fn latent_align_loss(z: &Tensor, z_cycle: &Tensor) -> Result<f64> {
    z.mse(z_cycle)
}

/// Composite loss evaluated on a finished cycle pass. The second
/// reconstruction is re-decoded from the cycle latent here, which needs the
/// decoder, hence the params argument.
pub fn composite_loss(
    params: &C2hmParams,
    cycle: &CycleOutputs,
    x: &Tensor,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let rec = rec_loss(x, &cycle.psi_hat)?;
    let x_loop = params.decode(&cycle.z2)?;
    let cyc = loop_loss(x, &x_loop)?;
    let latent = latent_align_loss(cycle.z_dist.mean(), cycle.z2_dist.mean())?;
    Ok(LossBreakdown::combine(rec, cyc, latent, w))
}

/// Tape nodes of the composite objective over a batch.
#[derive(Clone, Copy, Debug)]
pub struct CompositeNodes {
    pub cycle: CycleNodes,
    pub x: NodeId,
    pub x_loop: NodeId,
    pub rec: NodeId,
    pub loop_term: NodeId,
    pub latent: NodeId,
    pub total: NodeId,
}

impl CompositeNodes {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            rec: tape.value(self.rec).data()[0],
            cycle: tape.value(self.loop_term).data()[0],
            latent: tape.value(self.latent).data()[0],
            total: tape.value(self.total).data()[0],
        }
    }
}

/// Record the composite objective for a batch on the tape:
/// one full cycle plus the re-decoded second reconstruction.
///
/// `phi` is [batch, d], `x` is the matching [batch, D] observation batch,
/// `eps1`/`eps2` are [batch, k] noise draws.
pub fn composite_graph(
    tape: &mut Tape,
    bound: &BoundModel,
    phi: NodeId,
    x: &Tensor,
    eps1: &Tensor,
    eps2: &Tensor,
    w: &LossWeights,
) -> Result<CompositeNodes> {
    let cycle = crate::model::full_cycle_graph(tape, bound, phi, eps1, eps2)?;
    let x_node = tape.leaf(x.clone());
    let rec = tape.sq_err_mean(x_node, cycle.psi_hat)?;
    let x_loop = bound.decode(tape, cycle.z2_sample)?;
    let loop_term = tape.sq_err_mean(x_node, x_loop)?;
    let latent = tape.sq_err_mean(cycle.z.mean, cycle.z2.mean)?;
    let scaled_cyc = tape.scale(loop_term, w.lambda_cyc)?;
    let scaled_lat = tape.scale(latent, w.lambda_z)?;
    let partial = tape.add(scaled_cyc, scaled_lat)?;
    let total = tape.add(rec, partial)?;
    Ok(CompositeNodes {
        cycle,
        x: x_node,
        x_loop,
        rec,
        loop_term,
        latent,
        total,
    })
}

/// Content-reconstruction fit for the cycle decoder, with gradients blocked
/// from flowing anywhere else: mse(stop(phi), cyc_dec(stop(z2_sample))).
/// The composite objective of the five-network stack never touches the cycle
/// decoder, so it is fit on the side from the cycle pass it rides along with.
pub fn content_fit_graph(
    tape: &mut Tape,
    bound: &BoundModel,
    phi: NodeId,
    z2_sample: NodeId,
) -> Result<NodeId> {
    let phi_stop = tape.detach(phi);
    let z2_stop = tape.detach(z2_sample);
    let phi_hat = bound.cycle_decode(tape, z2_stop)?;
    tape.sq_err_mean(phi_stop, phi_hat)
}

/// Tape nodes of the variational bottleneck objective.
#[derive(Clone, Copy, Debug)]
pub struct VbNodes {
    pub recon: NodeId,
    pub kl: NodeId,
    pub total: NodeId,
}

/// Record the variational bottleneck objective on the tape:
/// E[-log p(psi|z)] + beta * KL(q(Z|phi) || N(0, I)), single-sample
/// reparameterized estimate averaged over the batch.
pub fn vb_graph(
    tape: &mut Tape,
    bound: &BoundModel,
    phi: NodeId,
    psi: &Tensor,
    eps: &Tensor,
    beta: f64,
    sigma_obs: f64,
) -> Result<VbNodes> {
    let batch = psi.shape()[0] as f64;
    let obs_dim = psi.shape()[1] as f64;
    let var = sigma_obs * sigma_obs;

    let g = bound.simulate(tape, phi)?;
    let z = reparam_sample(tape, g, eps)?;
    let x_hat = bound.decode(tape, z)?;
    let psi_node = tape.leaf(psi.clone());
    let sse = tape.sq_err_sum(psi_node, x_hat)?;
    let recon_quad = tape.scale(sse, 0.5 / (batch * var))?;
    let recon = tape.add_scalar(recon_quad, 0.5 * obs_dim * (LOG_2PI + var.ln()))?;

    // 0.5/batch * sum(mu^2 + exp(lv) - 1 - lv)
    let mu2 = tape.hadamard(g.mean, g.mean)?;
    let ev = tape.exp(g.log_var)?;
    let sum_terms = tape.add(mu2, ev)?;
    let lv_plus_one = tape.add_scalar(g.log_var, 1.0)?;
    let inner = tape.sub(sum_terms, lv_plus_one)?;
    let kl_sum = tape.sum(inner);
    let kl = tape.scale(kl_sum, 0.5 / batch)?;

    let scaled_kl = tape.scale(kl, beta)?;
    let total = tape.add(recon, scaled_kl)?;
    Ok(VbNodes { recon, kl, total })
}

/// Single-sample variational bottleneck value for a batch of
/// (content, context) pairs.
pub fn vb_loss(
    params: &C2hmParams,
    phi: &Tensor,
    psi: &Tensor,
    beta: f64,
    rng: &mut SeededRng,
    sigma_obs: f64,
) -> Result<f64> {
    let batch = psi.shape()[0];
    let eps = rng.normal_tensor(&[batch, params.dims.latent_dim]);
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, params);
    let phi_node = tape.leaf(phi.clone());
    let nodes = vb_graph(&mut tape, &bound, phi_node, psi, &eps, beta, sigma_obs)?;
    tape.value(nodes.total).scalar_value()
}

/// Entropy-steering diagnostic: conditional-uncertainty proxies for the two
/// legs of the generative path.
#[derive(Clone, Copy, Debug)]
pub struct SteerProxy {
    /// H(psi|Z) proxy: cross-entropy of the observation under the decoded
    /// Gaussian with fixed noise. Equals 0.5*D*log(2*pi*e*sigma^2) at perfect
    /// reconstruction.
    pub context_given_latent: f64,
    /// H(Z|phi): mean closed-form entropy of the simulator Gaussian.
    pub latent_given_content: f64,
    pub total: f64,
}

/// Diagnostic scalar H(psi|Z) + H(Z|phi) over a labeled batch. Draws the
/// [batch, k] latent noise from `rng` in one block before any computation.
pub fn entropy_steer_proxy(
    params: &C2hmParams,
    images: &Tensor,
    labels: &[usize],
    rng: &mut SeededRng,
    sigma_obs: f64,
) -> Result<SteerProxy> {
    if labels.is_empty() || images.rows() != labels.len() {
        return Err(crate::error::Error::Contract(format!(
            "entropy_steer_proxy needs a non-empty batch with matching labels, got {} images / {} labels",
            images.rows(),
            labels.len()
        )));
    }
    let batch = labels.len();
    let k = params.dims.latent_dim;
    let obs_dim = params.dims.obs_dim as f64;
    let eps = rng.normal_tensor(&[batch, k]);

    let phi = params.embed_goal_batch(labels)?;
    let (mean, log_var) = params.simulate_latent_batch(&phi)?;

    // reparameterized z = mean + exp(lv/2) * eps
    let mut z = mean.clone();
    for ((zv, lv), e) in z
        .data_mut()
        .iter_mut()
        .zip(log_var.data())
        .zip(eps.data())
    {
        *zv += (0.5 * lv).exp() * e;
    }
    let x_hat = params.decode_batch(&z)?;

    let var = sigma_obs * sigma_obs;
    let sse: f64 = images
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let context_given_latent =
        0.5 * obs_dim * (LOG_2PI + 1.0 + var.ln()) + sse / (2.0 * var * batch as f64);

    // mean over the batch of 0.5 * sum_k (log 2*pi*e + lv)
    let latent_given_content = log_var
        .data()
        .iter()
        .map(|lv| 0.5 * (LOG_2PI + 1.0 + lv))
        .sum::<f64>()
        / batch as f64;

    Ok(SteerProxy {
        context_given_latent,
        latent_given_content,
        total: context_given_latent + latent_given_content,
    })
}

/// H(psi|phi) proxy used by the refinement loop: cross-entropy of the
/// observation under the deterministic forward prediction psi_hat(phi).
pub fn context_entropy_proxy(
    params: &C2hmParams,
    phi: &Tensor,
    psi_obs: &Tensor,
    sigma_obs: f64,
) -> Result<f64> {
    let pred = params.predict_mean(phi)?;
    let var = sigma_obs * sigma_obs;
    let obs_dim = params.dims.obs_dim as f64;
    let sse: f64 = psi_obs
        .data()
        .iter()
        .zip(pred.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * obs_dim * (LOG_2PI + 1.0 + var.ln()) + sse / (2.0 * var))
}
