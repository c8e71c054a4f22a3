//! The five-network architecture and its inference cycle.
//!
//! Content phi (goal embedding, dim d) feeds a latent simulator q(Z|phi)
//! over a bottleneck z (dim k), a decoder p(psi|z) produces the context
//! (dim D), and two auxiliary networks close the cycle: a cycle encoder
//! q(Z'|psi) and a cycle decoder p(phi_hat|Z'). Dimensions always satisfy
//! d <= k <= D.
//!
//! Two evaluation paths exist and agree bit-for-bit: plain batched forward
//! passes (used by metrics and the inference engine) and tape-recorded
//! graphs (used by training, where gradients are needed).

use crate::dist::{DiagonalGaussian, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{matmul_raw, NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation tag '{other}'"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

/// One dense layer: weight [out, in], bias [out], activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Tensor,
    pub b: Tensor,
    pub act: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases. `dims` lists layer widths
    /// in-to-out; hidden layers use `hidden_act`, the last layer `out_act`.
    pub fn init(
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Contract(format!(
                "mlp needs at least input and output dims, got {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = rng.uniform_tensor(&[fan_out, fan_in], -a, a);
            let b = Tensor::zeros(&[fan_out]);
            let act = if i + 2 == dims.len() { out_act } else { hidden_act };
            layers.push(Layer { w, b, act });
        }
        Ok(MlpParams { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Consecutive layer dimensions must chain.
    pub fn check_chain(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Contract(format!(
                    "mlp layer dims do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(())
    }

    /// Plain batched forward pass on x [batch, in] -> [batch, out].
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "mlp eval",
                left: x.shape().to_vec(),
                right: vec![self.in_dim()],
            });
        }
        let mut cur = x.clone();
        for layer in &self.layers {
            let (batch, n_in) = (cur.shape()[0], cur.shape()[1]);
            let n_out = layer.out_dim();
            let mut out = vec![0.0; batch * n_out];
            for i in 0..batch {
                let row = &cur.data()[i * n_in..(i + 1) * n_in];
                for o in 0..n_out {
                    let wrow = &layer.w.data()[o * n_in..(o + 1) * n_in];
                    // accumulate in index order so it matches the tape path bit-for-bit
                    let mut acc = 0.0;
                    for (xv, wv) in row.iter().zip(wrow) {
                        acc += xv * wv;
                    }
                    out[i * n_out + o] = layer.act.apply(acc + layer.b.data()[o]);
                }
            }
            cur = Tensor::new(vec![batch, n_out], out)?;
        }
        Ok(cur)
    }
}

/// Model dimensions; d <= k <= D always.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub content_dim: usize,
    pub latent_dim: usize,
    pub obs_dim: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.content_dim == 0
            || self.num_classes == 0
            || self.content_dim > self.latent_dim
            || self.latent_dim > self.obs_dim
        {
            return Err(Error::Contract(format!(
                "dims must satisfy 0 < d <= k <= D, got d={} k={} D={}",
                self.content_dim, self.latent_dim, self.obs_dim
            )));
        }
        Ok(())
    }
}

/// Architecture knobs used at initialization time.
#[derive(Clone, Copy, Debug)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub dec_output: Activation,
}

impl ModelConfig {
    /// Default MNIST architecture: d=16, k=32, D=784, two tanh hidden layers
    /// of width 256 per network, sigmoid decoder output.
    pub fn mnist_default() -> Self {
        ModelConfig {
            dims: ModelDims {
                content_dim: 16,
                latent_dim: 32,
                obs_dim: 784,
                num_classes: 10,
            },
            hidden_dim: 256,
            hidden_layers: 2,
            dec_output: Activation::Sigmoid,
        }
    }

    /// All-linear stack (no hidden layers), identity decoder output.
    pub fn linear(dims: ModelDims) -> Self {
        ModelConfig {
            dims,
            hidden_dim: 0,
            hidden_layers: 0,
            dec_output: Activation::Identity,
        }
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut v = vec![input];
        for _ in 0..self.hidden_layers {
            v.push(self.hidden_dim);
        }
        v.push(output);
        v
    }
}

/// Parameters of the five networks plus the goal embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct C2hmParams {
    pub dims: ModelDims,
    /// Content prior p(phi): one learned embedding row per class.
    pub goal_embed: Tensor,
    /// Latent simulator q(Z|phi): d -> (k mean, k log-var).
    pub sim: MlpParams,
    /// Decoder p(psi|z): k -> D.
    pub dec: MlpParams,
    /// Cycle encoder q(Z'|psi): D -> (k, k).
    pub cyc_enc: MlpParams,
    /// Cycle decoder p(phi_hat|Z'): k -> d.
    pub cyc_dec: MlpParams,
}

/// One pass around the cycle phi -> z -> psi_hat -> z' -> phi_hat.
#[derive(Clone, Debug)]
pub struct CycleOutputs {
    pub phi: Tensor,
    pub z_dist: DiagonalGaussian,
    pub z: Tensor,
    pub psi_hat: Tensor,
    pub z2_dist: DiagonalGaussian,
    pub z2: Tensor,
    pub phi_hat: Tensor,
}

impl C2hmParams {
    pub fn init(cfg: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.dims.validate()?;
        let ModelDims {
            content_dim: d,
            latent_dim: k,
            obs_dim: big_d,
            num_classes,
        } = cfg.dims;
        // embedding entries ~ N(0, 0.01)
        let mut goal_embed = rng.normal_tensor(&[num_classes, d]);
        for v in goal_embed.data_mut() {
            *v *= 0.1;
        }
        let sim = MlpParams::init(
            &cfg.widths(d, 2 * k),
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        let dec = MlpParams::init(&cfg.widths(k, big_d), Activation::Tanh, cfg.dec_output, rng)?;
        let cyc_enc = MlpParams::init(
            &cfg.widths(big_d, 2 * k),
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        let cyc_dec = MlpParams::init(
            &cfg.widths(k, d),
            Activation::Tanh,
            Activation::Identity,
            rng,
        )?;
        Ok(C2hmParams {
            dims: cfg.dims,
            goal_embed,
            sim,
            dec,
            cyc_enc,
            cyc_dec,
        })
    }

    /// Dimension chain d -> k -> D -> k -> d plus the d <= k <= D ordering.
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let ModelDims {
            content_dim: d,
            latent_dim: k,
            obs_dim: big_d,
            num_classes,
        } = self.dims;
        for mlp in [&self.sim, &self.dec, &self.cyc_enc, &self.cyc_dec] {
            mlp.check_chain()?;
        }
        let ok = self.goal_embed.shape() == [num_classes, d]
            && self.sim.in_dim() == d
            && self.sim.out_dim() == 2 * k
            && self.dec.in_dim() == k
            && self.dec.out_dim() == big_d
            && self.cyc_enc.in_dim() == big_d
            && self.cyc_enc.out_dim() == 2 * k
            && self.cyc_dec.in_dim() == k
            && self.cyc_dec.out_dim() == d;
        if !ok {
            return Err(Error::Contract(
                "network dimensions do not realize the d -> k -> D -> k -> d cycle".into(),
            ));
        }
        Ok(())
    }

    /// All parameter tensors in canonical order (embedding, then each
    /// network's layers as weight, bias). Optimizer state and checkpoints
    /// rely on this order being stable.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.goal_embed];
        for mlp in [&self.sim, &self.dec, &self.cyc_enc, &self.cyc_dec] {
            for layer in &mlp.layers {
                out.push(&layer.w);
                out.push(&layer.b);
            }
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.goal_embed];
        for mlp in [
            &mut self.sim,
            &mut self.dec,
            &mut self.cyc_enc,
            &mut self.cyc_dec,
        ] {
            for layer in &mut mlp.layers {
                out.push(&mut layer.w);
                out.push(&mut layer.b);
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = vec!["goal_embed".to_string()];
        for (name, mlp) in [
            ("sim", &self.sim),
            ("dec", &self.dec),
            ("cyc_enc", &self.cyc_enc),
            ("cyc_dec", &self.cyc_dec),
        ] {
            for (i, _) in mlp.layers.iter().enumerate() {
                out.push(format!("{name}.l{i}.w"));
                out.push(format!("{name}.l{i}.b"));
            }
        }
        out
    }

    /// Indices (into `param_tensors`) of the generative side:
    /// goal embedding, simulator, decoder.
    pub fn generative_indices(&self) -> Vec<usize> {
        let n_gen = 1 + 2 * (self.sim.layers.len() + self.dec.layers.len());
        (0..n_gen).collect()
    }

    /// Indices of the recognition side: cycle encoder and cycle decoder.
    pub fn recognition_indices(&self) -> Vec<usize> {
        let n_gen = 1 + 2 * (self.sim.layers.len() + self.dec.layers.len());
        let total = n_gen + 2 * (self.cyc_enc.layers.len() + self.cyc_dec.layers.len());
        (n_gen..total).collect()
    }

    /// Canonical index range of just the cycle-encoder tensors.
    pub fn cyc_enc_param_range(&self) -> std::ops::Range<usize> {
        let start = 1 + 2 * (self.sim.layers.len() + self.dec.layers.len());
        start..start + 2 * self.cyc_enc.layers.len()
    }

    pub fn all_finite(&self) -> bool {
        self.param_tensors().iter().all(|t| t.all_finite())
    }

    // ---- plain evaluation -------------------------------------------------

    /// Embedding row for a class label.
    pub fn embed_goal(&self, label: usize) -> Result<Tensor> {
        if label >= self.dims.num_classes {
            return Err(Error::Contract(format!(
                "label {label} out of range for {} classes",
                self.dims.num_classes
            )));
        }
        self.goal_embed.row(label)
    }

    /// Embedding rows for a batch of labels, stacked [batch, d].
    pub fn embed_goal_batch(&self, labels: &[usize]) -> Result<Tensor> {
        let rows: Vec<Tensor> = labels
            .iter()
            .map(|&l| self.embed_goal(l))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = rows.iter().collect();
        Tensor::stack_rows(&refs)
    }

    fn gaussian_from_heads(&self, heads: &Tensor, row: usize) -> Result<DiagonalGaussian> {
        let k = self.dims.latent_dim;
        let mean = Tensor::new(vec![k], heads.data()[row * 2 * k..row * 2 * k + k].to_vec())?;
        let log_var = Tensor::new(
            vec![k],
            heads.data()[row * 2 * k + k..(row + 1) * 2 * k].to_vec(),
        )?;
        DiagonalGaussian::new(mean, log_var)
    }

    /// q(Z|phi) for a single content vector.
    pub fn simulate_latent(&self, phi: &Tensor) -> Result<DiagonalGaussian> {
        let batch = phi.clone().reshaped(vec![1, self.dims.content_dim])?;
        let heads = self.sim.eval(&batch)?;
        self.gaussian_from_heads(&heads, 0)
    }

    /// q(Z|phi) heads for a batch [batch, d] -> (means, clamped log-vars), each [batch, k].
    pub fn simulate_latent_batch(&self, phi: &Tensor) -> Result<(Tensor, Tensor)> {
        let heads = self.sim.eval(phi)?;
        split_heads(&heads, self.dims.latent_dim)
    }

    /// Decoder mean for a single latent.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let batch = z.clone().reshaped(vec![1, self.dims.latent_dim])?;
        let out = self.dec.eval(&batch)?;
        out.reshaped(vec![self.dims.obs_dim])
    }

    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor> {
        self.dec.eval(z)
    }

    /// q(Z'|psi) for one observation.
    pub fn cycle_encode(&self, psi: &Tensor) -> Result<DiagonalGaussian> {
        let batch = psi.clone().reshaped(vec![1, self.dims.obs_dim])?;
        let heads = self.cyc_enc.eval(&batch)?;
        self.gaussian_from_heads(&heads, 0)
    }

    pub fn cycle_encode_batch(&self, psi: &Tensor) -> Result<(Tensor, Tensor)> {
        let heads = self.cyc_enc.eval(psi)?;
        split_heads(&heads, self.dims.latent_dim)
    }

    /// Content reconstruction from a cycle latent.
    pub fn cycle_decode(&self, z2: &Tensor) -> Result<Tensor> {
        let batch = z2.clone().reshaped(vec![1, self.dims.latent_dim])?;
        let out = self.cyc_dec.eval(&batch)?;
        out.reshaped(vec![self.dims.content_dim])
    }

    pub fn cycle_decode_batch(&self, z2: &Tensor) -> Result<Tensor> {
        self.cyc_dec.eval(z2)
    }

    /// One full cycle phi -> z -> psi_hat -> z' -> phi_hat with
    /// reparameterized sampling at both latent stages.
    pub fn full_cycle(&self, phi: &Tensor, rng: &mut SeededRng) -> Result<CycleOutputs> {
        if phi.len() != self.dims.content_dim {
            return Err(Error::ShapeMismatch {
                op: "full_cycle",
                left: phi.shape().to_vec(),
                right: vec![self.dims.content_dim],
            });
        }
        let z_dist = self.simulate_latent(phi)?;
        let z = z_dist.sample_reparam(rng);
        let psi_hat = self.decode(&z)?;
        let z2_dist = self.cycle_encode(&psi_hat)?;
        let z2 = z2_dist.sample_reparam(rng);
        let phi_hat = self.cycle_decode(&z2)?;
        Ok(CycleOutputs {
            phi: phi.clone(),
            z_dist,
            z,
            psi_hat,
            z2_dist,
            z2,
            phi_hat,
        })
    }

    /// Deterministic prediction psi_hat(phi) = decode(mean of q(Z|phi)); the
    /// forward sweep used by the refinement loop.
    pub fn predict_mean(&self, phi: &Tensor) -> Result<Tensor> {
        let g = self.simulate_latent(phi)?;
        self.decode(g.mean())
    }
}

/// Split a [batch, 2k] head tensor into clamped (means, log-vars).
pub fn split_heads(heads: &Tensor, k: usize) -> Result<(Tensor, Tensor)> {
    if heads.rank() != 2 || heads.shape()[1] != 2 * k {
        return Err(Error::ShapeMismatch {
            op: "split_heads",
            left: heads.shape().to_vec(),
            right: vec![2 * k],
        });
    }
    let b = heads.shape()[0];
    let mut mean = Vec::with_capacity(b * k);
    let mut log_var = Vec::with_capacity(b * k);
    for i in 0..b {
        let row = &heads.data()[i * 2 * k..(i + 1) * 2 * k];
        mean.extend_from_slice(&row[..k]);
        log_var.extend(row[k..].iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)));
    }
    Ok((
        Tensor::new(vec![b, k], mean)?,
        Tensor::new(vec![b, k], log_var)?,
    ))
}

// ---- tape-recorded graphs --------------------------------------------------

/// Mean/log-variance head pair on the tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianNodes {
    pub mean: NodeId,
    pub log_var: NodeId,
}

#[derive(Clone, Debug)]
pub struct BoundLayer {
    pub w: NodeId,
    pub b: NodeId,
    pub act: Activation,
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundLayer>,
}

/// Parameter leaves registered on a tape, in canonical parameter order.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub dims: ModelDims,
    pub goal_embed: NodeId,
    pub sim: BoundMlp,
    pub dec: BoundMlp,
    pub cyc_enc: BoundMlp,
    pub cyc_dec: BoundMlp,
}

fn bind_mlp(tape: &mut Tape, mlp: &MlpParams) -> BoundMlp {
    let layers = mlp
        .layers
        .iter()
        .map(|l| BoundLayer {
            w: tape.leaf(l.w.clone()),
            b: tape.leaf(l.b.clone()),
            act: l.act,
        })
        .collect();
    BoundMlp { layers }
}

impl BoundModel {
    pub fn bind(tape: &mut Tape, params: &C2hmParams) -> BoundModel {
        BoundModel {
            dims: params.dims,
            goal_embed: tape.leaf(params.goal_embed.clone()),
            sim: bind_mlp(tape, &params.sim),
            dec: bind_mlp(tape, &params.dec),
            cyc_enc: bind_mlp(tape, &params.cyc_enc),
            cyc_dec: bind_mlp(tape, &params.cyc_dec),
        }
    }

    /// Assemble a bound model from leaf ids that already exist on a tape,
    /// in canonical parameter order. `structure` supplies only the layer
    /// counts, activations, and dims; values flow from the tape leaves.
    /// Used by gradient checking, where the leaves are created externally.
    pub fn bind_to_existing(ids: &[NodeId], structure: &C2hmParams) -> Result<BoundModel> {
        let expect = structure.param_tensors().len();
        if ids.len() != expect {
            return Err(Error::Contract(format!(
                "bind_to_existing got {} ids for {expect} parameters",
                ids.len()
            )));
        }
        let mut cursor = ids.iter().copied();
        let goal_embed = cursor.next().unwrap();
        let mut take_mlp = |mlp: &MlpParams| -> BoundMlp {
            let layers = mlp
                .layers
                .iter()
                .map(|l| BoundLayer {
                    w: cursor.next().unwrap(),
                    b: cursor.next().unwrap(),
                    act: l.act,
                })
                .collect();
            BoundMlp { layers }
        };
        Ok(BoundModel {
            dims: structure.dims,
            goal_embed,
            sim: take_mlp(&structure.sim),
            dec: take_mlp(&structure.dec),
            cyc_enc: take_mlp(&structure.cyc_enc),
            cyc_dec: take_mlp(&structure.cyc_dec),
        })
    }

    /// Leaf ids in the same order as `C2hmParams::param_tensors`.
    pub fn param_ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.goal_embed];
        for mlp in [&self.sim, &self.dec, &self.cyc_enc, &self.cyc_dec] {
            for layer in &mlp.layers {
                out.push(layer.w);
                out.push(layer.b);
            }
        }
        out
    }

    pub fn embed(&self, tape: &mut Tape, labels: &[usize]) -> Result<NodeId> {
        tape.gather_rows(self.goal_embed, labels.to_vec())
    }

    pub fn simulate(&self, tape: &mut Tape, phi: NodeId) -> Result<GaussianNodes> {
        let heads = mlp_forward(tape, &self.sim, phi)?;
        gaussian_heads(tape, heads, self.dims.latent_dim)
    }

    pub fn decode(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        mlp_forward(tape, &self.dec, z)
    }

    pub fn cycle_encode(&self, tape: &mut Tape, psi: NodeId) -> Result<GaussianNodes> {
        let heads = mlp_forward(tape, &self.cyc_enc, psi)?;
        gaussian_heads(tape, heads, self.dims.latent_dim)
    }

    pub fn cycle_decode(&self, tape: &mut Tape, z2: NodeId) -> Result<NodeId> {
        mlp_forward(tape, &self.cyc_dec, z2)
    }
}

/// Batched MLP forward on the tape: x [batch, in] -> [batch, out].
pub fn mlp_forward(tape: &mut Tape, mlp: &BoundMlp, x: NodeId) -> Result<NodeId> {
    let mut cur = x;
    for layer in &mlp.layers {
        let wt = tape.transpose(layer.w)?;
        let lin = tape.matmul(cur, wt)?;
        let lin = tape.add(lin, layer.b)?;
        cur = match layer.act {
            Activation::Sigmoid => tape.sigmoid(lin),
            Activation::Tanh => tape.tanh(lin),
            Activation::Identity => lin,
        };
    }
    Ok(cur)
}

/// Split a [batch, 2k] head node into mean and clamped log-variance.
pub fn gaussian_heads(tape: &mut Tape, heads: NodeId, k: usize) -> Result<GaussianNodes> {
    let mean = tape.slice_cols(heads, 0, k)?;
    let lv_raw = tape.slice_cols(heads, k, k)?;
    let log_var = tape.clamp(lv_raw, LOG_VAR_MIN, LOG_VAR_MAX)?;
    Ok(GaussianNodes { mean, log_var })
}

/// Reparameterized sample node: mean + exp(log_var/2) * eps.
pub fn reparam_sample(tape: &mut Tape, g: GaussianNodes, eps: &Tensor) -> Result<NodeId> {
    let half_lv = tape.scale(g.log_var, 0.5)?;
    let std = tape.exp(half_lv)?;
    let eps_node = tape.leaf(eps.clone());
    let noise = tape.hadamard(std, eps_node)?;
    tape.add(g.mean, noise)
}

/// Node ids of one tape-recorded cycle pass over a batch.
#[derive(Clone, Copy, Debug)]
pub struct CycleNodes {
    pub phi: NodeId,
    pub z: GaussianNodes,
    pub z_sample: NodeId,
    pub psi_hat: NodeId,
    pub z2: GaussianNodes,
    pub z2_sample: NodeId,
    pub phi_hat: NodeId,
}

/// Record the full cycle phi -> z -> psi_hat -> z' -> phi_hat on one tape.
/// `eps1`/`eps2` carry the sampling noise so the graph stays a pure function.
pub fn full_cycle_graph(
    tape: &mut Tape,
    bound: &BoundModel,
    phi: NodeId,
    eps1: &Tensor,
    eps2: &Tensor,
) -> Result<CycleNodes> {
    let z = bound.simulate(tape, phi)?;
    let z_sample = reparam_sample(tape, z, eps1)?;
    let psi_hat = bound.decode(tape, z_sample)?;
    let z2 = bound.cycle_encode(tape, psi_hat)?;
    let z2_sample = reparam_sample(tape, z2, eps2)?;
    let phi_hat = bound.cycle_decode(tape, z2_sample)?;
    Ok(CycleNodes {
        phi,
        z,
        z_sample,
        psi_hat,
        z2,
        z2_sample,
        phi_hat,
    })
}

/// Plain matmul on tensors (shared helper).
pub(crate) fn matmul_plain(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Tensor::new(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n))
}
