use super::spec::{ModelSpec, Variant};
use crate::spectral::SpectralFrontEnd;
use crate::tensor::{
    batchnorm_backward, batchnorm_forward_eval, conv1d_backward_impl, batchnorm_forward_train, conv1d_forward,
    cross_entropy_loss, linear_backward, linear_forward, relu_backward, relu_forward, softmax,
    BatchNormParams, BatchStats, ConvParams, LinearParams, Tensor,
};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One `Conv1d -> BatchNorm -> ReLU` unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub conv: ConvParams,
    pub bn: BatchNormParams,
}

/// An instantiated classifier.
///
/// Batches enter as `(N, W, M)` and are transposed internally so metrics
/// become convolution channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    blocks: Vec<Block>,
    head: LinearParams,
    frontend: Option<SpectralFrontEnd>,
}

/// Activations kept from a training-mode forward pass.
struct Activations {
    conv_in: Vec<Tensor>,
    bn_in: Vec<Tensor>,
    relu_in: Vec<Tensor>,
    flat: Tensor,
    stats: Vec<BatchStats>,
}

impl Network {
    /// Deterministic in `(spec, seed)`. The variant does not consume any
    /// randomness, so both variants built from the same seed share weights.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(spec.blocks());
        let mut c_in = spec.metrics;
        for &c_out in &spec.channel_plan {
            blocks.push(Block {
                conv: ConvParams::init_uniform(c_in, c_out, spec.kernel, spec.stride, spec.padding, &mut rng),
                bn: BatchNormParams::new(c_out),
            });
            c_in = c_out;
        }
        let head = LinearParams::init_uniform(spec.head_in_features()?, spec.classes, &mut rng);
        let frontend = match spec.variant {
            Variant::DeepConv => None,
            Variant::DeepFft => Some(SpectralFrontEnd::new(spec.window)?),
        };
        Ok(Network {
            spec: spec.clone(),
            blocks,
            head,
            frontend,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn head(&self) -> &LinearParams {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut LinearParams {
        &mut self.head
    }

    pub fn frontend(&self) -> Option<&SpectralFrontEnd> {
        self.frontend.as_ref()
    }

    fn prepare(&self, batch: &Tensor) -> Result<Tensor> {
        let (_, w, m) = batch.dims3("network forward")?;
        if w != self.spec.window || m != self.spec.metrics {
            return Err(Error::shape(
                "network forward",
                format!(
                    "batch {:?}, model expects (N, {}, {})",
                    batch.shape(),
                    self.spec.window,
                    self.spec.metrics
                ),
            ));
        }
        let x = batch.transpose_last2()?;
        match &self.frontend {
            Some(fe) => fe.apply(&x),
            None => Ok(x),
        }
    }

    fn head_forward(&self, features: Tensor) -> Result<(Tensor, Tensor)> {
        let n = features.shape()[0];
        let flat = features.reshape(&[n, self.head.in_features()])?;
        let logits = linear_forward(&flat, &self.head)?;
        Ok((logits, flat))
    }

    fn forward_train_impl(&self, batch: &Tensor) -> Result<(Tensor, Activations)> {
        let mut x = self.prepare(batch)?;
        let nb = self.blocks.len();
        let mut acts = Activations {
            conv_in: Vec::with_capacity(nb),
            bn_in: Vec::with_capacity(nb),
            relu_in: Vec::with_capacity(nb),
            flat: Tensor::zeros(&[1]),
            stats: Vec::with_capacity(nb),
        };
        for block in &self.blocks {
            let z = conv1d_forward(&x, &block.conv)?;
            let (y, stats) = batchnorm_forward_train(&z, &block.bn)?;
            let a = relu_forward(&y);
            acts.conv_in.push(std::mem::replace(&mut x, a));
            acts.bn_in.push(z);
            acts.relu_in.push(y);
            acts.stats.push(stats);
        }
        let (logits, flat) = self.head_forward(x)?;
        acts.flat = flat;
        Ok((logits, acts))
    }

    /// Eval-mode logits using running batch-norm statistics. Each row depends
    /// only on its own sample.
    pub fn forward_eval(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = self.prepare(batch)?;
        for block in &self.blocks {
            let z = conv1d_forward(&x, &block.conv)?;
            x = relu_forward(&batchnorm_forward_eval(&z, &block.bn)?);
        }
        Ok(self.head_forward(x)?.0)
    }

    /// Logits for a `(N, W, M)` batch. Training mode normalizes with batch
    /// statistics and updates the running estimates.
    pub fn forward(&mut self, batch: &Tensor, training: bool) -> Result<Tensor> {
        if !training {
            return self.forward_eval(batch);
        }
        let (logits, acts) = self.forward_train_impl(batch)?;
        for (block, stats) in self.blocks.iter_mut().zip(&acts.stats) {
            block.bn.update_running(stats);
        }
        Ok(logits)
    }

    /// Class probabilities in eval mode.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        softmax(&self.forward_eval(batch)?)
    }

    /// Mean cross-entropy without side effects on running statistics.
    pub fn loss(&self, batch: &Tensor, labels: &[usize], training: bool) -> Result<f64> {
        let logits = if training {
            self.forward_train_impl(batch)?.0
        } else {
            self.forward_eval(batch)?
        };
        Ok(cross_entropy_loss(&logits, labels)?.0)
    }

    /// Training-mode forward and backward pass over one batch.
    ///
    /// Stores the gradient of the mean cross-entropy in every trainable
    /// parameter, updates the batch-norm running statistics and returns the
    /// loss. Fails with [`Error::GradientsNotReset`] if gradients from a
    /// previous call were not cleared with [`Network::zero_grad`].
    pub fn backward(&mut self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        if self.has_gradients() {
            return Err(Error::GradientsNotReset);
        }
        let (logits, acts) = self.forward_train_impl(batch)?;
        let (loss, grad_logits) = cross_entropy_loss(&logits, labels)?;

        let hg = linear_backward(&acts.flat, &self.head, &grad_logits)?;
        let last = acts.relu_in.last().expect("at least two blocks");
        let mut grad = hg.input.reshape(last.shape())?;

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate().rev() {
            let g_bn = relu_backward(&acts.relu_in[b], &grad)?;
            let bng = batchnorm_backward(&acts.bn_in[b], &block.bn, &g_bn)?;
            let (g_in, gw, gb) =
                conv1d_backward_impl(&acts.conv_in[b], &block.conv, &bng.input, b > 0)?;
            block_grads.push((gw, gb, bng.gamma, bng.beta));
            if let Some(g) = g_in {
                grad = g;
            }
        }

        self.head.weight.set_grad(hg.weight.into_data())?;
        self.head.bias.set_grad(hg.bias.into_data())?;
        for (block, (gw, gb, gg, gbeta)) in self.blocks.iter_mut().rev().zip(block_grads) {
            block.conv.weight.set_grad(gw.into_data())?;
            block.conv.bias.set_grad(gb.into_data())?;
            block.bn.gamma.set_grad(gg.into_data())?;
            block.bn.beta.set_grad(gbeta.into_data())?;
        }
        for (block, stats) in self.blocks.iter_mut().zip(&acts.stats) {
            block.bn.update_running(stats);
        }
        Ok(loss)
    }

    pub fn zero_grad(&mut self) {
        for p in self.trainable_params_mut() {
            p.clear_grad();
        }
    }

    pub fn has_gradients(&self) -> bool {
        self.trainable_params().iter().any(|(_, t)| t.grad().is_some())
    }

    /// Learnable tensors in a fixed order (block by block, then the head).
    pub fn trainable_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv.weight"), &b.conv.weight));
            out.push((format!("block{i}.conv.bias"), &b.conv.bias));
            out.push((format!("block{i}.bn.gamma"), &b.bn.gamma));
            out.push((format!("block{i}.bn.beta"), &b.bn.beta));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Same order as [`Network::trainable_params`].
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Every tensor needed to reproduce eval-mode outputs, including the
    /// batch-norm running statistics.
    pub fn state_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.conv.weight"), &b.conv.weight));
            out.push((format!("block{i}.conv.bias"), &b.conv.bias));
            out.push((format!("block{i}.bn.gamma"), &b.bn.gamma));
            out.push((format!("block{i}.bn.beta"), &b.bn.beta));
            out.push((format!("block{i}.bn.running_mean"), &b.bn.running_mean));
            out.push((format!("block{i}.bn.running_var"), &b.bn.running_var));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Same order as [`Network::state_tensors`].
    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
            out.push(&mut b.bn.running_mean);
            out.push(&mut b.bn.running_var);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_params().iter().map(|(_, t)| t.len()).sum()
    }
}
