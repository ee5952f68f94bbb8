use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::imgrep::{BinaryMask, Combo, PixelPlaneSet, Representation, ScalarMap};
use crate::nncore::{
    concat_channels, conv2d, conv2d_backward, decode_checkpoint, encode_checkpoint, maxpool2,
    maxpool2_backward, relu, relu_backward, softmax_channels, split_channels, upconv2,
    upconv2_backward, weighted_cross_entropy, LayerDesc, LayerParams, LossWeights, Pooled, Real,
    Tensor,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: Representation,
    pub in_channels: usize,
}

impl BranchSpec {
    pub fn new(name: Representation) -> Self {
        Self {
            name,
            in_channels: name.channels(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub branches: Vec<BranchSpec>,
    pub depth: usize,
    pub base_width: usize,
    pub convs_per_block: usize,
}

impl UNetConfig {
    pub fn new(branches: Vec<BranchSpec>, depth: usize, base_width: usize) -> Self {
        Self {
            branches,
            depth,
            base_width,
            convs_per_block: 2,
        }
    }

    /// One branch per member of `combo`, in canonical order.
    pub fn for_combo(combo: Combo, depth: usize, base_width: usize) -> Self {
        let branches = combo
            .representations()
            .into_iter()
            .map(BranchSpec::new)
            .collect();
        Self::new(branches, depth, base_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() || self.branches.len() > 4 {
            return Err(config_err(format!(
                "a model needs 1 to 4 branches, got {}",
                self.branches.len()
            )));
        }
        for b in &self.branches {
            if b.in_channels != b.name.channels() {
                return Err(config_err(format!(
                    "branch {} carries {} channels, not {}",
                    b.name,
                    b.name.channels(),
                    b.in_channels
                )));
            }
        }
        if self.depth == 0 || self.base_width == 0 || self.convs_per_block == 0 {
            return Err(config_err(
                "depth, base_width and convs_per_block must all be >= 1",
            ));
        }
        Ok(())
    }

    /// Feature width at scale `s`.
    pub fn width_at(&self, s: usize) -> usize {
        self.base_width << s
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if height == 0 || width == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
            return Err(config_err(format!(
                "input {height}x{width} is not divisible by 2^{} = {m}",
                self.depth
            )));
        }
        Ok(())
    }

    fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub(crate) fn enc_index(&self, branch: usize, scale: usize, i: usize) -> usize {
        (branch * (self.depth + 1) + scale) * self.convs_per_block + i
    }

    fn dec_base(&self) -> usize {
        self.n_branches() * (self.depth + 1) * self.convs_per_block
    }

    pub(crate) fn up_index(&self, scale: usize) -> usize {
        self.dec_base() + (self.depth - 1 - scale) * (1 + self.convs_per_block)
    }

    pub(crate) fn dec_index(&self, scale: usize, i: usize) -> usize {
        self.up_index(scale) + 1 + i
    }

    pub(crate) fn head_index(&self) -> usize {
        self.dec_base() + self.depth * (1 + self.convs_per_block)
    }

    pub fn layer_count(&self) -> usize {
        self.head_index() + 1
    }

    /// Descriptors of every layer in storage order.
    pub fn layer_descs(&self) -> Vec<LayerDesc> {
        let nb = self.n_branches();
        let mut descs = Vec::with_capacity(self.layer_count());
        for b in &self.branches {
            for s in 0..=self.depth {
                for i in 0..self.convs_per_block {
                    let cin = match (s, i) {
                        (0, 0) => b.in_channels,
                        (_, 0) => self.width_at(s - 1),
                        _ => self.width_at(s),
                    };
                    descs.push(LayerDesc::conv(3, cin, self.width_at(s)));
                }
            }
        }
        for s in (0..self.depth).rev() {
            let up_in = if s + 1 == self.depth {
                nb * self.width_at(self.depth)
            } else {
                self.width_at(s + 1)
            };
            descs.push(LayerDesc::upconv2(up_in, self.width_at(s)));
            for i in 0..self.convs_per_block {
                let cin = if i == 0 {
                    self.width_at(s) * (1 + nb)
                } else {
                    self.width_at(s)
                };
                descs.push(LayerDesc::conv(3, cin, self.width_at(s)));
            }
        }
        descs.push(LayerDesc::conv(1, self.width_at(0), 2));
        descs
    }

    pub fn param_count(&self) -> usize {
        self.layer_descs().iter().map(LayerDesc::param_count).sum()
    }

    fn check_bookkeeping(&self, descs: &[LayerDesc]) -> Result<()> {
        let last = self.convs_per_block - 1;
        for s in 0..self.depth {
            let skips: usize = (0..self.n_branches())
                .map(|b| descs[self.enc_index(b, s, last)].out_channels)
                .sum();
            let consumed = descs[self.dec_index(s, 0)].in_channels;
            let upsampled = descs[self.up_index(s)].out_channels;
            if consumed != upsampled + skips {
                return Err(config_err(format!(
                    "decoder scale {s} consumes {consumed} channels, expected {upsampled} + {skips}"
                )));
            }
        }
        let bottleneck: usize = (0..self.n_branches())
            .map(|b| descs[self.enc_index(b, self.depth, last)].out_channels)
            .sum();
        if descs[self.up_index(self.depth - 1)].in_channels != bottleneck {
            return Err(config_err(
                "bottleneck width does not match the first upsampling",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: UNetConfig,
    layers: Vec<LayerParams<T>>,
}

/// He-normal initialization from a seeded ChaCha8 stream.
pub fn build_model<T: Real>(config: &UNetConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let descs = config.layer_descs();
    config.check_bookkeeping(&descs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = descs
        .into_iter()
        .map(|d| LayerParams::he_normal(d, &mut rng))
        .collect();
    Ok(Model {
        config: config.clone(),
        layers,
    })
}

/// Weight and bias gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Parameter gradients in the model's layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> Gradients<T> {
    fn zeros_like(model: &Model<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).map(|v| v.as_f64()))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, f: T) {
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v *= f);
        }
    }
}

struct BlockTrace<T> {
    inputs: Vec<Tensor<T>>,
    outputs: Vec<Tensor<T>>,
}

struct Trace<T> {
    enc_blocks: Vec<Vec<BlockTrace<T>>>,
    pools: Vec<Vec<Pooled<T>>>,
    up_inputs: Vec<Option<Tensor<T>>>,
    dec_blocks: Vec<Option<BlockTrace<T>>>,
    head_input: Tensor<T>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointConfig {
    unet: UNetConfig,
    meta: serde_json::Value,
}

impl<T: Real> Model<T> {
    /// All parameters zero: both logits are 0 everywhere.
    pub fn zeros(config: &UNetConfig) -> Result<Self> {
        config.validate()?;
        let descs = config.layer_descs();
        config.check_bookkeeping(&descs)?;
        Ok(Self {
            config: config.clone(),
            layers: descs.into_iter().map(LayerParams::zeros).collect(),
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Weight and bias tensors of every layer, in storage order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.weight
                    .data()
                    .iter()
                    .chain(l.bias.data())
                    .map(|v| v.as_f64())
            })
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(config_err(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.weight.data_mut().iter_mut().chain(l.bias.data_mut()) {
                *v = T::lit(*it.next().expect("length checked"));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    desc: l.desc,
                    weight: l.weight.cast::<U>().with_grad(),
                    bias: l.bias.cast::<U>().with_grad(),
                })
                .collect(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(LayerParams::zero_grad);
    }

    /// Adds `grads` into the tensors' gradient buffers.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (a, &b) in l.weight.grad_mut().iter_mut().zip(&g.weight) {
                *a += b;
            }
            for (a, &b) in l.bias.grad_mut().iter_mut().zip(&g.bias) {
                *a += b;
            }
        }
    }

    /// Per-branch input tensors `(1, C, H, W)` for a plane set; branches are
    /// matched by representation name.
    pub fn inputs_from_planes(&self, planes: &PixelPlaneSet) -> Result<Vec<Tensor<T>>> {
        self.config.check_input(planes.height(), planes.width())?;
        self.config
            .branches
            .iter()
            .map(|b| {
                let r = planes.get(b.name).ok_or_else(|| {
                    config_err(format!(
                        "plane set {} has no {} plane",
                        planes.combo, b.name
                    ))
                })?;
                if r.channels() != b.in_channels {
                    return Err(config_err(format!(
                        "{} plane has {} channels, branch expects {}",
                        b.name,
                        r.channels(),
                        b.in_channels
                    )));
                }
                let data = r.data().iter().map(|&v| T::lit(v)).collect();
                Tensor::from_vec(&[1, r.channels(), r.height(), r.width()], data)
            })
            .collect()
    }

    fn check_inputs(&self, inputs: &[Tensor<T>]) -> Result<(usize, usize, usize)> {
        if inputs.len() != self.config.branches.len() {
            return Err(config_err(format!(
                "model has {} branches, got {} inputs",
                self.config.branches.len(),
                inputs.len()
            )));
        }
        let (b, _, h, w) = inputs[0].dims4()?;
        for (t, spec) in inputs.iter().zip(&self.config.branches) {
            let (b2, c2, h2, w2) = t.dims4()?;
            if (b2, h2, w2) != (b, h, w) || c2 != spec.in_channels {
                return Err(config_err(format!(
                    "input {:?} does not fit branch {} ({} channels, {b}x{h}x{w})",
                    t.shape(),
                    spec.name,
                    spec.in_channels
                )));
            }
        }
        self.config.check_input(h, w)?;
        Ok((b, h, w))
    }

    fn run_block(
        &self,
        first: usize,
        input: Tensor<T>,
        trace: Option<&mut Vec<BlockTrace<T>>>,
    ) -> Result<Tensor<T>> {
        let mut bt = BlockTrace {
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        let mut x = input;
        for i in 0..self.config.convs_per_block {
            let y = relu(&conv2d(&x, &self.layers[first + i])?);
            if trace.is_some() {
                bt.inputs.push(x);
                bt.outputs.push(y.clone());
            }
            x = y;
        }
        if let Some(t) = trace {
            t.push(bt);
        }
        Ok(x)
    }

    fn run(&self, inputs: &[Tensor<T>], keep: bool) -> Result<(Tensor<T>, Option<Trace<T>>)> {
        self.check_inputs(inputs)?;
        let cfg = &self.config;
        let (nb, depth) = (cfg.branches.len(), cfg.depth);
        let mut enc_blocks: Vec<Vec<BlockTrace<T>>> = (0..nb).map(|_| Vec::new()).collect();
        let mut pools: Vec<Vec<Pooled<T>>> = (0..nb).map(|_| Vec::new()).collect();
        let mut skips: Vec<Vec<Tensor<T>>> = (0..nb).map(|_| Vec::new()).collect();
        let mut bottlenecks = Vec::with_capacity(nb);

        for b in 0..nb {
            let mut x = inputs[b].clone();
            for s in 0..depth {
                let y = self.run_block(
                    cfg.enc_index(b, s, 0),
                    x,
                    keep.then_some(&mut enc_blocks[b]),
                )?;
                let pooled = maxpool2(&y)?;
                x = pooled.output.clone();
                skips[b].push(y);
                if keep {
                    pools[b].push(pooled);
                }
            }
            bottlenecks.push(self.run_block(
                cfg.enc_index(b, depth, 0),
                x,
                keep.then_some(&mut enc_blocks[b]),
            )?);
        }

        let mut cur = concat_channels(&bottlenecks.iter().collect::<Vec<_>>())?;
        drop(bottlenecks);
        let mut up_inputs: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        let mut dec_blocks: Vec<Option<BlockTrace<T>>> = (0..depth).map(|_| None).collect();
        for s in (0..depth).rev() {
            let up = upconv2(&cur, &self.layers[cfg.up_index(s)])?;
            let mut parts = vec![&up];
            parts.extend((0..nb).map(|b| &skips[b][s]));
            let cat = concat_channels(&parts)?;
            if keep {
                up_inputs[s] = Some(cur);
            }
            let mut bt = Vec::new();
            cur = self.run_block(cfg.dec_index(s, 0), cat, keep.then_some(&mut bt))?;
            dec_blocks[s] = bt.pop();
        }
        let logits = conv2d(&cur, &self.layers[cfg.head_index()])?;
        let trace = keep.then_some(Trace {
            enc_blocks,
            pools,
            up_inputs,
            dec_blocks,
            head_input: cur,
        });
        Ok((logits, trace))
    }

    /// Two-channel logits `(B, 2, H, W)` for per-branch inputs.
    pub fn forward_logits(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        Ok(self.run(inputs, false)?.0)
    }

    /// Glare probability per pixel for batched inputs, one map per item.
    pub fn predict_batch(&self, inputs: &[Tensor<T>]) -> Result<Vec<ScalarMap>> {
        let probs = softmax_channels(&self.forward_logits(inputs)?)?;
        let (b, _, h, w) = probs.dims4()?;
        let hw = h * w;
        (0..b)
            .map(|bi| {
                let start = bi * 2 * hw + hw;
                let data = probs.data()[start..start + hw]
                    .iter()
                    .map(|v| v.as_f64())
                    .collect();
                ScalarMap::new(h, w, data)
            })
            .collect()
    }

    /// Glare probability map for one image.
    pub fn forward(&self, planes: &PixelPlaneSet) -> Result<ScalarMap> {
        let inputs = self.inputs_from_planes(planes)?;
        Ok(self.predict_batch(&inputs)?.remove(0))
    }

    fn block_backward(
        &self,
        first: usize,
        bt: &BlockTrace<T>,
        mut g: Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        for i in (0..bt.inputs.len()).rev() {
            g = relu_backward(&bt.outputs[i], &g)?;
            let lg = conv2d_backward(&bt.inputs[i], &self.layers[first + i], &g)?;
            grads.layers[first + i] = LayerGrad {
                weight: lg.weight,
                bias: lg.bias,
            };
            g = lg.input;
        }
        Ok(g)
    }

    fn backprop(
        &self,
        trace: Trace<T>,
        dlogits: &Tensor<T>,
    ) -> Result<(Gradients<T>, Vec<Tensor<T>>)> {
        let cfg = &self.config;
        let (nb, depth) = (cfg.branches.len(), cfg.depth);
        let mut grads = Gradients::zeros_like(self);

        let head = cfg.head_index();
        let lg = conv2d_backward(&trace.head_input, &self.layers[head], dlogits)?;
        grads.layers[head] = LayerGrad {
            weight: lg.weight,
            bias: lg.bias,
        };
        let mut g = lg.input;

        let mut skip_grads: Vec<Vec<Option<Tensor<T>>>> = (0..nb)
            .map(|_| (0..depth).map(|_| None).collect())
            .collect();
        for s in 0..depth {
            let bt = trace.dec_blocks[s].as_ref().expect("traced");
            let gcat = self.block_backward(cfg.dec_index(s, 0), bt, g, &mut grads)?;
            let w = cfg.width_at(s);
            let mut parts = split_channels(&gcat, &vec![w; nb + 1])?.into_iter();
            let gup = parts.next().expect("nb + 1 parts");
            for (b, p) in parts.enumerate() {
                skip_grads[b][s] = Some(p);
            }
            let up = cfg.up_index(s);
            let up_in = trace.up_inputs[s].as_ref().expect("traced");
            let lg = upconv2_backward(up_in, &self.layers[up], &gup)?;
            grads.layers[up] = LayerGrad {
                weight: lg.weight,
                bias: lg.bias,
            };
            g = lg.input;
        }

        let bn_parts = split_channels(&g, &vec![cfg.width_at(depth); nb])?;
        let mut input_grads = Vec::with_capacity(nb);
        for (b, mut g) in bn_parts.into_iter().enumerate() {
            let blocks = &trace.enc_blocks[b];
            g = self.block_backward(cfg.enc_index(b, depth, 0), &blocks[depth], g, &mut grads)?;
            for s in (0..depth).rev() {
                g = maxpool2_backward(&trace.pools[b][s], &g)?;
                let skip = skip_grads[b][s].take().expect("set by decoder");
                for (a, &v) in g.data_mut().iter_mut().zip(skip.data()) {
                    *a += v;
                }
                g = self.block_backward(cfg.enc_index(b, s, 0), &blocks[s], g, &mut grads)?;
            }
            input_grads.push(g);
        }
        Ok((grads, input_grads))
    }

    /// Weighted cross-entropy loss and parameter gradients for batched
    /// inputs; `labels` and `weights` are laid out `(B, H, W)`.
    pub fn loss_and_grads(
        &self,
        inputs: &[Tensor<T>],
        labels: &[u8],
        weights: &[T],
    ) -> Result<(f64, Gradients<T>)> {
        let (loss, grads, _) = self.loss_and_all_grads(inputs, labels, weights)?;
        Ok((loss, grads))
    }

    /// As [`Model::loss_and_grads`], also returning gradients with respect
    /// to each branch input.
    pub fn loss_and_all_grads(
        &self,
        inputs: &[Tensor<T>],
        labels: &[u8],
        weights: &[T],
    ) -> Result<(f64, Gradients<T>, Vec<Tensor<T>>)> {
        let (logits, trace) = self.run(inputs, true)?;
        let (loss, dlogits) = weighted_cross_entropy(&logits, labels, weights)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: 0, loss });
        }
        let (grads, input_grads) = self.backprop(trace.expect("kept"), &dlogits)?;
        Ok((loss, grads, input_grads))
    }

    /// Loss and gradients for one image.
    pub fn backward(
        &self,
        planes: &PixelPlaneSet,
        labels: &BinaryMask,
        weights: &LossWeights,
    ) -> Result<(f64, Gradients<T>)> {
        let inputs = self.inputs_from_planes(planes)?;
        if (labels.height, labels.width) != (planes.height(), planes.width())
            || (weights.height, weights.width) != (planes.height(), planes.width())
        {
            return Err(config_err("labels/weights geometry differs from the image"));
        }
        let w: Vec<T> = weights.data.iter().map(|&v| T::lit(v)).collect();
        self.loss_and_grads(&inputs, &labels.data, &w)
    }

    /// Reorders branches: new branch `i` is old branch `perm[i]`. Encoder
    /// stacks move with their branch and the decoder layers that consume
    /// concatenated branch features have their input channels permuted, so
    /// the network computes the same function on correspondingly permuted
    /// inputs.
    pub fn permute_branches(&self, perm: &[usize]) -> Result<Model<T>> {
        let cfg = &self.config;
        let nb = cfg.branches.len();
        let mut seen = vec![false; nb];
        if perm.len() != nb
            || perm
                .iter()
                .any(|&p| p >= nb || std::mem::replace(&mut seen[p], true))
        {
            return Err(config_err(format!(
                "{perm:?} is not a permutation of {nb} branches"
            )));
        }
        let mut new_cfg = cfg.clone();
        new_cfg.branches = perm.iter().map(|&p| cfg.branches[p].clone()).collect();
        let mut layers = self.layers.clone();
        let per_branch = (cfg.depth + 1) * cfg.convs_per_block;
        for (new_b, &old_b) in perm.iter().enumerate() {
            for j in 0..per_branch {
                layers[new_b * per_branch + j] = self.layers[old_b * per_branch + j].clone();
            }
        }

        // Upsampling of the bottleneck: weight (C_in, O, 2, 2), C_in blocked by branch.
        let up = cfg.up_index(cfg.depth - 1);
        let wd = cfg.width_at(cfg.depth);
        let row = self.layers[up].desc.out_channels * 4;
        let src = self.layers[up].weight.data();
        let dst = layers[up].weight.data_mut();
        for (new_b, &old_b) in perm.iter().enumerate() {
            let n = wd * row;
            dst[new_b * n..(new_b + 1) * n].copy_from_slice(&src[old_b * n..(old_b + 1) * n]);
        }

        // First decoder conv per scale: weight (O, C_in, 3, 3), C_in = [up, skip_0, ...].
        for s in 0..cfg.depth {
            let idx = cfg.dec_index(s, 0);
            let w = cfg.width_at(s);
            let cin = self.layers[idx].desc.in_channels;
            let block = w * 9;
            let src = self.layers[idx].weight.data();
            let dst = layers[idx].weight.data_mut();
            for o in 0..self.layers[idx].desc.out_channels {
                let base = o * cin * 9;
                for (new_b, &old_b) in perm.iter().enumerate() {
                    let d = base + (1 + new_b) * block;
                    let s0 = base + (1 + old_b) * block;
                    dst[d..d + block].copy_from_slice(&src[s0..s0 + block]);
                }
            }
        }
        Ok(Model {
            config: new_cfg,
            layers,
        })
    }

    /// Serializes parameters with the config (plus free-form metadata)
    /// embedded in the header.
    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Result<Vec<u8>> {
        let json = serde_json::to_string(&CheckpointConfig {
            unet: self.config.clone(),
            meta,
        })?;
        let tensors: Vec<&Tensor<T>> = self
            .layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect();
        Ok(encode_checkpoint(&json, &tensors))
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        let ck = decode_checkpoint::<T>(bytes)?;
        let card: CheckpointConfig = serde_json::from_str(&ck.config_json)?;
        let mut model = Self::zeros(&card.unet)?;
        if ck.tensors.len() != 2 * model.layers.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                2 * model.layers.len(),
                ck.tensors.len()
            )));
        }
        let mut it = ck.tensors.into_iter();
        for l in &mut model.layers {
            let (w, b) = (it.next().unwrap(), it.next().unwrap());
            if w.shape() != l.weight.shape() || b.shape() != l.bias.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor shapes {:?}/{:?} do not match layer {:?}",
                    w.shape(),
                    b.shape(),
                    l.desc
                )));
            }
            l.weight = w.with_grad();
            l.bias = b.with_grad();
        }
        Ok((model, card.meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(reps: &[Representation], depth: usize, width: usize) -> UNetConfig {
        UNetConfig::new(
            reps.iter().map(|&r| BranchSpec::new(r)).collect(),
            depth,
            width,
        )
    }

    #[test]
    fn hand_counted_parameters() {
        // enc s0: 3→1 (27+1), 1→1 (9+1); bottleneck: 1→2 (18+2), 2→2 (36+2);
        // up 2→1 (8+1); dec: 2→1 (18+1), 1→1 (9+1); head 1→2 (2+2)
        let c = cfg(&[Representation::Rgb], 1, 1);
        let expected = 28 + 10 + 20 + 38 + 9 + 19 + 10 + 4;
        assert_eq!(c.param_count(), expected);
        let m: Model<f32> = build_model(&c, 0).unwrap();
        assert_eq!(m.param_count(), expected);
        assert_eq!(m.layers().len(), c.layer_count());
    }

    #[test]
    fn duplicate_branches_double_bottleneck() {
        let one = cfg(&[Representation::Rgb], 2, 4);
        let two = cfg(&[Representation::Rgb, Representation::Rgb], 2, 4);
        let d1 = one.layer_descs()[one.up_index(1)];
        let d2 = two.layer_descs()[two.up_index(1)];
        assert_eq!(d2.in_channels, 2 * d1.in_channels);
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let c = cfg(&[Representation::Rgb, Representation::C], 2, 3);
        let a: Model<f32> = build_model(&c, 7).unwrap();
        let b: Model<f32> = build_model(&c, 7).unwrap();
        let other: Model<f32> = build_model(&c, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn invalid_configs() {
        assert!(build_model::<f32>(&cfg(&[], 1, 1), 0).is_err());
        assert!(build_model::<f32>(&cfg(&[Representation::Rgb], 0, 1), 0).is_err());
        let mut bad = cfg(&[Representation::C], 1, 1);
        bad.branches[0].in_channels = 3;
        assert!(build_model::<f32>(&bad, 0).is_err());
        let c = cfg(&[Representation::Rgb], 3, 2);
        assert!(c.check_input(16, 16).is_ok());
        assert!(c.check_input(12, 16).is_err());
    }

    #[test]
    fn zero_model_outputs_half() {
        let c = cfg(&[Representation::Rgb, Representation::G], 2, 2);
        let m = Model::<f32>::zeros(&c).unwrap();
        let x =
            Tensor::from_vec(&[1, 3, 8, 8], (0..192).map(|v| v as f32 / 192.0).collect()).unwrap();
        let p = m.predict_batch(&[x.clone(), x]).unwrap();
        assert!(p[0].data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn wrong_inputs_rejected() {
        let c = cfg(&[Representation::Rgb], 1, 2);
        let m: Model<f32> = build_model(&c, 1).unwrap();
        assert!(m.forward_logits(&[Tensor::zeros(&[1, 1, 8, 8])]).is_err());
        assert!(m.forward_logits(&[Tensor::zeros(&[1, 3, 7, 8])]).is_err());
        assert!(m
            .forward_logits(&[Tensor::zeros(&[1, 3, 8, 8]), Tensor::zeros(&[1, 3, 8, 8])])
            .is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = cfg(&[Representation::Hsv, Representation::C], 2, 2);
        let m: Model<f32> = build_model(&c, 3).unwrap();
        let bytes = m
            .to_checkpoint(serde_json::json!({"combo": "C+HSV"}))
            .unwrap();
        let (back, meta) = Model::<f32>::from_checkpoint(&bytes).unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
        assert_eq!(back.config(), m.config());
        assert_eq!(meta["combo"], "C+HSV");
        assert_eq!(back.to_checkpoint(meta).unwrap(), bytes);
    }

    #[test]
    fn bad_permutation_rejected() {
        let c = cfg(&[Representation::Rgb, Representation::G], 1, 1);
        let m: Model<f64> = build_model(&c, 0).unwrap();
        assert!(m.permute_branches(&[0, 0]).is_err());
        assert!(m.permute_branches(&[0]).is_err());
        assert!(m.permute_branches(&[1, 0]).is_ok());
    }

    fn tiny_inputs(c: &UNetConfig, seed: u64) -> (Vec<Tensor<f64>>, Vec<u8>, Vec<f64>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = c
            .branches
            .iter()
            .map(|b| {
                let n = b.in_channels * 64;
                Tensor::from_vec(
                    &[1, b.in_channels, 8, 8],
                    (0..n).map(|_| rng.random::<f64>()).collect(),
                )
                .unwrap()
            })
            .collect();
        let labels = (0..64)
            .map(|i| u8::from((i / 8 + i % 8) % 3 == 0))
            .collect::<Vec<_>>();
        let weights = LossWeights::balanced(8, 8, &labels).unwrap().data;
        (inputs, labels, weights)
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let c = cfg(&[Representation::Rgb, Representation::C], 1, 2);
        let mut model: Model<f64> = build_model(&c, 11).unwrap();
        // zero biases put dead pixels exactly on the ReLU kink
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l in model.layers_mut() {
            for b in l.bias.data_mut() {
                *b = rand::Rng::random_range(&mut rng, -0.2..0.2);
            }
        }
        let (inputs, labels, weights) = tiny_inputs(&c, 5);
        let (_, grads) = model.loss_and_grads(&inputs, &labels, &weights).unwrap();
        let point = model.flat_params();
        let mut probe = model.clone();
        let check = crate::nncore::finite_diff_check(
            |p| {
                probe.set_flat_params(p).unwrap();
                probe.loss_and_grads(&inputs, &labels, &weights).unwrap().0
            },
            &point,
            &grads.flat(),
            1e-6,
        );
        assert!(check.max_rel_error < 1e-3, "{check:?}");
    }

    #[test]
    fn permuted_branches_compute_the_same_function() {
        let c = cfg(
            &[Representation::Rgb, Representation::Hsv, Representation::C],
            2,
            2,
        );
        let model: Model<f64> = build_model(&c, 2).unwrap();
        let (inputs, _, _) = tiny_inputs(&c, 9);
        let perm = [2, 0, 1];
        let permuted = model.permute_branches(&perm).unwrap();
        let reordered: Vec<_> = perm.iter().map(|&p| inputs[p].clone()).collect();
        let a = model.forward_logits(&inputs).unwrap();
        let b = permuted.forward_logits(&reordered).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
