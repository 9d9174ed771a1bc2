//! The two-stage transmission-regression network and its training loop.
//!
//! Stage 1 splits the cardinal (R, G, B) planes, runs an independent 3x3
//! filter bank over each, and fuses the three responses per filter index
//! with an elementwise max, yielding H x W x 32 haze features. Stage 2
//! refines them with parallel 3x3 / 5x5 / 7x7 banks (16 filters each),
//! concatenates to 48 channels, max-pools spatially over a 7x7 stride-1
//! window, applies a final 5x5 convolution down to one channel, and clamps
//! with BiReLU so the output is a valid transmission map. The whole graph is
//! fully convolutional: trained on patches, applied to any image size.

use crate::classical::{dark_channel, estimate_airlight, recover_scene, DEFAULT_FRACTION,
    DEFAULT_PATCH, DEFAULT_T_FLOOR};
use crate::error::{Error, Result};
use crate::io::{self, atomic_write};
use crate::nn::{
    birelu_backward, birelu_forward, channel_group_max_backward, channel_group_max_with_argmax,
    concat_channels, conv2d_backward, conv2d_forward, maxpool_spatial_backward,
    maxpool_spatial_forward, split_channels, BiReLU, Conv2DLayer, GroupArgmax, PoolArgmax,
    SGDConfig,
};
use crate::raster::{Airlight, Image, TransmissionMap};
use crate::synth::DatasetManifest;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

/// Stage-1 filter count (per cardinal channel, and after fusion).
pub const STAGE1_FILTERS: usize = 32;
/// Filters per multi-scale bank.
pub const MS_FILTERS: usize = 16;
/// Kernel sizes of the three multi-scale banks.
pub const MS_KERNELS: [usize; 3] = [3, 5, 7];
/// Channels after multi-scale concatenation.
pub const CONCAT_CHANNELS: usize = 48;
/// Spatial pooling window (stride 1).
pub const POOL_WINDOW: usize = 7;
/// Kernel size of the final convolution.
pub const FINAL_KERNEL: usize = 5;

/// Samples processed per forward/backward slice inside training; batches are
/// split into slices of this size to bound peak memory. Gradients are
/// accumulated in sample order, so the slice width never changes results.
const MICRO_BATCH: usize = 16;

/// All learnable parameters plus the output activation bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    stage1: [Conv2DLayer; 3],
    stage2_ms: [Conv2DLayer; 3],
    stage2_final: Conv2DLayer,
    birelu: BiReLU,
}

impl NetworkParams {
    /// Glorot-uniform initialization of every bank, zero biases, BiReLU
    /// bounds [0, 1]. A given seed always produces the same parameters.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stage1 = [
            Conv2DLayer::init(3, 3, 1, STAGE1_FILTERS, &mut rng).expect("static shape"),
            Conv2DLayer::init(3, 3, 1, STAGE1_FILTERS, &mut rng).expect("static shape"),
            Conv2DLayer::init(3, 3, 1, STAGE1_FILTERS, &mut rng).expect("static shape"),
        ];
        let stage2_ms = [
            Conv2DLayer::init(3, 3, STAGE1_FILTERS, MS_FILTERS, &mut rng).expect("static shape"),
            Conv2DLayer::init(5, 5, STAGE1_FILTERS, MS_FILTERS, &mut rng).expect("static shape"),
            Conv2DLayer::init(7, 7, STAGE1_FILTERS, MS_FILTERS, &mut rng).expect("static shape"),
        ];
        let stage2_final =
            Conv2DLayer::init(FINAL_KERNEL, FINAL_KERNEL, CONCAT_CHANNELS, 1, &mut rng)
                .expect("static shape");
        NetworkParams {
            stage1,
            stage2_ms,
            stage2_final,
            birelu: BiReLU::default(),
        }
    }

    /// Assembles a network from explicit layers, enforcing the architecture
    /// shape contract.
    pub fn from_parts(
        stage1: [Conv2DLayer; 3],
        stage2_ms: [Conv2DLayer; 3],
        stage2_final: Conv2DLayer,
        birelu: BiReLU,
    ) -> Result<Self> {
        let p = NetworkParams {
            stage1,
            stage2_ms,
            stage2_final,
            birelu,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks every kernel against its required shape and that all values
    /// are finite.
    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.stage1.iter().enumerate() {
            let expect = [3, 3, 1, STAGE1_FILTERS];
            if layer.kernel().shape() != expect {
                return Err(Error::shape("stage-1 kernel", &layer.kernel().shape(), &expect));
            }
            if !layer.kernel().all_finite() || !layer.bias().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("stage-1 layer {i}")));
            }
        }
        for (i, layer) in self.stage2_ms.iter().enumerate() {
            let k = MS_KERNELS[i];
            let expect = [k, k, STAGE1_FILTERS, MS_FILTERS];
            if layer.kernel().shape() != expect {
                return Err(Error::shape(
                    "multi-scale kernel",
                    &layer.kernel().shape(),
                    &expect,
                ));
            }
            if !layer.kernel().all_finite() || !layer.bias().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("multi-scale layer {i}")));
            }
        }
        let expect = [FINAL_KERNEL, FINAL_KERNEL, CONCAT_CHANNELS, 1];
        if self.stage2_final.kernel().shape() != expect {
            return Err(Error::shape(
                "final kernel",
                &self.stage2_final.kernel().shape(),
                &expect,
            ));
        }
        if !self.stage2_final.kernel().all_finite()
            || !self.stage2_final.bias().iter().all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("final layer".into()));
        }
        Ok(())
    }

    pub fn stage1(&self, i: usize) -> &Conv2DLayer {
        &self.stage1[i]
    }

    pub fn stage1_mut(&mut self, i: usize) -> &mut Conv2DLayer {
        &mut self.stage1[i]
    }

    pub fn stage2_ms(&self, i: usize) -> &Conv2DLayer {
        &self.stage2_ms[i]
    }

    pub fn stage2_ms_mut(&mut self, i: usize) -> &mut Conv2DLayer {
        &mut self.stage2_ms[i]
    }

    pub fn stage2_final(&self) -> &Conv2DLayer {
        &self.stage2_final
    }

    pub fn stage2_final_mut(&mut self) -> &mut Conv2DLayer {
        &mut self.stage2_final
    }

    pub fn birelu(&self) -> &BiReLU {
        &self.birelu
    }

    /// One plain SGD step over every parameter group:
    /// `p <- p - learning_rate * g`. Gradients must be structurally
    /// congruent with the parameters.
    pub fn sgd_step(&mut self, grads: &NetworkGrads, learning_rate: f64) -> Result<()> {
        use crate::nn::{sgd_update, sgd_update_slice};
        for (layer, g) in self.stage1.iter_mut().zip(&grads.stage1) {
            sgd_update(layer.kernel_mut(), &g.kernel, learning_rate)?;
            sgd_update_slice(layer.bias_mut(), &g.bias, learning_rate)?;
        }
        for (layer, g) in self.stage2_ms.iter_mut().zip(&grads.stage2_ms) {
            sgd_update(layer.kernel_mut(), &g.kernel, learning_rate)?;
            sgd_update_slice(layer.bias_mut(), &g.bias, learning_rate)?;
        }
        sgd_update(
            self.stage2_final.kernel_mut(),
            &grads.stage2_final.kernel,
            learning_rate,
        )?;
        sgd_update_slice(
            self.stage2_final.bias_mut(),
            &grads.stage2_final.bias,
            learning_rate,
        )?;
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to one layer's parameters.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    fn zeros_like(layer: &Conv2DLayer) -> Self {
        LayerGrads {
            kernel: Tensor::zeros(layer.kernel().shape()),
            bias: vec![0.0; layer.bias().len()],
        }
    }

    fn add_assign(&mut self, other: &LayerGrads) -> Result<()> {
        self.kernel.add_scaled(&other.kernel, 1.0)?;
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
        Ok(())
    }
}

/// Gradients for the full parameter set, mirroring [`NetworkParams`].
#[derive(Clone, Debug)]
pub struct NetworkGrads {
    pub stage1: [LayerGrads; 3],
    pub stage2_ms: [LayerGrads; 3],
    pub stage2_final: LayerGrads,
}

impl NetworkGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        NetworkGrads {
            stage1: [
                LayerGrads::zeros_like(&params.stage1[0]),
                LayerGrads::zeros_like(&params.stage1[1]),
                LayerGrads::zeros_like(&params.stage1[2]),
            ],
            stage2_ms: [
                LayerGrads::zeros_like(&params.stage2_ms[0]),
                LayerGrads::zeros_like(&params.stage2_ms[1]),
                LayerGrads::zeros_like(&params.stage2_ms[2]),
            ],
            stage2_final: LayerGrads::zeros_like(&params.stage2_final),
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) -> Result<()> {
        for (a, b) in self.stage1.iter_mut().zip(&other.stage1) {
            a.add_assign(b)?;
        }
        for (a, b) in self.stage2_ms.iter_mut().zip(&other.stage2_ms) {
            a.add_assign(b)?;
        }
        self.stage2_final.add_assign(&other.stage2_final)
    }
}

/// Activations retained by a training-mode forward pass for the backward
/// pass.
pub struct ForwardCache {
    planes: [Tensor; 3],
    group_arg: GroupArgmax,
    features: Tensor,
    pool_arg: PoolArgmax,
    pooled: Tensor,
    pre_act: Tensor,
}

fn check_batch_rgb(input: &Tensor) -> Result<()> {
    let (_, _, _, c) = input.dims();
    if c != 3 {
        return Err(Error::shape(
            "network input channels",
            &input.shape(),
            &[input.shape()[0], input.shape()[1], input.shape()[2], 3],
        ));
    }
    Ok(())
}

fn stage1_batch(params: &NetworkParams, input: &Tensor) -> Result<(Tensor, [Tensor; 3], GroupArgmax)> {
    check_batch_rgb(input)?;
    let mut planes = split_channels(input, &[1, 1, 1])?;
    let psi_b = conv2d_forward(&planes[2], &params.stage1[2])?;
    let psi_g = conv2d_forward(&planes[1], &params.stage1[1])?;
    let psi_r = conv2d_forward(&planes[0], &params.stage1[0])?;
    let (fused, arg) = channel_group_max_with_argmax(&psi_r, &psi_g, &psi_b)?;
    let plane_b = planes.pop().expect("three planes");
    let plane_g = planes.pop().expect("three planes");
    let plane_r = planes.pop().expect("three planes");
    Ok((fused, [plane_r, plane_g, plane_b], arg))
}

fn check_features(features: &Tensor) -> Result<()> {
    let (_, _, _, c) = features.dims();
    if c != STAGE1_FILTERS {
        return Err(Error::shape(
            "stage-2 input channels",
            &features.shape(),
            &[
                features.shape()[0],
                features.shape()[1],
                features.shape()[2],
                STAGE1_FILTERS,
            ],
        ));
    }
    Ok(())
}

fn stage2_batch(
    params: &NetworkParams,
    features: &Tensor,
) -> Result<(Tensor, PoolArgmax, Tensor, Tensor)> {
    check_features(features)?;
    let ms: Vec<Tensor> = params
        .stage2_ms
        .iter()
        .map(|layer| conv2d_forward(features, layer))
        .collect::<Result<_>>()?;
    let cat = concat_channels(&[&ms[0], &ms[1], &ms[2]])?;
    debug_assert_eq!(cat.shape()[3], CONCAT_CHANNELS);
    let (pooled, pool_arg) = maxpool_spatial_forward(&cat, POOL_WINDOW, 1)?;
    let pre_act = conv2d_forward(&pooled, &params.stage2_final)?;
    let out = birelu_forward(&pre_act, &params.birelu);
    Ok((out, pool_arg, pooled, pre_act))
}

/// Batched prediction without gradient bookkeeping: [N, H, W, 3] in,
/// [N, H, W, 1] out, values inside the BiReLU bounds.
pub fn forward_batch(params: &NetworkParams, input: &Tensor) -> Result<Tensor> {
    let (features, _, _) = stage1_batch(params, input)?;
    let (out, _, _, _) = stage2_batch(params, &features)?;
    Ok(out)
}

/// Training-mode forward pass, retaining what the backward pass needs.
pub fn forward_train(params: &NetworkParams, input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let (features, planes, group_arg) = stage1_batch(params, input)?;
    let (out, pool_arg, pooled, pre_act) = stage2_batch(params, &features)?;
    Ok((
        out,
        ForwardCache {
            planes,
            group_arg,
            features,
            pool_arg,
            pooled,
            pre_act,
        },
    ))
}

/// Backpropagates `grad_pred` (gradient of the loss w.r.t. the network
/// output) through the cached graph, returning parameter gradients.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_pred: &Tensor,
) -> Result<NetworkGrads> {
    let g_pre = birelu_backward(&cache.pre_act, &params.birelu, grad_pred)?;
    let final_grads = conv2d_backward(&cache.pooled, &params.stage2_final, &g_pre)?;
    let g_cat = maxpool_spatial_backward(&cache.pool_arg, &final_grads.input)?;
    let g_ms = split_channels(&g_cat, &[MS_FILTERS, MS_FILTERS, MS_FILTERS])?;

    let mut g_features = Tensor::zeros(cache.features.shape());
    let mut ms_grads = Vec::with_capacity(3);
    for (layer, g_out) in params.stage2_ms.iter().zip(&g_ms) {
        let g = conv2d_backward(&cache.features, layer, g_out)?;
        g_features.add_scaled(&g.input, 1.0)?;
        ms_grads.push(LayerGrads {
            kernel: g.kernel,
            bias: g.bias,
        });
    }

    let g_psi = channel_group_max_backward(&cache.group_arg, &g_features)?;
    let mut s1_grads = Vec::with_capacity(3);
    for ((layer, plane), g_out) in params.stage1.iter().zip(&cache.planes).zip(&g_psi) {
        let g = conv2d_backward(plane, layer, g_out)?;
        s1_grads.push(LayerGrads {
            kernel: g.kernel,
            bias: g.bias,
        });
    }

    let mut s1 = s1_grads.into_iter();
    let mut ms = ms_grads.into_iter();
    Ok(NetworkGrads {
        stage1: [
            s1.next().expect("three stage-1 grads"),
            s1.next().expect("three stage-1 grads"),
            s1.next().expect("three stage-1 grads"),
        ],
        stage2_ms: [
            ms.next().expect("three multi-scale grads"),
            ms.next().expect("three multi-scale grads"),
            ms.next().expect("three multi-scale grads"),
        ],
        stage2_final: LayerGrads {
            kernel: final_grads.kernel,
            bias: final_grads.bias,
        },
    })
}

/// MSE of the network prediction against a target batch.
pub fn loss_on_batch(params: &NetworkParams, input: &Tensor, target: &Tensor) -> Result<f64> {
    let pred = forward_batch(params, input)?;
    let (loss, _) = crate::nn::mse_loss(&pred, target)?;
    Ok(loss)
}

/// MSE loss and its gradient w.r.t. every parameter group, in one pass.
pub fn grads_on_batch(
    params: &NetworkParams,
    input: &Tensor,
    target: &Tensor,
) -> Result<(f64, NetworkGrads)> {
    let (pred, cache) = forward_train(params, input)?;
    let (loss, grad_pred) = crate::nn::mse_loss(&pred, target)?;
    let grads = backward(params, &cache, &grad_pred)?;
    Ok((loss, grads))
}

/// Stage 1 on a single image: cardinal split, per-channel filter banks,
/// per-filter max fusion. Output is [1, H, W, 32].
pub fn forward_stage1(img: &Image, params: &NetworkParams) -> Result<Tensor> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "stage 1 requires a 3-channel image, got {} channel(s)",
            img.channels()
        )));
    }
    let (fused, _, _) = stage1_batch(params, &img.to_tensor())?;
    Ok(fused)
}

/// Stage 2 on a single feature map: multi-scale banks, concat to 48,
/// 7x7 stride-1 max pooling, final 5x5 convolution, BiReLU.
pub fn forward_stage2(features: &Tensor, params: &NetworkParams) -> Result<TransmissionMap> {
    let (n, _, _, _) = features.dims();
    if n != 1 {
        return Err(Error::invalid(
            "forward_stage2 takes a single feature map (batch 1)",
        ));
    }
    let (out, _, _, _) = stage2_batch(params, features)?;
    TransmissionMap::from_tensor(&out)
}

/// Full network inference; works on any image size.
pub fn predict_transmission(img: &Image, params: &NetworkParams) -> Result<TransmissionMap> {
    let features = forward_stage1(img, params)?;
    forward_stage2(&features, params)
}

/// Network dehazing: predicted transmission plus the classical dark-channel
/// airlight estimate, then optical-model inversion.
pub fn dehaze_net(
    img: &Image,
    params: &NetworkParams,
) -> Result<(Image, TransmissionMap, Airlight)> {
    let tr = predict_transmission(img, params)?;
    let dark = dark_channel(img, DEFAULT_PATCH)?;
    let air = estimate_airlight(img, &dark, DEFAULT_FRACTION)?;
    let recovered = recover_scene(img, &tr, &air, DEFAULT_T_FLOOR)?;
    Ok((recovered, tr, air))
}

/// Loss curves and timing from a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean train MSE per epoch (over all samples seen in the epoch,
    /// measured before each batch's update).
    pub train_loss: Vec<f64>,
    /// Validation MSE per epoch with parameters frozen.
    pub val_loss: Vec<f64>,
    pub epochs_completed: usize,
    /// Wall-clock duration; excluded from determinism comparisons.
    pub wall_secs: f64,
}

struct LoadedPatch {
    hazy: Image,
    trans: TransmissionMap,
}

fn load_patches(manifest: &DatasetManifest, split: crate::synth::Split) -> Result<Vec<LoadedPatch>> {
    let mut out = Vec::new();
    for entry in manifest.entries.iter().filter(|e| e.split == split) {
        let hazy = io::read_image(&entry.hazy_path)?;
        let trans = io::read_transmission(&entry.trans_path)?;
        let p = manifest.patch_size;
        if hazy.height() != p || hazy.width() != p || hazy.channels() != 3 {
            return Err(Error::Manifest(format!(
                "{}: expected {p}x{p}x3 hazy patch, got {}x{}x{}",
                entry.hazy_path.display(),
                hazy.height(),
                hazy.width(),
                hazy.channels()
            )));
        }
        if trans.height() != p || trans.width() != p {
            return Err(Error::Manifest(format!(
                "{}: expected {p}x{p} transmission patch, got {}x{}",
                entry.trans_path.display(),
                trans.height(),
                trans.width()
            )));
        }
        out.push(LoadedPatch { hazy, trans });
    }
    Ok(out)
}

fn stack_batch(patches: &[LoadedPatch], idxs: &[usize]) -> (Tensor, Tensor) {
    let p = patches[idxs[0]].hazy.height();
    let m = idxs.len();
    let mut input = Tensor::zeros([m, p, p, 3]);
    let mut target = Tensor::zeros([m, p, p, 1]);
    for (s, &i) in idxs.iter().enumerate() {
        let hs = s * p * p * 3;
        input.data_mut()[hs..hs + p * p * 3].copy_from_slice(patches[i].hazy.data());
        let ts = s * p * p;
        target.data_mut()[ts..ts + p * p].copy_from_slice(patches[i].trans.data());
    }
    (input, target)
}

/// Validation MSE over a patch set with frozen parameters.
fn eval_loss(params: &NetworkParams, patches: &[LoadedPatch]) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    let idxs: Vec<usize> = (0..patches.len()).collect();
    for chunk in idxs.chunks(MICRO_BATCH) {
        let (input, target) = stack_batch(patches, chunk);
        let pred = forward_batch(params, &input)?;
        for (p, t) in pred.data().iter().zip(target.data()) {
            let d = p - t;
            sse += d * d;
        }
        count += target.len();
    }
    Ok(sse / count as f64)
}

/// Mini-batch SGD minimizing the MSE between predicted and ground-truth
/// transmission patches. The epoch order is shuffled by a seeded RNG; a
/// fixed seed makes the entire run, including the returned parameters,
/// bit-reproducible.
pub fn train(manifest: &DatasetManifest, cfg: &SGDConfig) -> Result<(NetworkParams, TrainReport)> {
    cfg.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::Training("manifest has no entries".into()));
    }
    let train_set = load_patches(manifest, crate::synth::Split::Train)?;
    let val_set = load_patches(manifest, crate::synth::Split::Val)?;
    if train_set.is_empty() {
        return Err(Error::Training("manifest has no training entries".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Training("manifest has no validation entries".into()));
    }

    let start = Instant::now();
    let mut params = NetworkParams::init(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the session RNG; deterministic given the seed.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_sse = 0.0;
        let mut epoch_count = 0usize;

        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let total_elems = batch.len() * manifest.patch_size * manifest.patch_size;
            let mut grads: Option<NetworkGrads> = None;
            let mut batch_sse = 0.0;

            for chunk in batch.chunks(MICRO_BATCH) {
                let (input, target) = stack_batch(&train_set, chunk);
                let (pred, cache) = forward_train(&params, &input)?;
                // Gradient of the whole-batch MSE: 2 (pred - t) / M_batch.
                let mut grad_pred = Tensor::zeros(pred.shape());
                for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
                    let d = p - t;
                    batch_sse += d * d;
                    grad_pred.data_mut()[i] = 2.0 * d / total_elems as f64;
                }
                let g = backward(&params, &cache, &grad_pred)?;
                match grads.as_mut() {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grads = Some(g),
                }
            }

            let batch_loss = batch_sse / total_elems as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {}, batch {}",
                    epoch + 1,
                    batch_no
                )));
            }
            epoch_sse += batch_sse;
            epoch_count += total_elems;
            let grads = grads.expect("batch is non-empty");
            params.sgd_step(&grads, cfg.learning_rate)?;
        }

        train_curve.push(epoch_sse / epoch_count as f64);
        val_curve.push(eval_loss(&params, &val_set)?);
    }

    let report = TrainReport {
        train_loss: train_curve,
        val_loss: val_curve,
        epochs_completed: cfg.epochs,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

// --- checkpoint serialization ---------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"DHZCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_layer(buf: &mut Vec<u8>, layer: &Conv2DLayer) {
    let (kh, kw, cin, cout) = layer.kernel_dims();
    for d in [kh, kw, cin, cout] {
        push_u32(buf, d as u32);
    }
    for &v in layer.kernel().data() {
        push_f64(buf, v);
    }
    for &v in layer.bias() {
        push_f64(buf, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn layer(&mut self) -> Result<Conv2DLayer> {
        let kh = self.u32()? as usize;
        let kw = self.u32()? as usize;
        let cin = self.u32()? as usize;
        let cout = self.u32()? as usize;
        let len = kh
            .checked_mul(kw)
            .and_then(|v| v.checked_mul(cin))
            .and_then(|v| v.checked_mul(cout))
            .ok_or_else(|| Error::Checkpoint("kernel shape overflow".into()))?;
        let mut kernel = Vec::with_capacity(len);
        for _ in 0..len {
            kernel.push(self.f64()?);
        }
        let mut bias = Vec::with_capacity(cout);
        for _ in 0..cout {
            bias.push(self.f64()?);
        }
        Conv2DLayer::new(Tensor::new([kh, kw, cin, cout], kernel)?, bias)
    }
}

impl NetworkParams {
    /// Serializes every kernel and bias, with shapes and the BiReLU bounds,
    /// into the versioned binary checkpoint layout. Identical parameters
    /// produce identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        push_u32(&mut buf, CHECKPOINT_VERSION);
        push_f64(&mut buf, self.birelu.t_min());
        push_f64(&mut buf, self.birelu.t_max());
        for layer in &self.stage1 {
            push_layer(&mut buf, layer);
        }
        for layer in &self.stage2_ms {
            push_layer(&mut buf, layer);
        }
        push_layer(&mut buf, &self.stage2_final);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let t_min = r.f64()?;
        let t_max = r.f64()?;
        let birelu = BiReLU::new(t_min, t_max)?;
        let s1 = [r.layer()?, r.layer()?, r.layer()?];
        let ms = [r.layer()?, r.layer()?, r.layer()?];
        let fin = r.layer()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        NetworkParams::from_parts(s1, ms, fin, birelu)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        NetworkParams::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dehaze_testkit as tk;

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = tk::rng(seed);
        Image::new(h, w, 3, tk::uniform_vec(&mut rng, h * w * 3, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn stage1_output_has_32_channels() {
        let params = NetworkParams::init(0);
        let img = random_image(1, 10, 12);
        let f = forward_stage1(&img, &params).unwrap();
        assert_eq!(f.shape(), [1, 10, 12, STAGE1_FILTERS]);
        assert!(f.all_finite());
    }

    #[test]
    fn grayscale_input_with_shared_weights_collapses_to_one_branch() {
        let mut rng = tk::rng(5);
        let shared = Conv2DLayer::init(3, 3, 1, STAGE1_FILTERS, &mut rng).unwrap();
        let params = NetworkParams::from_parts(
            [shared.clone(), shared.clone(), shared.clone()],
            [
                Conv2DLayer::init(3, 3, 32, 16, &mut rng).unwrap(),
                Conv2DLayer::init(5, 5, 32, 16, &mut rng).unwrap(),
                Conv2DLayer::init(7, 7, 32, 16, &mut rng).unwrap(),
            ],
            Conv2DLayer::init(5, 5, 48, 1, &mut rng).unwrap(),
            BiReLU::default(),
        )
        .unwrap();
        let gray = tk::uniform_vec(&mut tk::rng(6), 8 * 8, 0.0, 1.0);
        let mut rgb = Vec::with_capacity(8 * 8 * 3);
        for &v in &gray {
            rgb.extend_from_slice(&[v, v, v]);
        }
        let img = Image::new(8, 8, 3, rgb).unwrap();
        let fused = forward_stage1(&img, &params).unwrap();
        let plane = Tensor::new([1, 8, 8, 1], gray).unwrap();
        let single = conv2d_forward(&plane, &shared).unwrap();
        assert_eq!(fused.data(), single.data());
    }

    #[test]
    fn stage1_matches_composed_oracle() {
        let params = NetworkParams::init(3);
        let img = random_image(7, 8, 8);
        let fused = forward_stage1(&img, &params).unwrap();
        // Oracle: direct convolution per cardinal plane, then 3-way max.
        let mut branches = Vec::new();
        for c in 0..3 {
            let plane: Vec<f64> = (0..64).map(|i| img.data()[i * 3 + c]).collect();
            branches.push(tk::direct_conv2d(
                &plane,
                1,
                8,
                8,
                1,
                params.stage1(c).kernel().data(),
                3,
                3,
                STAGE1_FILTERS,
                params.stage1(c).bias(),
            ));
        }
        for i in 0..fused.len() {
            let expect = branches[0][i].max(branches[1][i]).max(branches[2][i]);
            assert!((fused.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stage2_outputs_unit_interval_single_channel() {
        let params = NetworkParams::init(4);
        let mut rng = tk::rng(8);
        let features = Tensor::random_uniform([1, 9, 7, STAGE1_FILTERS], -1.0, 1.0, &mut rng);
        let tr = forward_stage2(&features, &params).unwrap();
        assert_eq!((tr.height(), tr.width()), (9, 7));
        assert!(tr.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn stage2_rejects_wrong_channel_count() {
        let params = NetworkParams::init(4);
        let features = Tensor::zeros([1, 8, 8, 31]);
        assert!(forward_stage2(&features, &params).is_err());
    }

    #[test]
    fn predict_preserves_spatial_dims() {
        let params = NetworkParams::init(9);
        for (h, w) in [(64, 64), (100, 100), (33, 47)] {
            let img = random_image(h as u64 * 31 + w as u64, h, w);
            let tr = predict_transmission(&img, &params).unwrap();
            assert_eq!((tr.height(), tr.width()), (h, w));
            assert!(tr.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn cardinal_permutation_equivariance() {
        // Swapping input color channels together with the corresponding
        // stage-1 banks leaves the fused output unchanged (max is symmetric).
        let params = NetworkParams::init(11);
        let img = random_image(12, 8, 8);
        let fused = forward_stage1(&img, &params).unwrap();

        let swapped_img = {
            let mut data = img.data().to_vec();
            for px in data.chunks_mut(3) {
                px.swap(0, 2);
            }
            Image::new(8, 8, 3, data).unwrap()
        };
        let swapped = NetworkParams::from_parts(
            [
                params.stage1(2).clone(),
                params.stage1(1).clone(),
                params.stage1(0).clone(),
            ],
            [
                params.stage2_ms(0).clone(),
                params.stage2_ms(1).clone(),
                params.stage2_ms(2).clone(),
            ],
            params.stage2_final().clone(),
            *params.birelu(),
        )
        .unwrap();
        let fused_swapped = forward_stage1(&swapped_img, &swapped).unwrap();
        assert_eq!(fused.data(), fused_swapped.data());
    }

    #[test]
    fn forced_full_transmission_makes_dehaze_identity() {
        // Zero weights leave the pre-activation at zero everywhere; BiReLU
        // bounds [1, 2] then clamp the prediction to exactly 1.
        let zero = |kh: usize, kw: usize, cin: usize, cout: usize| {
            Conv2DLayer::new(Tensor::zeros([kh, kw, cin, cout]), vec![0.0; cout]).unwrap()
        };
        let params = NetworkParams::from_parts(
            [zero(3, 3, 1, 32), zero(3, 3, 1, 32), zero(3, 3, 1, 32)],
            [zero(3, 3, 32, 16), zero(5, 5, 32, 16), zero(7, 7, 32, 16)],
            zero(5, 5, 48, 1),
            BiReLU::new(1.0, 2.0).unwrap(),
        )
        .unwrap();
        let img = random_image(31, 16, 16);
        let (out, tr, _) = dehaze_net(&img, &params).unwrap();
        assert!(tr.data().iter().all(|&v| v == 1.0));
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn validate_rejects_wrong_shapes() {
        let mut rng = tk::rng(13);
        let bad = NetworkParams::from_parts(
            [
                Conv2DLayer::init(3, 3, 1, 16, &mut rng).unwrap(), // 16 != 32
                Conv2DLayer::init(3, 3, 1, 32, &mut rng).unwrap(),
                Conv2DLayer::init(3, 3, 1, 32, &mut rng).unwrap(),
            ],
            [
                Conv2DLayer::init(3, 3, 32, 16, &mut rng).unwrap(),
                Conv2DLayer::init(5, 5, 32, 16, &mut rng).unwrap(),
                Conv2DLayer::init(7, 7, 32, 16, &mut rng).unwrap(),
            ],
            Conv2DLayer::init(5, 5, 48, 1, &mut rng).unwrap(),
            BiReLU::default(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let params = NetworkParams::init(17);
        let bytes = params.to_bytes();
        let back = NetworkParams::from_bytes(&bytes).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let params = NetworkParams::init(18);
        let mut bytes = params.to_bytes();
        assert!(NetworkParams::from_bytes(&bytes[..100]).is_err());
        bytes[0] = b'X';
        assert!(NetworkParams::from_bytes(&bytes).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(NetworkParams::init(7), NetworkParams::init(7));
        assert_ne!(NetworkParams::init(7), NetworkParams::init(8));
    }
}
