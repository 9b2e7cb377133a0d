use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::mlp::{MlpCache, MlpSpec};
use super::{bce_loss, Expert, ExpertError, ExpertLogits, VisualExpert};
use crate::data::Label;
use crate::imaging::{npr_transform_with, ImageTensor, NprMap, CHANNELS};
use crate::nn::{kaiming_uniform, Checkpoint, Layout};

/// Width of both convolution layers and of the pooled feature `f_npr`.
pub const NPR_CHANNELS: usize = 8;
const KERNEL: usize = 3;
const CHECKPOINT_KIND: &str = "npr_expert";

const CONV1_W: usize = 0;
const CONV1_B: usize = 1;
const CONV2_W: usize = 2;
const CONV2_B: usize = 3;

/// Feature map in HWC order.
#[derive(Debug, Clone)]
struct FeatureMap {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

/// 3×3 convolution, stride 2, zero padding 1. Weights are `[out][in][ky][kx]`.
fn conv_s2(input: &FeatureMap, weights: &[f64], bias: &[f64], cout: usize) -> FeatureMap {
    let (oh, ow, cin) = (input.h.div_ceil(2), input.w.div_ceil(2), input.c);
    let mut data = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let out = &mut data[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            out.copy_from_slice(bias);
            for ky in 0..KERNEL {
                let iy = (2 * oy + ky) as isize - 1;
                if iy < 0 || iy >= input.h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (2 * ox + kx) as isize - 1;
                    if ix < 0 || ix >= input.w as isize {
                        continue;
                    }
                    let base = (iy as usize * input.w + ix as usize) * cin;
                    let px = &input.data[base..base + cin];
                    for (o, acc) in out.iter_mut().enumerate() {
                        let wrow = &weights[o * cin * 9..(o + 1) * cin * 9];
                        for (i, v) in px.iter().enumerate() {
                            *acc += wrow[i * 9 + ky * 3 + kx] * v;
                        }
                    }
                }
            }
        }
    }
    FeatureMap { h: oh, w: ow, c: cout, data }
}

/// Accumulates weight/bias gradients and returns the input gradient.
fn conv_s2_backward(
    input: &FeatureMap,
    weights: &[f64],
    dout: &FeatureMap,
    dweights: &mut [f64],
    dbias: &mut [f64],
    need_input_grad: bool,
) -> Option<FeatureMap> {
    let cin = input.c;
    let cout = dout.c;
    let mut din = need_input_grad.then(|| vec![0.0; input.data.len()]);
    for oy in 0..dout.h {
        for ox in 0..dout.w {
            let d = &dout.data[(oy * dout.w + ox) * cout..(oy * dout.w + ox + 1) * cout];
            for (o, g) in d.iter().enumerate() {
                dbias[o] += g;
            }
            for ky in 0..KERNEL {
                let iy = (2 * oy + ky) as isize - 1;
                if iy < 0 || iy >= input.h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (2 * ox + kx) as isize - 1;
                    if ix < 0 || ix >= input.w as isize {
                        continue;
                    }
                    let base = (iy as usize * input.w + ix as usize) * cin;
                    for (o, &g) in d.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        for i in 0..cin {
                            let widx = o * cin * 9 + i * 9 + ky * 3 + kx;
                            dweights[widx] += g * input.data[base + i];
                            if let Some(din) = din.as_mut() {
                                din[base + i] += g * weights[widx];
                            }
                        }
                    }
                }
            }
        }
    }
    din.map(|data| FeatureMap { h: input.h, w: input.w, c: cin, data })
}

struct Forward {
    input: FeatureMap,
    pre1: FeatureMap,
    act1: FeatureMap,
    pre2: FeatureMap,
    pooled: Vec<f64>,
    head: MlpCache,
}

/// Two trainable stride-2 convolutions with ReLU over the residual map,
/// global average pooling, and a trainable `8 → 2` head.
#[derive(Debug, Clone, PartialEq)]
pub struct NprExpert {
    factor: usize,
    layout: Layout,
    head: MlpSpec,
    head_offset: usize,
    params: Vec<f64>,
}

impl NprExpert {
    pub fn new(seed: u64) -> Self {
        Self::with_factor(seed, 2)
    }

    pub fn with_factor(seed: u64, factor: usize) -> Self {
        let mut layout = Layout::default();
        layout.push("conv1.w", &[NPR_CHANNELS, CHANNELS, KERNEL, KERNEL]);
        layout.push("conv1.b", &[NPR_CHANNELS]);
        layout.push("conv2.w", &[NPR_CHANNELS, NPR_CHANNELS, KERNEL, KERNEL]);
        layout.push("conv2.b", &[NPR_CHANNELS]);
        let head_offset = layout.len();
        let head = MlpSpec::new(&[NPR_CHANNELS, 2]);
        head.register(&mut layout, "head");

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.len()];
        kaiming_uniform(&mut params[layout.range(CONV1_W)], CHANNELS * 9, &mut rng);
        kaiming_uniform(&mut params[layout.range(CONV2_W)], NPR_CHANNELS * 9, &mut rng);
        head.init(&mut params[head_offset..], &mut rng);
        Self { factor, layout, head, head_offset, params }
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn zero_head(&mut self) {
        let off = self.head_offset;
        self.params[off..].fill(0.0);
    }

    fn forward(&self, map: &NprMap) -> Forward {
        let p = &self.params;
        let input = FeatureMap { h: map.height(), w: map.width(), c: CHANNELS, data: map.data().to_vec() };
        let pre1 = conv_s2(&input, &p[self.layout.range(CONV1_W)], &p[self.layout.range(CONV1_B)], NPR_CHANNELS);
        let act1 = FeatureMap { data: pre1.data.iter().map(|v| v.max(0.0)).collect(), ..pre1.clone() };
        let pre2 = conv_s2(&act1, &p[self.layout.range(CONV2_W)], &p[self.layout.range(CONV2_B)], NPR_CHANNELS);
        let n = (pre2.h * pre2.w) as f64;
        let mut pooled = vec![0.0; NPR_CHANNELS];
        for px in pre2.data.chunks_exact(NPR_CHANNELS) {
            for (acc, v) in pooled.iter_mut().zip(px) {
                *acc += v.max(0.0);
            }
        }
        for v in &mut pooled {
            *v /= n;
        }
        let head = self.head.forward(&p[self.head_offset..], &pooled);
        Forward { input, pre1, act1, pre2, pooled, head }
    }

    /// The pooled trunk feature `f_npr` of a residual map.
    pub fn extract_npr_features(&self, map: &NprMap) -> Vec<f64> {
        self.forward(map).pooled
    }

    /// Pooled features and head logits from one forward pass.
    pub fn features_and_logits(&self, map: &NprMap) -> (Vec<f64>, ExpertLogits) {
        let f = self.forward(map);
        let logits = ExpertLogits::new(f.head.output()[0], f.head.output()[1]);
        (f.pooled, logits)
    }

    /// Residual transform followed by the trunk.
    pub fn features(&self, img: &ImageTensor) -> Vec<f64> {
        self.extract_npr_features(&self.prepare(img))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = json!({ "factor": self.factor });
        Checkpoint::from_params(CHECKPOINT_KIND, meta, &self.layout, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ExpertError> {
        let factor = ck.meta.get("factor").and_then(|v| v.as_u64()).unwrap_or(2) as usize;
        let mut expert = Self::with_factor(0, factor);
        ck.load_into(CHECKPOINT_KIND, &expert.layout, &mut expert.params)?;
        Ok(expert)
    }
}

impl Expert for NprExpert {
    type Input = NprMap;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, map: &NprMap) -> ExpertLogits {
        let f = self.forward(map);
        ExpertLogits::new(f.head.output()[0], f.head.output()[1])
    }

    fn accumulate_grad(&self, map: &NprMap, label: Label, scale: f64, grad: &mut [f64]) -> f64 {
        let f = self.forward(map);
        let (loss, dz) = bce_loss(ExpertLogits::new(f.head.output()[0], f.head.output()[1]), label);
        let p = &self.params;
        let dpooled = self.head.backward(
            &p[self.head_offset..],
            &f.head,
            &[dz[0] * scale, dz[1] * scale],
            &mut grad[self.head_offset..],
        );

        let n = (f.pre2.h * f.pre2.w) as f64;
        let mut dpre2 = FeatureMap { data: vec![0.0; f.pre2.data.len()], ..f.pre2.clone() };
        for (d, z) in dpre2.data.chunks_exact_mut(NPR_CHANNELS).zip(f.pre2.data.chunks_exact(NPR_CHANNELS)) {
            for c in 0..NPR_CHANNELS {
                if z[c] > 0.0 {
                    d[c] = dpooled[c] / n;
                }
            }
        }
        let (g1, rest) = grad.split_at_mut(self.layout.slot(CONV2_W).offset);
        let (g2w, g2b) = rest.split_at_mut(self.layout.slot(CONV2_W).len());
        let dact1 = conv_s2_backward(
            &f.act1,
            &p[self.layout.range(CONV2_W)],
            &dpre2,
            g2w,
            &mut g2b[..NPR_CHANNELS],
            true,
        )
        .expect("input gradient requested");
        let mut dpre1 = dact1;
        for (d, z) in dpre1.data.iter_mut().zip(&f.pre1.data) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let (g1w, g1b) = g1.split_at_mut(self.layout.slot(CONV1_W).len());
        conv_s2_backward(&f.input, &p[self.layout.range(CONV1_W)], &dpre1, g1w, &mut g1b[..NPR_CHANNELS], false);
        loss
    }
}

impl VisualExpert for NprExpert {
    fn prepare(&self, img: &ImageTensor) -> NprMap {
        npr_transform_with(img, self.factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_gives_zero_features() {
        let e = NprExpert::new(5);
        let f = e.extract_npr_features(&NprMap::zeros(16, 16));
        assert_eq!(f, vec![0.0; NPR_CHANNELS]);
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let mut e = NprExpert::new(5);
        e.zero_head();
        let img = ImageTensor::from_fn(8, 8, |y, x, c| ((y * 3 + x * 5 + c) % 7) as f64 / 7.0).unwrap();
        assert_eq!(e.expert_logits(&img), ExpertLogits::new(0.0, 0.0));
    }

    #[test]
    fn exactly_two_conv_layers() {
        let e = NprExpert::new(1);
        let convs = e.layout().slots().iter().filter(|s| s.name.starts_with("conv") && s.name.ends_with(".w")).count();
        assert_eq!(convs, 2);
    }

    #[test]
    fn checkpoint_round_trip() {
        let e = NprExpert::new(77);
        assert_eq!(NprExpert::from_checkpoint(&e.checkpoint()).unwrap(), e);
    }
}
