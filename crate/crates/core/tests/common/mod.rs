//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use holmes_core::data::{ImageRecord, Label};
use holmes_core::evalkit::{VoteRecord, Winner};
use holmes_core::imaging::ImageTensor;
use holmes_core::jury::{ExpertClient, Role, ScriptedJuror};
use holmes_core::nn::Checkpoint;
use holmes_core::policy::{ToyPolicy, CONTEXT_DIM};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely; central differences
/// carry ~1e-10 of rounding and truncation noise at this step size.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Central-difference gradient of `f` at `params` over the given indices.
pub fn numeric_grad(params: &[f64], indices: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let plus = f(&p);
            p[i] = orig - FD_STEP;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest relative error between analytic and numeric gradients at `indices`.
pub fn max_grad_error(analytic: &[f64], numeric: &[f64], indices: &[usize]) -> f64 {
    indices.iter().zip(numeric).map(|(&i, n)| rel_error(analytic[i], *n)).fold(0.0, f64::max)
}

/// LCS length by enumerating every subsequence of the shorter sequence.
pub fn lcs_bruteforce(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask >> i & 1 == 1).map(|i| &short[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = long.iter();
        if sub.iter().all(|s| it.any(|x| x == *s)) {
            best = sub.len();
        }
    }
    best
}

/// AP computed rank by rank without sorting: the rank of sample `i` is the
/// number of samples with a higher score, or an equal score and a smaller index.
pub fn ap_rank_oracle(scores: &[f64], labels: &[Label]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i)).count();
    let positives: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::Fake).collect();
    let mut total = 0.0;
    for &i in &positives {
        let k = rank(i);
        let hits = positives.iter().filter(|&&j| rank(j) <= k).count();
        total += hits as f64 / k as f64;
    }
    total / positives.len() as f64
}

/// Hand-traced vote log and the ratings after it.
pub fn elo_fixture() -> (Vec<VoteRecord>, [(&'static str, f64); 3]) {
    let v = |id: &str, a: &str, b: &str, w: Winner| VoteRecord {
        match_id: id.into(),
        model_a: a.into(),
        model_b: b.into(),
        winner: w,
    };
    let votes = vec![
        v("m1", "alpha", "beta", Winner::A),
        v("m2", "beta", "gamma", Winner::Tie),
        v("m3", "gamma", "alpha", Winner::B),
        v("m4", "alpha", "gamma", Winner::A),
        v("m5", "beta", "alpha", Winner::Tie),
        v("m6", "gamma", "beta", Winner::A),
    ];
    let expected = [("alpha", 1005.9082402075378447), ("beta", 996.04558178291354013), ("gamma", 998.04617800954861519)];
    (votes, expected)
}

fn tensor<'a>(ck: &'a Checkpoint, name: &str) -> &'a [f64] {
    &ck.tensors.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("tensor {name}")).data
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    (0..b.len()).map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * x[i]).sum::<f64>()).collect()
}

/// NPR expert forward pass straight from its checkpoint tensors: residual,
/// two 3×3 stride-2 zero-padded convolutions with ReLU, mean pool, linear head.
pub fn npr_forward_oracle(ck: &Checkpoint, img: &ImageTensor) -> (Vec<f64>, [f64; 2]) {
    let (h, w) = (img.height(), img.width());
    let mut x = vec![vec![vec![0.0; 3]; w]; h];
    for y in 0..h {
        for xx in 0..w {
            for c in 0..3 {
                x[y][xx][c] = img.get(y, xx, c) - img.get(y - y % 2, xx - xx % 2, c);
            }
        }
    }
    let conv = |input: &Vec<Vec<Vec<f64>>>, wt: &[f64], bias: &[f64]| {
        let (ih, iw, cin) = (input.len(), input[0].len(), input[0][0].len());
        let (oh, ow) = ((ih + 1) / 2, (iw + 1) / 2);
        let mut out = vec![vec![vec![0.0; bias.len()]; ow]; oh];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..bias.len() {
                    let mut s = bias[o];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = ((2 * oy + ky) as isize - 1, (2 * ox + kx) as isize - 1);
                                if iy < 0 || ix < 0 || iy >= ih as isize || ix >= iw as isize {
                                    continue;
                                }
                                s += wt[((o * cin + ci) * 3 + ky) * 3 + kx] * input[iy as usize][ix as usize][ci];
                            }
                        }
                    }
                    out[oy][ox][o] = s.max(0.0);
                }
            }
        }
        out
    };
    let a1 = conv(&x, tensor(ck, "conv1.w"), tensor(ck, "conv1.b"));
    let a2 = conv(&a1, tensor(ck, "conv2.w"), tensor(ck, "conv2.b"));
    let cells = (a2.len() * a2[0].len()) as f64;
    let mut pooled = vec![0.0; 8];
    for row in &a2 {
        for px in row {
            for c in 0..8 {
                pooled[c] += px[c] / cells;
            }
        }
    }
    let out = dense(tensor(ck, "head.w0"), tensor(ck, "head.b0"), &pooled);
    (pooled, [out[0], out[1]])
}

/// Semantic expert forward pass: 4×4 cell means, projection, 64→32→2 MLP.
pub fn semantic_forward_oracle(ck: &Checkpoint, projection: &[f64], img: &ImageTensor) -> (Vec<f64>, [f64; 2]) {
    let (h, w) = (img.height(), img.width());
    let mut pooled = Vec::new();
    for gy in 0..4 {
        for gx in 0..4 {
            let (ys, xs) = (gy * h / 4..(gy + 1) * h / 4, gx * w / 4..(gx + 1) * w / 4);
            let n = (ys.len() * xs.len()) as f64;
            for c in 0..3 {
                let mut s = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        s += img.get(y, x, c);
                    }
                }
                pooled.push(s / n);
            }
        }
    }
    let feats: Vec<f64> = projection.chunks(pooled.len()).map(|r| r.iter().zip(&pooled).map(|(a, b)| a * b).sum()).collect();
    let hidden: Vec<f64> = dense(tensor(ck, "head.w0"), tensor(ck, "head.b0"), &feats).into_iter().map(|v| v.max(0.0)).collect();
    let out = dense(tensor(ck, "head.w1"), tensor(ck, "head.b1"), &hidden);
    (feats, [out[0], out[1]])
}

/// Next-token logits from the policy's named tensors.
pub fn policy_logits_oracle(policy: &ToyPolicy, features: &[f64], prev: usize) -> Vec<f64> {
    let ck = policy.checkpoint();
    let f = features.len();
    let (pw, pb) = (tensor(&ck, "proj.w"), tensor(&ck, "proj.b"));
    let c: Vec<f64> = (0..CONTEXT_DIM).map(|d| pb[d] + (0..f).map(|i| pw[d * f + i] * features[i]).sum::<f64>()).collect();
    let e = &tensor(&ck, "embed")[prev * CONTEXT_DIM..(prev + 1) * CONTEXT_DIM];
    let (hw, hb) = (tensor(&ck, "head.w"), tensor(&ck, "head.b"));
    let joint: Vec<f64> = c.iter().chain(e).copied().collect();
    dense(hw, hb, &joint)
}

/// Chain rule of probabilities with a plain softmax.
pub fn logprob_oracle(policy: &ToyPolicy, features: &[f64], tokens: &[usize]) -> f64 {
    tokens
        .windows(2)
        .map(|w| {
            let logits = policy_logits_oracle(policy, features, w[0]);
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            (logits[w[1]].exp() / z).ln()
        })
        .sum()
}

pub fn image_record(id: &str, label: Label) -> ImageRecord {
    ImageRecord { id: id.into(), path: PathBuf::from(format!("{id}.png")), label, source: "fixture".into(), defect_tags: vec![] }
}

pub const JURORS: [&str; 4] = ["ava", "ben", "cy", "dee"];

/// Four scripted jurors over six images.
///
/// | image | kept | consensus | retained (δ = 4) | negative |
/// |-------|------|-----------|------------------|----------|
/// | img1  | ben  | 4.75      | yes              | yes      |
/// | img2  | ava  | 4.0 (tie with cy, name order) | yes | yes |
/// | img3  | ava  | 3.95      | no               | yes      |
/// | img4  | dee  | 5.0 (a 6.0 clamps to 5) | yes | yes    |
/// | img5  | ava  | 12.7 / 3 (ben unreachable) | yes | yes  |
/// | img6  | cy   | 4.25      | yes              | none     |
pub struct JuryFixture {
    pub images: Vec<ImageRecord>,
    pub kept: BTreeMap<&'static str, &'static str>,
    pub consensus: BTreeMap<&'static str, f64>,
    pub retained: Vec<&'static str>,
    pub d1_size: usize,
}

pub fn pos(juror: &str, img: &str) -> String {
    format!("{juror} explains {img}")
}

pub fn neg(juror: &str, img: &str) -> String {
    format!("{juror} argues against {img}")
}

/// `ben_fails_on_img5` toggles the failure injection.
pub fn jury_fixture(ben_fails_on_img5: bool) -> (Vec<Box<dyn ExpertClient>>, JuryFixture) {
    let images: Vec<ImageRecord> = (1..=6)
        .map(|i| image_record(&format!("img{i}"), if i % 2 == 0 { Label::Real } else { Label::Fake }))
        .collect();
    // (image, annotator, scores by ava, ben, cy, dee); unlisted pairs score 3.
    let table: [(&str, &str, [f64; 4]); 10] = [
        ("img1", "ava", [4.0, 4.0, 5.0, 5.0]),
        ("img1", "ben", [5.0, 5.0, 5.0, 4.0]),
        ("img1", "dee", [4.0, 4.0, 4.0, 4.0]),
        ("img2", "ava", [4.0, 4.0, 4.0, 4.0]),
        ("img2", "cy", [5.0, 3.0, 4.0, 4.0]),
        ("img3", "ava", [4.0, 4.0, 4.0, 3.8]),
        ("img4", "dee", [5.0, 5.0, 5.0, 6.0]),
        ("img5", "ava", [4.2, 5.0, 4.0, 4.5]),
        ("img5", "cy", [4.1, 4.1, 4.1, 4.1]),
        ("img6", "cy", [4.25, 4.25, 4.25, 4.25]),
    ];
    let img4_others = ["ava", "ben", "cy"];
    let mut jurors: Vec<Box<dyn ExpertClient>> = Vec::new();
    for (j, name) in JURORS.iter().enumerate() {
        let mut s = ScriptedJuror::new(*name).default_score(3.0);
        for img in &images {
            s = s.annotation(&img.id, Role::Positive, &pos(name, &img.id));
            if img.id != "img6" {
                s = s.annotation(&img.id, Role::Negative, &neg(name, &img.id));
            }
        }
        for (img, author, scores) in &table {
            s = s.score(&pos(author, img), scores[j]);
        }
        for author in img4_others {
            s = s.score(&pos(author, "img4"), 4.0);
        }
        if ben_fails_on_img5 && *name == "ben" {
            s = s.failing_on("img5");
        }
        jurors.push(Box::new(s));
    }
    let fixture = JuryFixture {
        images,
        kept: [("img1", "ben"), ("img2", "ava"), ("img3", "ava"), ("img4", "dee"), ("img5", "ava"), ("img6", "cy")]
            .into_iter()
            .collect(),
        consensus: [
            ("img1", 4.75),
            ("img2", 4.0),
            ("img3", 3.95),
            ("img4", 5.0),
            ("img5", if ben_fails_on_img5 { (4.2 + 4.0 + 4.5) / 3.0 } else { (4.2 + 5.0 + 4.0 + 4.5) / 4.0 }),
            ("img6", 4.25),
        ]
        .into_iter()
        .collect(),
        retained: vec!["img1", "img2", "img4", "img5", "img6"],
        d1_size: 5,
    };
    (jurors, fixture)
}
