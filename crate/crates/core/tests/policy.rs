mod common;

use common::*;
use holmes_core::data::{Label, PipelineConfig};
use holmes_core::imaging::synth_corpus;
use holmes_core::pipeline::train_experts;
use holmes_core::policy::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATURES: usize = 72;

fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn random_text(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> Vec<usize> {
    let len = rng.random_range(1..8);
    let mut t = vec![vocab.bos()];
    t.extend((0..len).map(|_| rng.random_range(2..vocab.len())));
    t.push(vocab.eos());
    t
}

fn dpo_batch(rng: &mut ChaCha8Rng, vocab: &Vocabulary, n: usize) -> Vec<DpoExample> {
    (0..n)
        .map(|_| loop {
            let (c, r) = (random_text(rng, vocab), random_text(rng, vocab));
            if let Ok(ex) = DpoExample::new(random_features(rng, FEATURES), c, r, vocab) {
                break ex;
            }
        })
        .collect()
}

fn sft_batch(rng: &mut ChaCha8Rng, vocab: &Vocabulary, n: usize) -> Vec<SftExample> {
    (0..n).map(|_| SftExample::new(random_features(rng, FEATURES), random_text(rng, vocab), vocab).unwrap()).collect()
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

#[test]
fn policy_fits_parameter_budget() {
    let p = ToyPolicy::zeros(Vocabulary::default().len(), FEATURES);
    assert_eq!(p.param_count(), 4304);
}

#[test]
fn sequence_logprob_matches_softmax_oracle() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let p = ToyPolicy::random(vocab.len(), FEATURES, 0.3, seed);
        let f = random_features(&mut rng, FEATURES);
        let t = random_text(&mut rng, &vocab);
        let got = p.sequence_logprob(&f, &t).unwrap();
        let want = logprob_oracle(&p, &f, &t);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn zero_policy_sft_loss_is_log_vocab() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = sft_batch(&mut rng, &vocab, 7);
    let out = sft_loss(&ToyPolicy::zeros(vocab.len(), FEATURES), &batch).unwrap();
    assert_eq!(out.loss, (vocab.len() as f64).ln());
}

#[test]
fn sft_gradient_matches_finite_differences() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = sft_batch(&mut rng, &vocab, 4);
    let policy = ToyPolicy::random(vocab.len(), FEATURES, 0.2, 1);
    let analytic = sft_loss(&policy, &batch).unwrap().grad;
    let idx = all_indices(policy.param_count());
    let numeric = numeric_grad(policy.params(), &idx, |p| {
        let mut q = policy.clone();
        q.params_mut().copy_from_slice(p);
        sft_loss(&q, &batch).unwrap().loss
    });
    let err = max_grad_error(&analytic, &numeric, &idx);
    assert!(err <= FD_TOLERANCE, "max relative error {err}");
}

#[test]
fn dpo_gradient_matches_finite_differences() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let batch = dpo_batch(&mut rng, &vocab, 4);
    let reference = ReferencePolicy::snapshot(&ToyPolicy::random(vocab.len(), FEATURES, 0.2, 2));
    let policy = ToyPolicy::random(vocab.len(), FEATURES, 0.2, 3);
    let analytic = dpo_loss(&policy, &reference, &batch, 0.1).unwrap().grad;
    let idx = all_indices(policy.param_count());
    let numeric = numeric_grad(policy.params(), &idx, |p| {
        let mut q = policy.clone();
        q.params_mut().copy_from_slice(p);
        dpo_loss(&q, &reference, &batch, 0.1).unwrap().loss
    });
    let err = max_grad_error(&analytic, &numeric, &idx);
    assert!(err <= FD_TOLERANCE, "max relative error {err}");
}

#[test]
fn dpo_of_policy_against_itself_is_ln2() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..20 {
        let p = ToyPolicy::random(vocab.len(), FEATURES, 0.5, seed);
        let batch = dpo_batch(&mut rng, &vocab, 1 + seed as usize % 5);
        let loss = dpo_loss(&p, &ReferencePolicy::snapshot(&p), &batch, 0.1).unwrap().loss;
        assert!((loss - std::f64::consts::LN_2).abs() <= 1e-12, "{loss}");
    }
}

#[test]
fn dpo_objective_hand_value() {
    // ln(1 + e^-0.2) for β = 0.1 and Δ = 2
    assert!((dpo_objective(2.0, 0.1) - 0.598_138_869_381_591_8).abs() < 1e-12);
}

#[test]
fn uniform_logit_shift_leaves_dpo_loss_unchanged() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let batch = dpo_batch(&mut rng, &vocab, 6);
    let reference = ReferencePolicy::snapshot(&ToyPolicy::random(vocab.len(), FEATURES, 0.3, 8));
    let p = ToyPolicy::random(vocab.len(), FEATURES, 0.3, 9);
    let mut shifted = p.clone();
    shifted.tensor_mut("head.b").unwrap().iter_mut().for_each(|b| *b += 2.5);
    let a = dpo_loss(&p, &reference, &batch, 0.1).unwrap().loss;
    let b = dpo_loss(&shifted, &reference, &batch, 0.1).unwrap().loss;
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let p = ToyPolicy::random(vocab.len(), FEATURES, 0.1, 4);
    let cfg = StageConfig { lr: 0.0, epochs: 2, batch_size: 3, seed: 0 };
    let sft = train_sft(p.clone(), &sft_batch(&mut rng, &vocab, 8), &cfg).unwrap();
    assert_eq!(sft.policy.params(), p.params());
    let dpo = train_dpo(p.clone(), &dpo_batch(&mut rng, &vocab, 8), 0.1, &cfg).unwrap();
    assert_eq!(dpo.policy.params(), p.params());
}

#[test]
fn fifty_dpo_steps_raise_the_margin() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let batch = dpo_batch(&mut rng, &vocab, 8);
    let p = ToyPolicy::random(vocab.len(), FEATURES, 0.1, 5);
    let cfg = StageConfig { lr: 0.01, epochs: 50, batch_size: 8, seed: 0 };
    let out = train_dpo(p, &batch, 0.1, &cfg).unwrap();
    let (first, last) = (out.margin_curve[0], *out.margin_curve.last().unwrap());
    assert!(last > first, "margin {first} -> {last}");
    assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
}

#[test]
fn greedy_decode_follows_argmax_oracle() {
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for seed in 0..10 {
        let p = ToyPolicy::random(vocab.len(), FEATURES, 0.6, seed);
        let f = random_features(&mut rng, FEATURES);
        let got = greedy_decode(&p, &vocab, &f, 12).unwrap();
        let mut want = vec![vocab.bos()];
        while want.len() < 12 {
            let l = policy_logits_oracle(&p, &f, *want.last().unwrap());
            let next = (0..l.len()).fold(0, |b, i| if l[i] > l[b] { i } else { b });
            want.push(next);
            if next == vocab.eos() {
                break;
            }
        }
        assert_eq!(got.tokens, want);
    }
}

#[test]
fn sft_reproduces_feature_dependent_templates() {
    let data: Vec<_> = synth_corpus(40, 40, 32, 17).unwrap().into_iter().map(|s| (s.image, s.label)).collect();
    let cfg = PipelineConfig::default();
    let (panel, _) = train_experts(&data, &cfg).unwrap();
    let mut lum: Vec<f64> = data.iter().map(|(img, _)| img.luminance()).collect();
    lum.sort_by(f64::total_cmp);
    let median = lum[lum.len() / 2];
    let template = |label: Label, l: f64| {
        let light = if l >= median { "bright" } else { "dark" };
        match label {
            Label::Real => format!("real the image shows natural sensor noise and consistent edges with {light} lighting"),
            Label::Fake => format!("fake the image shows periodic upsampling artifacts and a warm color cast with {light} lighting"),
        }
    };
    let vocab = Vocabulary::default();
    let examples: Vec<SftExample> = data
        .iter()
        .map(|(img, y)| SftExample::from_text(panel.analyze(img).features, &template(*y, img.luminance()), &vocab).unwrap())
        .collect();
    let policy = ToyPolicy::random(vocab.len(), examples[0].features.len(), 0.05, 1);
    let out = train_sft(policy, &examples, &StageConfig { lr: 0.02, epochs: 40, batch_size: 16, seed: 1 }).unwrap();
    let mut matched = 0;
    let mut total = 0;
    for ex in &examples {
        let dec = greedy_decode(&out.policy, &vocab, &ex.features, 24).unwrap();
        total += ex.tokens.len();
        matched += ex.tokens.iter().zip(&dec.tokens).filter(|(a, b)| a == b).count();
    }
    let frac = matched as f64 / total as f64;
    assert!(frac >= 0.9, "token match {frac}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let p = ToyPolicy::random(64, FEATURES, 0.3, 77);
    let back = ToyPolicy::from_checkpoint(&p.checkpoint()).unwrap();
    assert_eq!(back.params(), p.params());
}
