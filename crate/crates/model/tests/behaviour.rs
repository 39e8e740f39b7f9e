use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajlang_model::generate::{argmax, generate};
use trajlang_model::{Model, ModelConfig, SamplingConfig, TrainConfig, Trainer};

fn config(layers: usize, heads: usize, d: usize, ctx: usize, vocab: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::sized(layers, heads, d, ctx, vocab);
    c.seed = seed;
    c
}

fn random_ids(rng: &mut ChaCha8Rng, len: usize, vocab: u32) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

#[test]
fn logits_before_a_change_are_bit_identical() {
    let m: Model<f32> = Model::init(config(3, 4, 32, 32, 50, 1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids = random_ids(&mut rng, 24, 50);
    let base = m.forward(&ids, false).unwrap();
    for j in [0, 5, 17, 23] {
        let mut other = ids.clone();
        other[j] = (other[j] + 7) % 50;
        let f = m.forward(&other, false).unwrap();
        for i in 0..j {
            assert_eq!(base.row(i), f.row(i), "position {i} changed after editing {j}");
        }
        assert_ne!(base.row(j), f.row(j));
    }
}

#[test]
fn attention_rows_are_distributions() {
    let m: Model<f32> = Model::init(config(2, 4, 32, 40, 30, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ids = random_ids(&mut rng, 40, 30);
    let att = m.forward(&ids, true).unwrap().attention.unwrap();
    let n = ids.len();
    for layer in &att {
        for h in 0..4 {
            for i in 0..n {
                let row = &layer[h * n * n + i * n..h * n * n + (i + 1) * n];
                let s: f32 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-5, "{s}");
                assert!(row[i + 1..].iter().all(|&v| v == 0.0));
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}

#[test]
fn batched_loss_is_token_weighted_mean() {
    let m: Model<f64> = Model::init(config(2, 2, 16, 20, 25, 5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_ids(&mut rng, 9, 25);
    let b = random_ids(&mut rng, 15, 25);
    let la = m.loss(&[a.clone()]).unwrap();
    let lb = m.loss(&[b.clone()]).unwrap();
    let both = m.loss(&[a.clone(), b.clone()]).unwrap();
    assert!((both - (8.0 * la + 14.0 * lb) / 22.0).abs() < 1e-6);
    // The loss of a batch of one is the cross-entropy of its own logits.
    let f = m.forward(&a[..8], false).unwrap();
    let manual: f64 = (0..8)
        .map(|i| {
            let row = f.row(i);
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            lse - row[a[i + 1] as usize]
        })
        .sum::<f64>()
        / 8.0;
    assert!((manual - la).abs() < 1e-6);
}

#[test]
fn initial_loss_near_uniform() {
    for (vocab, seed) in [(64, 1), (512, 2), (2048, 3)] {
        let m: Model<f32> = Model::init(config(2, 4, 64, 64, vocab, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<Vec<u32>> = (0..8).map(|_| random_ids(&mut rng, 64, vocab as u32)).collect();
        let loss = m.loss(&batch).unwrap();
        let want = (vocab as f64).ln();
        assert!((loss / want - 1.0).abs() < 0.02, "vocab {vocab}: {loss} vs {want}");
    }
}

#[test]
fn init_is_seeded() {
    let a: Model<f32> = Model::init(config(2, 2, 16, 8, 10, 9)).unwrap();
    let b: Model<f32> = Model::init(config(2, 2, 16, 8, 10, 9)).unwrap();
    let c: Model<f32> = Model::init(config(2, 2, 16, 8, 10, 10)).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
    for t in &a.layout.tensors {
        assert_eq!(t.len(), t.shape.iter().product::<usize>());
    }
    assert_eq!(a.layout.get("wte").unwrap().shape, vec![10, 16]);
    assert_eq!(a.layout.get("h1.attn.w_qkv").unwrap().shape, vec![16, 48]);
}

#[test]
fn loss_falls_on_a_fixed_batch() {
    let m: Model<f32> = Model::init(config(2, 2, 32, 16, 20, 11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let batch: Vec<Vec<u32>> = (0..4).map(|_| random_ids(&mut rng, 16, 20)).collect();
    let cfg = TrainConfig { learning_rate: 1e-3, warmup_steps: 0, total_steps: 10, batch_size: 4, ..Default::default() };
    let mut t = Trainer::new(m, cfg).unwrap();
    let losses: Vec<f64> = (0..10).map(|_| t.step(&batch).unwrap().loss).collect();
    assert!(losses[9] < losses[0]);
    let first_half: f64 = losses[..5].iter().sum();
    let second_half: f64 = losses[5..].iter().sum();
    assert!(second_half < first_half);
}

fn memorized() -> (Model<f32>, Vec<u32>) {
    let line: Vec<u32> = vec![3, 9, 14, 2, 7, 7, 11, 0, 5, 12, 1, 8, 4, 13, 6, 10];
    let m: Model<f32> = Model::init(config(2, 2, 32, 24, 16, 13)).unwrap();
    let cfg = TrainConfig { learning_rate: 3e-3, warmup_steps: 10, total_steps: 200, batch_size: 1, ..Default::default() };
    let mut t = Trainer::new(m, cfg).unwrap();
    t.run(&[line.clone()], |_| {}).unwrap();
    (t.model, line)
}

#[test]
fn memorizes_a_single_line() {
    let (m, line) = memorized();
    let f = m.forward(&line[..line.len() - 1], false).unwrap();
    let correct = (0..line.len() - 1).filter(|&i| argmax(f.row(i)) as u32 == line[i + 1]).count();
    assert!(correct as f64 / (line.len() - 1) as f64 > 0.99);

    let greedy = SamplingConfig { temperature: 0.0, top_k: 0, max_tokens: 64 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let g = generate(&m, &line[..4], 10, &greedy, &mut rng, None).unwrap();
    assert!(g.stopped);
    assert_eq!(g.ids, line[4..=15].to_vec());
}

#[test]
fn sampling_is_seeded_and_cold_limit_is_greedy() {
    let (m, line) = memorized();
    let warm = SamplingConfig { temperature: 1.5, top_k: 0, max_tokens: 12 };
    let a = generate(&m, &line[..2], 999, &warm, &mut ChaCha8Rng::seed_from_u64(5), None).unwrap();
    let b = generate(&m, &line[..2], 999, &warm, &mut ChaCha8Rng::seed_from_u64(5), None).unwrap();
    assert_eq!(a, b);
    let cold = SamplingConfig { temperature: 1e-6, top_k: 0, max_tokens: 12 };
    let greedy = SamplingConfig { temperature: 0.0, top_k: 0, max_tokens: 12 };
    let c = generate(&m, &line[..2], 999, &cold, &mut ChaCha8Rng::seed_from_u64(1), None).unwrap();
    let g = generate(&m, &line[..2], 999, &greedy, &mut ChaCha8Rng::seed_from_u64(2), None).unwrap();
    assert_eq!(c.ids, g.ids);
}

#[test]
fn generation_flags_context_overflow() {
    let m: Model<f32> = Model::init(config(1, 1, 8, 6, 5, 1)).unwrap();
    let cfg = SamplingConfig { temperature: 1.0, top_k: 0, max_tokens: 100 };
    let g = generate(&m, &[1, 2], 99, &cfg, &mut ChaCha8Rng::seed_from_u64(0), None).unwrap();
    assert!(g.truncated && !g.stopped);
    assert_eq!(g.ids.len(), 5);
}
