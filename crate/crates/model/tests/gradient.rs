use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajlang_model::gradcheck::check_gradients;
use trajlang_model::{Model, ModelConfig};

fn batches(vocab: u32, n: usize, seed: u64) -> Vec<Vec<Vec<u32>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..2).map(|_| (0..rng.gen_range(4..10)).map(|_| rng.gen_range(0..vocab)).collect()).collect()).collect()
}

fn tiny(seed: u64) -> ModelConfig {
    let mut c = ModelConfig::sized(2, 2, 16, 12, 13);
    c.seed = seed;
    c
}

#[test]
fn double_precision_matches_finite_differences() {
    let m: Model<f64> = Model::init(tiny(1)).unwrap();
    for b in batches(13, 2, 5) {
        for t in check_gradients(&m, &b, 1e-3, 1e-3).unwrap() {
            eprintln!("{} {:.3e}", t.name, t.max_rel_error);
            assert!(t.max_rel_error < 1e-5, "{t:?}");
        }
    }
}

#[test]
fn single_precision_matches_finite_differences() {
    let m: Model<f32> = Model::init(tiny(2)).unwrap();
    for b in batches(13, 2, 6) {
        for t in check_gradients(&m, &b, 1e-3, 1e-3).unwrap() {
            eprintln!("{} {:.3e}", t.name, t.max_rel_error);
            assert!(t.max_rel_error < 1e-3, "{t:?}");
        }
    }
}
