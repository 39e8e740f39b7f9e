use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajlang_model::generate::{argmax, sample_logits};
use trajlang_model::{Checkpoint, Model, ModelConfig};

const VOCAB: usize = 17;
const CTX: usize = 20;

fn tiny(seed: u64) -> Model<f64> {
    let mut c = ModelConfig::sized(2, 2, 8, CTX, VOCAB);
    c.seed = seed;
    Model::init(c).unwrap()
}

fn ids() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..VOCAB as u32, 2..=CTX)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn logits_ignore_the_future(seed in 0u64..1000, ids in ids(), cut in 1usize..CTX) {
        let m = tiny(seed);
        let cut = cut.min(ids.len() - 1);
        let full = m.forward(&ids, false).unwrap();
        let prefix = m.forward(&ids[..cut], false).unwrap();
        for i in 0..cut {
            prop_assert_eq!(full.row(i), prefix.row(i));
        }
    }

    #[test]
    fn cached_session_matches_full_forward(seed in 0u64..1000, ids in ids()) {
        let m = tiny(seed);
        let full = m.forward(&ids, false).unwrap();
        let mut s = m.session();
        for (i, &t) in ids.iter().enumerate() {
            let step = s.push(t).unwrap();
            for (a, b) in step.iter().zip(full.row(i)) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "position {}: {} vs {}", i, a, b);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one(seed in 0u64..1000, ids in ids()) {
        let m = tiny(seed);
        let n = ids.len();
        for layer in m.forward(&ids, true).unwrap().attention.unwrap() {
            for row in layer.chunks(n) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_roundtrips_and_rejects_corruption(seed in 0u64..1000, at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let m: Model<f32> = tiny(seed).cast();
        let ckpt = Checkpoint::from_model(&m);
        let mut bytes = ckpt.to_bytes();
        prop_assert_eq!(&Checkpoint::from_bytes(&bytes).unwrap(), &ckpt);
        let i = at.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn top_one_sampling_is_argmax(logits in prop::collection::vec(-50.0f64..50.0, 1..40), temp in 0.05f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(sample_logits(&logits, temp, 1, &mut rng), argmax(&logits));
    }

    #[test]
    fn sampling_never_picks_masked_tokens(mask in prop::collection::vec(any::<bool>(), 2..30), seed in any::<u64>()) {
        prop_assume!(mask.iter().any(|&m| !m));
        let logits: Vec<f64> = mask.iter().map(|&m| if m { f64::NEG_INFINITY } else { 0.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            prop_assert!(!mask[sample_logits(&logits, 1.0, 0, &mut rng)]);
        }
    }
}
