use proptest::prelude::*;
use qlhl::bootstrap::{plan_bootstrap, run_bootstrap, WeakSourceSim};
use qlhl::bounds::ThreatCase;
use qlhl::combiner::{combine_private, combine_public, CombineMode, CombineRequest, KeyInput, Threat};
use qlhl::{BitString, EntropyKind, ExtractorParams, Independence, SecurityLevel, SeededHash, SourceSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn bootstrap_output_seeds_a_combiner() {
    let mut x1 = WeakSourceSim::flat(200, 180, 1).unwrap();
    let mut x2 = WeakSourceSim::flat(210, 190, 2).unwrap();
    let (s1, s2) = (x1.spec("x1").unwrap(), x2.spec("x2").unwrap());
    let plan = plan_bootstrap(
        &s1,
        &s2,
        100,
        SecurityLevel::pow2(16),
        &Independence::mutual(&[&s1, &s2]),
    )
    .unwrap();
    let (b1, b2) = (x1.sample(), x2.sample());
    let (out, spec) = run_bootstrap(&plan, &b1, &b2).unwrap();
    assert_eq!(out.len(), 100);
    assert!(spec.is_secure());
    assert_eq!(run_bootstrap(&plan, &b1, &b2).unwrap().0, out);

    // the extracted key combined with a fresh uniform key
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let other = SourceSpec::secure("pq", 101, SecurityLevel::PERFECT, EntropyKind::Hill);
    let req = CombineRequest::new(
        KeyInput::new(out, spec).unwrap(),
        KeyInput::new(BitString::random(&mut rng, 101), other).unwrap(),
        CombineMode::PrivateSeed { auto_truncate: true },
        SecurityLevel::pow2(8),
        Threat::new(ThreatCase::NoReveal),
    );
    let res = combine_private(&req).unwrap();
    // (201 + 1) / 2 - 16 + 2
    assert_eq!(res.output.len(), 87);
    assert_eq!(res.out_spec.kind(), EntropyKind::Hill);
    assert!(res.out_spec.eps().eps() >= SecurityLevel::pow2(16).eps());
}

#[test]
fn public_seed_combine_is_keyed_by_the_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let key = |rng: &mut ChaCha8Rng, label: &str| {
        KeyInput::new(
            BitString::random(rng, 128),
            SourceSpec::secure(label, 128, SecurityLevel::PERFECT, EntropyKind::MinEntropy),
        )
        .unwrap()
    };
    let (k1, k2) = (key(&mut rng, "a"), key(&mut rng, "b"));
    let run = |seed: BitString| {
        let req = CombineRequest::new(
            k1.clone(),
            k2.clone(),
            CombineMode::PublicSeed {
                seed,
                eps_seed: SecurityLevel::PERFECT,
                generated_after_keys: true,
            },
            SecurityLevel::pow2(16),
            Threat::new(ThreatCase::NoReveal),
        );
        combine_public(&req).unwrap().output
    };
    let seed = BitString::random(&mut rng, 255);
    let a = run(seed.clone());
    assert_eq!(a.len(), 256 - 32 + 2);
    assert_eq!(run(seed.clone()), a);
    assert_ne!(run(seed.flip(0).unwrap()), a);
}

#[test]
fn bit_files_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for len in [0usize, 1, 63, 64, 65, 1000] {
        let bits = BitString::random(&mut rng, len);
        let mut buf = Vec::new();
        bits.write_to(&mut buf).unwrap();
        assert_eq!(buf, bits.to_file_bytes());
        assert_eq!(BitString::read_from(buf.as_slice()).unwrap(), bits);
    }
}

fn sized_hash() -> impl Strategy<Value = (SeededHash, BitString, BitString)> {
    (1usize..=700)
        .prop_flat_map(|n| (Just(n), 1..=n, any::<u64>()))
        .prop_map(|(n, m, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let p = ExtractorParams::modified(n, m).unwrap();
            let h = SeededHash::new(p, BitString::random(&mut rng, n - 1)).unwrap();
            (h, BitString::random(&mut rng, n), BitString::random(&mut rng, n))
        })
}

proptest! {
    #[test]
    fn extraction_is_linear((h, x, y) in sized_hash()) {
        let lhs = h.extract_fast(&x.xor(&y).unwrap()).unwrap();
        let rhs = h.extract_fast(&x).unwrap().xor(&h.extract_fast(&y).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn zero_seed_keeps_the_tail((h, x, _y) in sized_hash()) {
        let (n, m) = (h.params().input_len(), h.params().output_len());
        let zero = SeededHash::new(*h.params(), BitString::zeros(n - 1)).unwrap();
        prop_assert_eq!(zero.extract_fast(&x).unwrap(), x.slice(n - m, n).unwrap());
    }
}
