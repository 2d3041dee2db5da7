//! Property tests for the crate-wide invariants: envelope and result
//! canonical forms round-trip, AEAD round-trips and binds its inputs,
//! measurement is pure, and metric arithmetic holds for arbitrary inputs.

use proptest::prelude::*;
use rand_core::SeedableRng;

use aa_core::crypto::{
    aead_decrypt, aead_encrypt, hash, kem_encapsulate, kem_keygen, EncryptedEnvelope, NONCE_LEN,
};
use aa_core::enclave::{measure_image, EnclaveImage, SIMULATED_BACKEND_ID};
use aa_core::harness::{score_discrete, AuditResult, BenchmarkType, Choice, ChoiceParsing};

type Rng = rand_chacha::ChaCha20Rng;

proptest! {
    #[test]
    fn hash_is_32_bytes_and_deterministic(data in proptest::collection::vec(any::<u8>(), 0..512)) {
        let a = hash(&data);
        prop_assert_eq!(a, hash(&data));
        prop_assert_eq!(a.as_bytes().len(), 32);
    }

    #[test]
    fn envelope_wire_form_round_trips(
        kem in proptest::collection::vec(any::<u8>(), 0..64),
        nonce in proptest::collection::vec(any::<u8>(), NONCE_LEN..=NONCE_LEN),
        aad in proptest::collection::vec(any::<u8>(), 0..64),
        ct in proptest::collection::vec(any::<u8>(), 0..256),
    ) {
        let env = EncryptedEnvelope {
            kem_ciphertext: kem,
            nonce: nonce.try_into().unwrap(),
            associated_data: aad,
            aead_ciphertext: ct,
        };
        let decoded = EncryptedEnvelope::decode(&env.encode()).unwrap();
        prop_assert_eq!(decoded, env);
    }

    #[test]
    fn aead_round_trips_and_binds_aad(
        seed in any::<u64>(),
        msg in proptest::collection::vec(any::<u8>(), 0..512),
        aad in proptest::collection::vec(any::<u8>(), 1..64),
    ) {
        let mut rng = Rng::seed_from_u64(seed);
        let pair = kem_keygen(&mut rng);
        let (key, _) = kem_encapsulate(&pair.public_key(), &mut rng).unwrap();
        let (nonce, sealed) = aead_encrypt(&key, &msg, &aad, &mut rng);
        prop_assert_eq!(aead_decrypt(&key, &nonce, &sealed, &aad).unwrap(), msg);

        let mut wrong = aad.clone();
        wrong[0] ^= 1;
        prop_assert!(aead_decrypt(&key, &nonce, &sealed, &wrong).is_err());
    }

    #[test]
    fn kem_agreement_holds_for_any_seed(seed in any::<u64>()) {
        let mut rng = Rng::seed_from_u64(seed);
        let pair = kem_keygen(&mut rng);
        let (key, ct) = kem_encapsulate(&pair.public_key(), &mut rng).unwrap();
        prop_assert_eq!(aa_core::crypto::kem_decapsulate(&pair, &ct).unwrap(), key);
    }

    #[test]
    fn signature_completeness_and_soundness(
        seed in any::<u64>(),
        msg in proptest::collection::vec(any::<u8>(), 0..256),
        flip in any::<u8>(),
    ) {
        let mut rng = Rng::seed_from_u64(seed);
        let vendor = aa_core::crypto::VendorKeyPair::generate(&mut rng);
        let sig = vendor.sign(&msg);
        prop_assert!(aa_core::crypto::verify(&vendor.public_key(), &msg, &sig));

        let mut tampered = msg.clone();
        tampered.push(flip);
        prop_assert!(!aa_core::crypto::verify(&vendor.public_key(), &tampered, &sig));
    }

    #[test]
    fn measurement_is_pure_and_byte_sensitive(
        image_id in "[a-z][a-z0-9-]{0,24}",
        config in proptest::collection::vec(any::<u8>(), 1..64),
        flip in any::<usize>(),
    ) {
        let image = EnclaveImage { image_id, config };
        let a = measure_image(&image, SIMULATED_BACKEND_ID);
        let b = measure_image(&image, SIMULATED_BACKEND_ID);
        prop_assert_eq!(a, b);

        let mut altered = image.clone();
        let i = flip % altered.config.len();
        altered.config[i] ^= 1;
        prop_assert_ne!(measure_image(&altered, SIMULATED_BACKEND_ID).pcr0, a.pcr0);
    }

    #[test]
    fn discrete_metric_arithmetic(
        responses in proptest::collection::vec(
            proptest::sample::select(vec![
                "A".to_string(), "b".to_string(), "C.".to_string(), "D".to_string(),
                "".to_string(), "the answer is A".to_string(), "E".to_string(),
            ]),
            1..40,
        ),
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::seed_from_u64(seed);
        use rand_core::RngCore;
        let gold: Vec<Choice> = (0..responses.len())
            .map(|_| match rng.next_u32() % 4 {
                0 => Choice::A,
                1 => Choice::B,
                2 => Choice::C,
                _ => Choice::D,
            })
            .collect();
        let m = score_discrete(&responses, &gold, ChoiceParsing::Strict).unwrap();
        prop_assert!(m.n_correct <= m.n_valid);
        prop_assert!(m.n_valid <= responses.len() as u64);
        prop_assert_eq!(m.accuracy_all.den, responses.len() as u64);
        prop_assert_eq!(m.accuracy_all.num, m.n_correct);
        // Invalid answers never count as correct, so the valid-only ratio
        // can only be larger.
        prop_assert!(m.accuracy_valid.value() >= m.accuracy_all.value());
    }

    #[test]
    fn canonical_result_form_is_stable(
        n_correct in 0u64..20,
        extra_valid in 0u64..5,
        extra_prompts in 0u64..5,
        skipped in 0u64..3,
        hist_seed in any::<u64>(),
    ) {
        let n_valid = n_correct + extra_valid;
        let n_scored = n_valid + extra_prompts;
        let n_prompts = n_scored + skipped;
        let mut rng = Rng::seed_from_u64(hist_seed);
        use rand_core::RngCore;
        let mut histogram = std::collections::BTreeMap::new();
        let mut remaining = n_scored;
        while remaining > 0 {
            let count = 1 + rng.next_u64() % remaining;
            *histogram.entry(rng.next_u64() % 30).or_insert(0) += count;
            remaining -= count;
        }
        let result = AuditResult {
            benchmark: BenchmarkType::DiscreteLabel,
            n_prompts,
            n_skipped: skipped,
            metrics: aa_core::harness::MetricBlock::Discrete(aa_core::harness::DiscreteMetrics {
                n_valid,
                n_correct,
                accuracy_all: aa_core::harness::Ratio::new(n_correct, n_scored),
                accuracy_valid: aa_core::harness::Ratio::new(n_correct, n_valid),
            }),
            token_histogram: histogram,
        };
        let bytes = result.canonical_bytes();
        let parsed = AuditResult::from_canonical_bytes(&bytes).unwrap();
        prop_assert_eq!(parsed.canonical_bytes(), bytes);
        prop_assert_eq!(parsed.result_hash(), result.result_hash());
        // Histogram mass equals the scored count.
        prop_assert_eq!(parsed.token_histogram.values().sum::<u64>(), n_scored);
    }
}
