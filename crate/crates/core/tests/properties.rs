use proptest::collection::vec;
use proptest::prelude::*;

use motas::augment::{clean_transcript, merge_augmented, CohortItem};
use motas::cache::FeatureCache;
use motas::harness::{parse_manifest, write_manifest, ManifestRecord, Split};
use motas::metrics::{aggregate_subject, average_over_seeds, confusion, metrics, Aggregation};
use motas::moe::MoeLayer;
use motas::tensor::{bce_sum, softmax, ParamStore, Rng};
use motas::{Label, Modality, Source};

fn labels(bits: &[bool]) -> Vec<Label> {
    bits.iter().map(|&b| if b { Label::Ad } else { Label::Cn }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_is_a_strictly_positive_simplex(x in vec(-1e4f64..1e4, 1..32)) {
        let w = softmax(&x);
        prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Larger logits never get smaller weights.
        for i in 0..x.len() {
            for j in 0..x.len() {
                if x[i] > x[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn gate_weights_sum_to_one(seed in any::<u64>(), scale in 0.0f64..1e4) {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let layer = MoeLayer::init(&mut store, Modality::Spec, 12, 4, 5, 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..12).map(|_| rng.uniform(-scale, scale)).collect();
        let w = layer.gate_values(&store, &x).unwrap();
        prop_assert_eq!(w.len(), 4);
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // The output is a convex combination of the experts, coordinate-wise.
        let y = layer.forward_values(&store, &x).unwrap();
        let experts: Vec<Vec<f64>> = (0..4).map(|i| layer.expert_values(&store, &x, i).unwrap()).collect();
        for (j, &yj) in y.iter().enumerate() {
            let lo = experts.iter().map(|e| e[j]).fold(f64::INFINITY, f64::min);
            let hi = experts.iter().map(|e| e[j]).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            prop_assert!(yj >= lo - tol && yj <= hi + tol);
        }
    }

    #[test]
    fn bce_is_nonnegative_and_zero_only_when_confident(
        pairs in vec((0.0f64..=1.0, any::<bool>()), 1..40)
    ) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(p, b)| (p, f64::from(u8::from(b)))).unzip();
        let loss = bce_sum(&p, &y);
        prop_assert!(loss.is_finite() && loss >= 0.0);
        let perfect: Vec<f64> = y.clone();
        prop_assert!(bce_sum(&perfect, &y) < 1e-6 * y.len() as f64);
    }

    #[test]
    fn metric_identities(pairs in vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let c = confusion(&labels(&p), &labels(&l)).unwrap();
        prop_assert_eq!(c.total() as usize, p.len());
        let r = metrics(&c).unwrap().values;
        for v in r.to_array() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // Accuracy is the support-weighted mean of the two recalls.
        let n = c.total() as f64;
        let weighted = ((c.tp + c.fn_) as f64 * r.recall_ad + (c.tn + c.fp) as f64 * r.recall_cn) / n;
        prop_assert!((weighted - r.accuracy).abs() < 1e-12);
        // Swapping the class roles swaps the per-class metrics.
        let s = metrics(&c.swapped()).unwrap().values;
        prop_assert_eq!(s.precision_ad, r.precision_cn);
        prop_assert_eq!(s.recall_cn, r.recall_ad);
        prop_assert_eq!(s.f1_ad, r.f1_cn);
        prop_assert_eq!(s.accuracy, r.accuracy);
    }

    #[test]
    fn seed_average_of_copies_is_exact(pairs in vec((any::<bool>(), any::<bool>()), 1..50), k in 1usize..8) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let r = metrics(&confusion(&labels(&p), &labels(&l)).unwrap()).unwrap();
        let avg = average_over_seeds(&vec![r.clone(); k]).unwrap();
        prop_assert_eq!(avg.mean, r.values);
        prop_assert!(avg.sd.to_array().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subject_scores_stay_in_range(probs in vec(0.0f64..=1.0, 1..20), t in 0.05f64..0.95) {
        for how in [Aggregation::MeanProb, Aggregation::Majority] {
            let s = aggregate_subject(&probs, how, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
        let mean = aggregate_subject(&probs, Aggregation::MeanProb, t).unwrap();
        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
    }

    #[test]
    fn cache_round_trips_bitwise(
        dim in 1usize..20,
        rows in vec(("[a-zé0-9@_.-]{1,12}", vec(any::<u32>(), 20)), 0..30)
    ) {
        let mut cache = FeatureCache::new(dim);
        for (id, bits) in &rows {
            if cache.contains(id) {
                continue;
            }
            let row: Vec<f32> = bits[..dim].iter().map(|&b| f32::from_bits(b)).collect();
            cache.push(id.clone(), &row).unwrap();
        }
        let bytes = cache.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), cache.encoded_len());
        let (back, used) = FeatureCache::decode_prefix(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back.ids(), cache.ids());
        for ((_, a), (_, b)) in cache.iter().zip(back.iter()) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // Any strict prefix is rejected rather than misread.
        if !bytes.is_empty() {
            let cut = bytes.len() / 2;
            prop_assert!(FeatureCache::decode_prefix(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn cleaned_transcripts_are_canonical(raw in "\\PC{0,60}") {
        let c = clean_transcript(&raw);
        prop_assert!(c.chars().all(|ch| ch.is_ascii_lowercase() || ch.is_ascii_digit() || " '-".contains(ch)));
        prop_assert!(!c.starts_with(' ') && !c.ends_with(' ') && !c.contains("  "));
        prop_assert_eq!(clean_transcript(&c), c.clone());
    }

    #[test]
    fn merge_counts_add_up(n_real in 2usize..30, n_syn in 0usize..30, invalid in vec(any::<bool>(), 30)) {
        let real: Vec<CohortItem> = (0..n_real)
            .map(|i| CohortItem::real(format!("r{i}"), if i % 2 == 0 { Label::Ad } else { Label::Cn }))
            .collect();
        let syn: Vec<CohortItem> = (0..n_syn)
            .map(|i| CohortItem {
                source: Source::Synthetic,
                voice_of: Some("r0".into()),
                transcript_of: Some("r1".into()),
                invalid: invalid[i],
                ..CohortItem::real(format!("s{i}"), Label::Ad)
            })
            .collect();
        let m = merge_augmented(&real, &syn).unwrap();
        let dropped = invalid[..n_syn].iter().filter(|&&b| b).count();
        prop_assert_eq!(m.excluded_invalid, dropped);
        prop_assert_eq!(m.items.len(), n_real + n_syn - dropped);
        let total: usize = m.summary.values().map(|s| s.real + s.synthetic).sum();
        prop_assert_eq!(total, m.items.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn manifest_round_trips(ids in proptest::collection::btree_set("[a-z][a-z0-9]{0,8}", 1..20), test_mask in vec(any::<bool>(), 20)) {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<ManifestRecord> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut item = CohortItem::real(id.clone(), if i % 3 == 0 { Label::Cn } else { Label::Ad });
                item.transcript = Some(format!("word {i}"));
                ManifestRecord::new(item, if test_mask[i] { Split::Test } else { Split::Train })
            })
            .collect();
        let path = dir.path().join("m.jsonl");
        write_manifest(&records, &path).unwrap();
        let back = parse_manifest(&path).unwrap();
        prop_assert_eq!(back, records);
    }
}
