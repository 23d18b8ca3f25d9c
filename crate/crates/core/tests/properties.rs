use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use streampop::binarize::{binarize, compute_cutoff, CutoffMethod, CutoffTable};
use streampop::data::{Dataset, Measure, Streamer};
use streampop::features::{compute_features, Feature, PopularGames, RawFeatureVector};
use streampop::glm::auc;
use streampop::labels::{absolute_label, relative_growth_label, GrowthMode, Task, TaskSpec};
use streampop::oracle::brute_force_auc;
use streampop::synth::{generate, SynthConfig};

fn small(seed: u64) -> Dataset {
    generate(&SynthConfig {
        seed,
        n_streamers: 12,
        n_months: 14,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn features(ds: &Dataset, s: &Streamer, t: u32, delta: u32) -> RawFeatureVector {
    compute_features(s, &PopularGames::from_table(&ds.game_table), t, delta).unwrap()
}

fn values_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec((-40i32..40).prop_map(|v| f64::from(v) / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(v, mut m)| {
                m[0] = true;
                m[1] = false;
                (v, m)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn event_order_never_changes_features(seed in 0u64..1000, shuffle in any::<u64>(), t in 0u32..12, delta in 1u32..3) {
        let ds = small(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        let shuffled: Vec<Streamer> = ds
            .streamers()
            .cloned()
            .map(|mut s| {
                s.broadcasts.shuffle(&mut rng);
                s.posts.shuffle(&mut rng);
                s
            })
            .collect();
        let again = Dataset::new(shuffled, ds.game_table.clone()).unwrap();
        for (a, b) in ds.streamers().zip(again.streamers()) {
            prop_assert_eq!(features(&ds, a, t, delta), features(&again, b, t, delta));
        }
    }

    #[test]
    fn tweet_counts_add_over_adjacent_windows(seed in 0u64..1000, t in 0u32..11) {
        let ds = small(seed);
        for s in ds.streamers() {
            let whole = features(&ds, s, t, 2).get(Feature::NTweet);
            let parts = features(&ds, s, t, 1).get(Feature::NTweet) + features(&ds, s, t + 1, 1).get(Feature::NTweet);
            prop_assert_eq!(whole, parts);
        }
    }

    #[test]
    fn doubling_durations_doubles_broadcast_len_only(seed in 0u64..1000, t in 0u32..12) {
        let ds = small(seed);
        for s in ds.streamers() {
            let mut long = s.clone();
            for b in &mut long.broadcasts {
                b.duration_min *= 2.0;
            }
            let (a, b) = (features(&ds, s, t, 1), features(&ds, &long, t, 1));
            prop_assert!((b.get(Feature::BroadcastLen) - 2.0 * a.get(Feature::BroadcastLen)).abs() <= 1e-9 * a.get(Feature::BroadcastLen).max(1.0));
            prop_assert_eq!(a.get(Feature::NBroadcast), b.get(Feature::NBroadcast));
            prop_assert_eq!(a.get(Feature::SchedRegularity), b.get(Feature::SchedRegularity));
        }
    }

    #[test]
    fn windows_partition_events(seed in 0u64..1000, delta in 1u32..5) {
        let ds = small(seed);
        for s in ds.streamers() {
            let k = s.months() / delta;
            let mut broadcasts = 0;
            let mut posts = 0;
            for i in 0..k {
                let w = s.window_events(i * delta, delta).unwrap();
                broadcasts += w.broadcasts.len();
                posts += w.posts.len();
            }
            let all = s.window_events(0, k * delta).unwrap();
            prop_assert_eq!(broadcasts, all.broadcasts.len());
            prop_assert_eq!(posts, all.posts.len());
        }
    }

    #[test]
    fn label_positive_rates(seed in 0u64..1000, t in 1u32..8, delta in 1u32..4) {
        let ds = generate(&SynthConfig { seed, n_streamers: 60, n_months: 14, ..SynthConfig::default() }).unwrap();
        for measure in Measure::ALL {
            let end_values: Vec<f64> = ds.streamers().map(|s| s.measure_at(measure, t + delta).unwrap()).collect();
            let abs = absolute_label(&ds, TaskSpec::new(Task::Absolute, measure, t, delta).unwrap()).unwrap();
            let threshold = abs.labels.iter().filter(|(_, &y)| y).map(|(id, _)| ds.get(id).unwrap().measure_at(measure, t + delta).unwrap()).fold(f64::INFINITY, f64::min);
            let ties = end_values.iter().filter(|&&v| v == threshold).count() as f64 / end_values.len() as f64;
            prop_assert!(abs.positive_rate() >= 0.1 && abs.positive_rate() <= 0.1 + ties + 1e-12);
            let rel = relative_growth_label(&ds, TaskSpec::new(Task::RelativeGrowth, measure, t, delta).unwrap(), GrowthMode::Fractional).unwrap();
            prop_assert!(rel.positive_rate() <= 0.5);
        }
    }

    #[test]
    fn cutoff_is_equivariant_under_increasing_maps((values, popular) in values_and_mask()) {
        let base = compute_cutoff(&values, &popular).unwrap();
        let maps: [fn(f64) -> f64; 3] = [|x| 3.0 * x - 5.0, |x| x * x * x + x, |x| (x / 4.0).exp()];
        for g in maps {
            let mapped: Vec<f64> = values.iter().map(|&x| g(x)).collect();
            let c = compute_cutoff(&mapped, &popular).unwrap();
            prop_assert_eq!(c.k_star, base.k_star);
            prop_assert_eq!(c.c_f, g(base.c_f));
            for (&x, &y) in values.iter().zip(&mapped) {
                prop_assert_eq!(x > base.c_f, y > c.c_f);
            }
        }
    }

    #[test]
    fn auc_matches_pair_count_and_ignores_increasing_maps((scores, labels) in values_and_mask()) {
        let fast = auc(&scores, &labels).unwrap();
        prop_assert!((fast - brute_force_auc(&scores, &labels)).abs() < 1e-12);
        let mapped: Vec<f64> = scores.iter().map(|&s| (s / 3.0).exp() + s).collect();
        prop_assert!((auc(&mapped, &labels).unwrap() - fast).abs() < 1e-12);
    }

    #[test]
    fn bits_follow_the_strict_cutoff(seed in 0u64..1000) {
        let ds = small(seed);
        let raws: Vec<RawFeatureVector> = ds.streamers().map(|s| features(&ds, s, 1, 2)).collect();
        let mut popular = vec![false; raws.len()];
        popular[0] = true;
        let table = CutoffTable::fit(Measure::Followers, 1, 2, CutoffMethod::Argmax, &raws, &popular).unwrap();
        for raw in &raws {
            let bits = binarize(raw, &table);
            for f in Feature::ALL {
                prop_assert_eq!(bits.get(f), raw.get(f) > table.get(f).c_f);
            }
        }
    }
}
