use latent_scan::ita::{categorize_ita, compute_ita, ita_from_means, srgb_to_lab, PixelMask, RgbImage, SkinTone};
use latent_scan::metrics::{auroc, max_f1};
use latent_scan::odin::{
    argmax, odin_perturb, temperature_softmax, DifferentiableClassifier, OdinConfig, OdinMode,
    ReferenceNet, TargetLoss,
};
use latent_scan::scan::{compute_pvalues, prefix_curve, scan_pvalues, BackgroundModel, Statistic};
use latent_scan::tensor_io::{read_activation_set, write_activation_set, ActivationSet, LayerActivations};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_value() -> impl Strategy<Value = f64> {
    (-40i32..40).prop_map(|v| f64::from(v) / 8.0)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(grid_value(), cols), rows)
}

fn background_and_test() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..8, 1usize..30, 1usize..6).prop_flat_map(|(cols, m, n)| (matrix(m, cols), matrix(n, cols)))
}

fn labelled_scores(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((grid_value(), any::<bool>()), 2..max_len).prop_filter_map(
        "needs both classes",
        |pairs| {
            let (s, l): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            (l.iter().any(|&x| x) && l.iter().any(|&x| !x)).then_some((s, l))
        },
    )
}

fn net_and_input() -> impl Strategy<Value = (ReferenceNet, Vec<f64>)> {
    (any::<u64>(), prop::collection::vec(2usize..7, 2..=5), prop::collection::vec(-0.3f64..1.3, 7)).prop_map(
        |(seed, sizes, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = ReferenceNet::random(&sizes, &mut rng).unwrap();
            let x = x[..net.input_dim()].to_vec();
            (net, x)
        },
    )
}

fn monotone(kind: u8, x: f64) -> f64 {
    match kind % 4 {
        0 => x.exp(),
        1 => x * x * x,
        2 => 3.0 * x - 7.0,
        _ => x.atan(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn store_round_trip_preserves_bits(
        bits in prop::collection::vec(any::<u32>(), 1..40),
        cols in 1usize..5,
        ids_seed in any::<u16>(),
    ) {
        let finite: Vec<f32> = bits.into_iter().map(f32::from_bits).filter(|v| v.is_finite()).collect();
        let rows = finite.len() / cols;
        prop_assume!(rows > 0);
        let values = finite[..rows * cols].to_vec();
        let layer = LayerActivations::new("conv 1", rows, cols, values.clone()).unwrap();
        let second = LayerActivations::new("gp", rows, 1, vec![0.5; rows]).unwrap();
        let ids: Vec<String> = (0..rows).map(|i| format!("id {ids_seed}-{i}, é")).collect();
        let set = ActivationSet::new("eval", ids, vec![layer, second]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_activation_set(&set, dir.path()).unwrap();
        let back = read_activation_set(dir.path()).unwrap();
        prop_assert_eq!(&back, &set);
        let back_bits: Vec<u32> = back.layers()[0].values().iter().map(|v| v.to_bits()).collect();
        let want_bits: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(back_bits, want_bits);
    }

    #[test]
    fn truncated_layer_file_rejected(rows in 1usize..6, cols in 1usize..6, cut in 4usize..24) {
        let layer = LayerActivations::new("l", rows, cols, vec![1.0; rows * cols]).unwrap();
        let set = ActivationSet::new("s", (0..rows).map(|i| i.to_string()).collect(), vec![layer]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_activation_set(&set, dir.path()).unwrap();
        let path = dir.path().join(&manifest.sets[0].layers[0].file);
        let bytes = std::fs::read(&path).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        std::fs::write(&path, &bytes[..keep]).unwrap();
        prop_assert!(read_activation_set(dir.path()).is_err());
    }

    #[test]
    fn pvalues_invariant_under_monotone_transform((bg, test) in background_and_test(), kind in any::<u8>()) {
        let mk = |rows: &[Vec<f64>]| LayerActivations::from_rows_f64("l", rows).unwrap();
        let f = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|&v| monotone(kind, v)).collect()).collect()
        };
        let plain = compute_pvalues(&mk(&bg), &mk(&test)).unwrap();
        let moved = compute_pvalues(&mk(&f(&bg)), &mk(&f(&test))).unwrap();
        for i in 0..test.len() {
            prop_assert_eq!(plain.row(i), moved.row(i));
        }
    }

    #[test]
    fn pvalues_on_grid_and_match_counts((bg, test) in background_and_test()) {
        let mk = |rows: &[Vec<f64>]| LayerActivations::from_rows_f64("l", rows).unwrap();
        let p = BackgroundModel::new(&mk(&bg)).pvalues(&mk(&test)).unwrap();
        let m = bg.len();
        for (i, row) in test.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let count = bg.iter().filter(|b| b[j] >= x).count();
                prop_assert_eq!(p.numerator(i, j) as usize, count + 1);
                prop_assert!(p.get(i, j) >= 1.0 / (m + 1) as f64 && p.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn prefix_scan_is_the_curve_maximum(
        p in prop::collection::vec(0.001f64..1.0, 1..40),
        alpha_max in 0.01f64..1.0,
        hc in any::<bool>(),
    ) {
        let stat = if hc { Statistic::HigherCriticism } else { Statistic::BerkJones };
        let best = scan_pvalues(&p, alpha_max, stat);
        let curve = prefix_curve(&p, alpha_max, stat);
        let curve_max = curve.iter().map(|c| c.score).fold(0.0, f64::max);
        prop_assert_eq!(best.score, curve_max);
        prop_assert_eq!(best.node_indices.len(), best.k_star);
        prop_assert!(best.node_indices.iter().all(|&i| p[i] < alpha_max));
        prop_assert!(best.score >= 0.0);
    }

    #[test]
    fn shifted_samples_outscore_null_samples(seed in any::<u64>()) {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n01 = Normal::new(0.0, 1.0).unwrap();
        let draw = |rng: &mut ChaCha8Rng, shift: f64, rows: usize| -> Vec<Vec<f64>> {
            (0..rows).map(|_| (0..10).map(|_| n01.sample(rng) + shift).collect()).collect()
        };
        let bg = LayerActivations::from_rows_f64("l", &draw(&mut rng, 0.0, 100)).unwrap();
        let model = BackgroundModel::new(&bg);
        let mean_score = |rows: Vec<Vec<f64>>| {
            let p = model.pvalues(&LayerActivations::from_rows_f64("l", &rows).unwrap()).unwrap();
            (0..rows.len()).map(|i| scan_pvalues(&p.row(i), 0.5, Statistic::BerkJones).score).sum::<f64>() / rows.len() as f64
        };
        let held_out = mean_score(draw(&mut rng, 0.0, 40));
        let shifted = mean_score(draw(&mut rng, 2.0, 40));
        prop_assert!(shifted > held_out, "shifted {} vs null {}", shifted, held_out);
    }

    #[test]
    fn softmax_argmax_invariant(
        logits in prop::collection::vec((-3200i32..3200).prop_map(|v| f64::from(v) / 64.0), 1..12),
        tau in prop::sample::select(vec![0.5, 1.0, 2.0, 5.0, 10.0]),
    ) {
        prop_assert_eq!(argmax(&temperature_softmax(&logits, tau)), argmax(&logits));
    }

    #[test]
    fn unit_temperature_is_plain_softmax(logits in prop::collection::vec(-30.0f64..30.0, 1..10)) {
        let total: f64 = logits.iter().map(|z| z.exp()).sum();
        for (p, z) in temperature_softmax(&logits, 1.0).iter().zip(&logits) {
            prop_assert!((p - z.exp() / total).abs() < 1e-12);
        }
    }

    #[test]
    fn odin_zero_epsilon_and_bound(
        (net, x) in net_and_input(),
        tau in prop::sample::select(vec![1.0, 2.0, 10.0, 1000.0]),
        eps in prop::sample::select(vec![0.0002, 0.005, 0.05, 0.2, 0.7]),
    ) {
        let same = odin_perturb(&net, &x, &OdinConfig::new(tau, 0.0, OdinMode::Standard).unwrap()).unwrap();
        prop_assert!(same.iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits()));
        let moved = odin_perturb(&net, &x, &OdinConfig::new(tau, eps, OdinMode::Low).unwrap()).unwrap();
        for (a, b) in moved.iter().zip(&x) {
            prop_assert!((a - b).abs() <= eps);
        }
    }

    #[test]
    fn reference_gradient_matches_finite_differences(
        (net, x) in net_and_input(),
        class in any::<prop::sample::Index>(),
        tau in prop::sample::select(vec![0.5, 1.0, 3.0, 100.0]),
    ) {
        let loss = TargetLoss::new(class.index(net.class_count()), tau);
        let grad = net.input_gradient(&x, &loss).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..x.len()).map(|i| {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            (loss.value(&net.forward(&up).unwrap()) - loss.value(&net.forward(&down).unwrap())) / (2.0 * h)
        }).collect();
        let scale = fd.iter().chain(&grad).map(|v| v.abs()).fold(1e-6, f64::max);
        let err = grad.iter().zip(&fd).map(|(g, f)| (g - f).abs()).fold(0.0, f64::max) / scale;
        prop_assert!(err < 1e-4, "relative error {}", err);
    }

    #[test]
    fn auroc_monotone_invariance((s, l) in labelled_scores(40), kind in any::<u8>()) {
        let moved: Vec<f64> = s.iter().map(|&v| monotone(kind, v)).collect();
        prop_assert_eq!(auroc(&moved, &l).unwrap(), auroc(&s, &l).unwrap());
        prop_assert_eq!(max_f1(&moved, &l).unwrap().0, max_f1(&s, &l).unwrap().0);
    }

    #[test]
    fn auroc_complement_without_ties(
        raw in prop::collection::hash_set(-10_000i32..10_000, 2..40),
        bits in prop::collection::vec(any::<bool>(), 40),
    ) {
        let s: Vec<f64> = raw.into_iter().map(f64::from).collect();
        let mut l = bits[..s.len()].to_vec();
        l[0] = true;
        l[1] = false;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = auroc(&s, &l).unwrap();
        prop_assert!((auroc(&neg, &l).unwrap() - (1.0 - a)).abs() < 1e-15);
    }

    #[test]
    fn category_partition(ita in -180.0f64..180.0) {
        let c = categorize_ita(ita);
        let expected = if ita > 41.0 { SkinTone::Light } else if ita > 28.0 { SkinTone::Intermediate } else { SkinTone::Dark };
        prop_assert_eq!(c, expected);
    }

    #[test]
    fn ita_increases_with_lightness(l1 in 0.0f64..100.0, dl in 0.001f64..50.0, b in 0.1f64..60.0) {
        prop_assert!(ita_from_means(l1 + dl, b) > ita_from_means(l1, b));
    }

    #[test]
    fn gray_is_neutral(v in any::<u8>()) {
        let (_, a, b) = srgb_to_lab(v, v, v);
        prop_assert!(a.abs() < 0.5 && b.abs() < 0.5);
    }

    #[test]
    fn mask_equals_extracted_pixels(
        pixels in prop::collection::vec((any::<[u8; 3]>(), any::<bool>()), 1..30),
    ) {
        prop_assume!(pixels.iter().any(|p| p.1));
        let img = RgbImage::new(pixels.len(), 1, pixels.iter().map(|p| p.0).collect()).unwrap();
        let mask = PixelMask::new(pixels.len(), 1, pixels.iter().map(|p| p.1).collect()).unwrap();
        let kept: Vec<[u8; 3]> = pixels.iter().filter(|p| p.1).map(|p| p.0).collect();
        let crop = RgbImage::new(kept.len(), 1, kept).unwrap();
        prop_assert_eq!(compute_ita("s", &img, Some(&mask)).unwrap(), compute_ita("s", &crop, None).unwrap());
    }
}
