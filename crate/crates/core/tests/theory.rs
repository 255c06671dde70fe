use ranpac_core::accumulator::{Accumulator, Target};
use ranpac_core::feature_store::{synth_generate, synth_xor, Dataset, SynthSpec, XorSpec};
use ranpac_core::linalg::Matrix;
use ranpac_core::projection::WeightDistribution;
use ranpac_core::protocols::LambdaConfig;
use ranpac_core::rng::Rng;
use ranpac_core::theory::*;

fn unit(rng: &mut Rng, l: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..l).map(|_| rng.gaussian()).collect();
    let n = ranpac_core::linalg::norm(&v);
    v.iter().map(|x| x / n).collect()
}

fn train_accumulator(ds: &Dataset) -> Accumulator {
    let mut acc = Accumulator::classification(ds.feature_dim(), ds.num_classes());
    for r in ds.train() {
        acc.update(&r.features_f64(), Target::Class(r.label as usize)).unwrap();
    }
    acc
}

#[test]
fn inner_products_concentrate_for_both_distributions() {
    let mut rng = Rng::new(10);
    let pairs: Vec<_> = (0..3).map(|_| (unit(&mut rng, 8), unit(&mut rng, 8))).collect();
    for dist in [WeightDistribution::Gaussian, WeightDistribution::Bipolar] {
        let cfg = InnerProductConfig { m_values: vec![16, 64, 256], trials: 400, sigma: 0.5, epsilon: 0.2, distribution: dist, pairs: pairs.clone(), seed: 11 };
        let rep = inner_product_test(&cfg).unwrap();
        for row in &rep.rows {
            assert_eq!(row.trials, 400);
            for s in &row.pairs {
                assert!(s.z_score() < 3.5, "{dist:?} M={} {s:?}", row.m);
                assert!(s.mean_abs_deviation >= 0.0);
            }
        }
        for p in 0..pairs.len() {
            let tails: Vec<f64> = rep.rows.iter().map(|r| r.pairs[p].tail_fraction).collect();
            let se = |q: f64| (q * (1.0 - q) / 400.0).sqrt();
            for w in tails.windows(2) {
                assert!(w[1] <= w[0] + se(w[0]).max(se(w[1])), "{dist:?} {tails:?}");
            }
        }
    }
}

#[test]
fn standard_error_shrinks_with_trials() {
    let mut rng = Rng::new(12);
    let pairs = vec![(unit(&mut rng, 6), unit(&mut rng, 6))];
    let se = |trials| {
        let cfg = InnerProductConfig { m_values: vec![32], trials, sigma: 1.0, epsilon: 0.1, distribution: WeightDistribution::Gaussian, pairs: pairs.clone(), seed: 13 };
        inner_product_test(&cfg).unwrap().rows[0].pairs[0].standard_error
    };
    let ratio = se(100) / se(1600);
    assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
}

#[test]
fn norm_dispersion_shrinks_with_m() {
    let mut rng = Rng::new(14);
    let f = unit(&mut rng, 10);
    let cfg = NormConfig { m_values: vec![1, 4, 64, 1024], trials: 600, sigma: 1.0, epsilon: 0.2, distribution: WeightDistribution::Gaussian, f, seed: 15 };
    let rep = norm_concentration_test(&cfg).unwrap();
    let rel: Vec<f64> = rep.rows.iter().map(|r| r.relative_std).collect();
    assert!(rel[0] >= rel[1..].iter().cloned().fold(0.0, f64::max), "{rel:?}");
    assert!(rel[3] < rel[2], "{rel:?}");
    let tails: Vec<f64> = rep.rows.iter().map(|r| r.relative_tail_fraction).collect();
    assert!(tails[3] <= tails[0]);
}

#[test]
fn independent_random_prototypes_are_nearly_uncorrelated() {
    let mut rng = Rng::new(16);
    let data: Vec<f64> = (0..5 * 4000).map(|_| rng.gaussian()).collect();
    let protos = Matrix::from_vec(5, 4000, data).unwrap();
    let rep = prototype_correlation(&protos).unwrap();
    assert!(rep.mean_off_diagonal.abs() < 0.05, "{}", rep.mean_off_diagonal);
}

#[test]
fn anisotropic_store_is_decorrelated_by_the_gram_head() {
    let ds = synth_generate(&SynthSpec::anisotropic(10, 64, 100, 1.0, 0.95, 17)).unwrap();
    let acc = train_accumulator(&ds);
    let ncm = prototype_correlation_report(&acc, PrototypeKind::Ncm).unwrap();
    let dec = prototype_correlation_report(&acc, PrototypeKind::Decorrelated { lambda: 1.0 }).unwrap();
    assert!(ncm.mean_off_diagonal > 0.3, "{}", ncm.mean_off_diagonal);
    assert!(dec.mean_off_diagonal < ncm.mean_off_diagonal);

    let val = ds.val();
    let vectors = Matrix::from_rows(&val.iter().map(|r| r.features_f64()).collect::<Vec<_>>()).unwrap();
    let labels: Vec<usize> = val.iter().map(|r| r.label as usize).collect();
    let h_ncm = similarity_histogram_report(&acc, &vectors, &labels, PrototypeKind::Ncm).unwrap();
    let h_dec = similarity_histogram_report(&acc, &vectors, &labels, PrototypeKind::Decorrelated { lambda: 1.0 }).unwrap();
    assert!(h_dec.overlap < h_ncm.overlap, "{} vs {}", h_dec.overlap, h_ncm.overlap);
}

#[test]
fn shuffled_labels_give_indistinguishable_histograms() {
    let ds = synth_generate(&SynthSpec::isotropic(4, 16, 150, 1.0, 18)).unwrap();
    let acc = train_accumulator(&ds);
    let val = ds.val();
    let vectors = Matrix::from_rows(&val.iter().map(|r| r.features_f64()).collect::<Vec<_>>()).unwrap();
    let mut labels: Vec<usize> = (0..val.len()).map(|i| i % 4).collect();
    Rng::new(19).shuffle(&mut labels);
    let rep = similarity_histogram_report(&acc, &vectors, &labels, PrototypeKind::Ncm).unwrap();
    assert!(rep.ks_p_value > 0.01, "{}", rep.ks_p_value);
}

#[test]
fn interactions_add_nothing_on_separable_data() {
    let ds = synth_generate(&SynthSpec::isotropic(3, 6, 80, 4.0, 20)).unwrap();
    let cfg = InteractionConfig { m_values: vec![300], lambda: LambdaConfig::default(), tasks: 1, truncate: 100, distribution: WeightDistribution::Gaussian, seed: 1 };
    let rep = interaction_study(&ds, &cfg).unwrap();
    let accs: Vec<f64> = rep.rows.iter().map(|r| r.accuracy).collect();
    assert!(accs.iter().all(|&a| a >= 0.99), "{:?}", rep.rows);
    let spread = accs.iter().cloned().fold(0.0, f64::max) - accs.iter().cloned().fold(1.0, f64::min);
    assert!(spread < 0.01);
}

#[test]
fn xor_needs_a_nonlinearity() {
    let ds = synth_xor(&XorSpec { noise_dims: 2, noise_std: 0.1, margin: 0.2, train: 1000, val: 2000, seed: 21 }).unwrap();
    let cfg = InteractionConfig { m_values: vec![500], lambda: LambdaConfig::default(), tasks: 1, truncate: 100, distribution: WeightDistribution::Gaussian, seed: 2 };
    let rep = interaction_study(&ds, &cfg).unwrap();
    let raw = rep.get("raw", None).unwrap();
    let pair = rep.get("pairwise", None).unwrap();
    let relu = rep.get("rp_relu", Some(500)).unwrap();
    let ident = rep.get("rp_identity", Some(500)).unwrap();
    assert!(pair > 0.95 && raw < 0.6, "{:?}", rep.rows);
    assert!(relu > 0.9 && relu > ident + 0.3, "{:?}", rep.rows);
    assert!((ident - raw).abs() < 0.02, "{:?}", rep.rows);
}
