use proptest::prelude::*;

use typology_core::corpus::{
    build_split, extract_sentences, split_sentences, sq_km_to_sq_mi, sq_mi_to_sq_km, CityRecord,
    DatasetEntry, DensityNormalizer, SplitConfig,
};
use typology_core::embedding::{
    content_hash, cosine_similarity, decode_file, encode_file, norm, similarity_matrix,
    EmbeddingMatrix,
};
use typology_core::feasibility::{bayes_ratio, ContingencyTable};
use typology_core::keyline::{keyline_feature, CvConfig, FoldPlan};
use typology_core::model::{
    fit_logistic, gmean_threshold, loss_and_gradient, roc_auc, sigmoid, threshold_candidates,
    TrainerConfig,
};
use typology_core::{LabelTask, Typology};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, dim).prop_filter("nonzero", |v| v.iter().any(|&x| x != 0.0))
}

fn vector_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
    (1usize..64).prop_flat_map(|d| (vector(d), vector(d)))
}

fn rows(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(vector(dim), 1..max)
}

fn matrix(rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
    let dim = rows[0].len();
    EmbeddingMatrix::from_rows("p", "prop", dim, rows).unwrap()
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((0u32..12).prop_map(|k| k as f64 / 11.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("two classes", |(_, y)| y.iter().any(|&l| l) && y.iter().any(|&l| !l))
}

fn labeled_record(i: usize, label: Typology, via: bool) -> CityRecord {
    CityRecord::from_entry(&DatasetEntry {
        city_id: format!("c{i:03}"),
        name: format!("City {i}"),
        url: String::new(),
        label: Some(label),
        via_flag: Some(via),
        lat: None,
        lon: None,
    })
}

fn typology() -> impl Strategy<Value = Typology> {
    (0usize..4).prop_map(|i| Typology::ALL[i])
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((u, v) in vector_pair()) {
        let s = cosine_similarity(&u, &v).unwrap();
        prop_assert_eq!(s, cosine_similarity(&v, &u).unwrap());
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
    }

    #[test]
    fn cosine_is_scale_invariant((u, v) in vector_pair(), k in -8i32..8, c in 0.01f32..100.0) {
        let s = cosine_similarity(&u, &v).unwrap();
        let p = 2f32.powi(k);
        let exact: Vec<f32> = u.iter().map(|x| x * p).collect();
        prop_assert_eq!(cosine_similarity(&exact, &v).unwrap(), s);
        // Other factors re-round the f32 input.
        let rounded: Vec<f32> = u.iter().map(|x| x * c).collect();
        prop_assert!((cosine_similarity(&rounded, &v).unwrap() - s).abs() <= 1e-6);
    }

    #[test]
    fn embedding_rows_are_unit_norm(r in (1usize..48).prop_flat_map(|d| rows(d, 8))) {
        let m = matrix(r);
        for row in m.iter_rows() {
            prop_assert!((norm(row) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn matrix_entries_equal_pairwise((a, b) in (1usize..32).prop_flat_map(|d| (rows(d, 8), rows(d, 6)))) {
        let (a, b) = (matrix(a), matrix(b));
        let m = similarity_matrix(&a, &b).unwrap();
        for i in 0..a.rows() {
            for k in 0..b.rows() {
                let pair = cosine_similarity(a.row(i), b.row(k)).unwrap();
                prop_assert!((m.get(i, k) - pair).abs() <= 1e-9);
            }
        }
        prop_assert_eq!(keyline_feature(&a, &b).unwrap(), m.max().unwrap());
    }

    #[test]
    fn max_pool_never_decreases_on_supersets(
        (city, k, extra) in (1usize..24).prop_flat_map(|d| (rows(d, 10), rows(d, 5), rows(d, 5)))
    ) {
        let city = matrix(city);
        let mut bigger = k.clone();
        bigger.extend(extra);
        let f = keyline_feature(&city, &matrix(k)).unwrap();
        prop_assert!(keyline_feature(&city, &matrix(bigger)).unwrap() >= f);
    }

    #[test]
    fn cache_file_round_trips_bitwise(r in (1usize..40).prop_flat_map(|d| rows(d, 10)), text in "[a-z ]{0,30}") {
        let m = matrix(r);
        let hash = content_hash(&[text]);
        let (header, back) = decode_file(&encode_file(&m, &hash), "p").unwrap();
        prop_assert_eq!(header.hash, hash);
        prop_assert_eq!(back.as_slice(), m.as_slice());
    }

    #[test]
    fn sentence_splitting_is_deterministic_and_nonempty(text in "[A-Za-z0-9 ,.!?()]{0,200}") {
        let a = split_sentences(&text);
        prop_assert_eq!(&a, &split_sentences(&text));
        prop_assert!(a.iter().all(|s| !s.trim().is_empty()));
    }

    #[test]
    fn extracted_sentences_have_no_markup(
        paras in prop::collection::vec("[A-Z][a-z]{2,8}( [a-z]{1,8}){2,6}\\.", 1..6),
        cite in 1u32..99,
    ) {
        let mut raw = String::from("{{Infobox settlement\n| name = X\n}}\n");
        for (i, p) in paras.iter().enumerate() {
            if i == 1 {
                raw.push_str("\n== History ==\n");
            }
            raw.push_str(&format!("\n{p}[{cite}]<ref>Source.</ref>\n"));
        }
        let marker = format!("[{cite}]");
        let s = extract_sentences(&raw).unwrap();
        prop_assert_eq!(&s, &extract_sentences(&raw).unwrap());
        for line in &s {
            prop_assert!(!line.is_empty());
            prop_assert!(!line.contains("=="));
            prop_assert!(!line.contains(&marker));
            prop_assert!(!line.contains("Source"));
        }
    }

    #[test]
    fn unit_conversion_round_trips(mi2 in 1e-3f64..1e6) {
        let back = sq_km_to_sq_mi(sq_mi_to_sq_km(mi2));
        prop_assert!((back - mi2).abs() <= 1e-6 * mi2);
    }

    #[test]
    fn split_partitions_labeled_records(
        labels in prop::collection::vec((typology(), any::<bool>()), 2..80)
            .prop_filter("two congestion cities", |l| l.iter().filter(|(t, _)| *t == Typology::Congestion).count() >= 2),
        seed in any::<u64>(),
        fraction in 0.3f64..0.7,
    ) {
        let records: Vec<CityRecord> = labels.iter().enumerate().map(|(i, &(t, v))| labeled_record(i, t, v)).collect();
        let config = SplitConfig { train_fraction: fraction, seed, stratified: true };
        let split = build_split(&records, LabelTask::Congestion, &config).unwrap();
        let mut all: Vec<&String> = split.train.iter().chain(&split.test).collect();
        all.sort();
        let mut ids: Vec<&String> = records.iter().map(|r| &r.city_id).collect();
        ids.sort();
        prop_assert_eq!(all, ids);
        prop_assert_eq!(&split, &build_split(&records, LabelTask::Congestion, &config).unwrap());
        let via = split.for_task(&records, LabelTask::Via);
        if let Ok(via) = via {
            prop_assert_eq!(via.train, split.train);
        }
    }

    #[test]
    fn one_vs_all_labels_sum_to_one(t in typology(), via in any::<bool>()) {
        let r = labeled_record(0, t, via);
        let positives = Typology::ALL.iter().filter(|&&x| r.binary_label(x.into()) == Some(true)).count();
        prop_assert_eq!(positives, 1);
        prop_assert_eq!(r.binary_label(LabelTask::Via), Some(via));
    }

    #[test]
    fn stratified_folds_cover_every_sample(
        y in prop::collection::vec(any::<bool>(), 12..60).prop_filter("enough of each class", |y| {
            let p = y.iter().filter(|&&l| l).count();
            p >= 6 && y.len() - p >= 6
        }),
        seed in any::<u64>(),
    ) {
        let cfg = CvConfig { seed, ..Default::default() };
        let plan = FoldPlan::new(&y, &cfg).unwrap();
        prop_assert_eq!(plan.assignments.len(), cfg.repeats);
        for assign in &plan.assignments {
            prop_assert_eq!(assign.len(), y.len());
            for class in [true, false] {
                let mut sizes = vec![0usize; cfg.folds];
                for (i, &f) in assign.iter().enumerate() {
                    prop_assert!(f < cfg.folds);
                    if y[i] == class {
                        sizes[f] += 1;
                    }
                }
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn auc_is_rank_invariant_and_bounded((s, y) in scored_labels()) {
        let auc = roc_auc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let t: Vec<f64> = s.iter().map(|x| (2.0 * x).exp() - 5.0).collect();
        prop_assert_eq!(roc_auc(&t, &y).unwrap(), auc);
        let flipped: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((roc_auc(&flipped, &y).unwrap() - (1.0 - auc)).abs() <= 1e-12);
    }

    #[test]
    fn gmean_threshold_is_the_best_candidate((s, y) in scored_labels()) {
        let g = gmean_threshold(&s, &y).unwrap();
        prop_assert!(g.threshold > 0.0 && g.threshold < 1.0);
        prop_assert!((0.0..=1.0).contains(&g.gmean));
        prop_assert!((g.gmean - (g.tpr * g.tnr).sqrt()).abs() <= 1e-12);
        let pos = y.iter().filter(|&&l| l).count() as f64;
        let neg = y.len() as f64 - pos;
        for t in threshold_candidates(&s) {
            let tp = s.iter().zip(&y).filter(|(&x, &l)| l && x > t).count() as f64;
            let tn = s.iter().zip(&y).filter(|(&x, &l)| !l && x <= t).count() as f64;
            prop_assert!(((tp / pos) * (tn / neg)).sqrt() <= g.gmean + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(
        (x, y, w) in (2usize..20, 1usize..5).prop_flat_map(|(n, p)| (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, p), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-1.5f64..1.5, p),
        )),
        b in -1.0f64..1.0,
        l2 in 0.0f64..0.5,
    ) {
        let (_, gw, gb) = loss_and_gradient(&x, &y, &w, b, l2);
        let h = 1e-5;
        let f = |w: &[f64], b: f64| loss_and_gradient(&x, &y, w, b, l2).0;
        let mut diff = 0.0;
        let mut scale = 0.0;
        for j in 0..=w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            let (mut bp, mut bm) = (b, b);
            if j < w.len() {
                wp[j] += h;
                wm[j] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            let fd = (f(&wp, bp) - f(&wm, bm)) / (2.0 * h);
            let g = if j < w.len() { gw[j] } else { gb };
            diff += (g - fd) * (g - fd);
            scale += g * g;
        }
        prop_assert!(diff.sqrt() <= 1e-5 * scale.sqrt().max(1e-3));
    }

    #[test]
    fn more_iterations_never_raise_the_loss(
        (x, y) in (8usize..30).prop_flat_map(|n| (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), n),
            prop::collection::vec(any::<bool>(), n),
        )).prop_filter("two classes", |(_, y)| y.iter().any(|&l| l) && y.iter().any(|&l| !l)),
        iters in 1usize..6,
    ) {
        let short = TrainerConfig { max_iter: iters, ..Default::default() };
        let long = TrainerConfig { max_iter: 2 * iters, ..Default::default() };
        let a = fit_logistic(&x, &y, &short).unwrap();
        let b = fit_logistic(&x, &y, &long).unwrap();
        prop_assert!(b.loss <= a.loss);
    }

    #[test]
    fn shifting_a_feature_keeps_the_unregularized_ranking(
        (x, y) in (30usize..60).prop_flat_map(|n| (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), n),
            prop::collection::vec(0.0f64..1.0, n),
        )),
        shift in -3.0f64..3.0,
    ) {
        // Labels drawn from a logistic model stay non-separable with high probability.
        let y: Vec<bool> = x.iter().zip(&y).map(|(r, &u)| u < sigmoid(1.5 * r[0] - r[1])).collect();
        prop_assume!(y.iter().filter(|&&l| l).count() >= 5 && y.iter().filter(|&&l| !l).count() >= 5);
        let cfg = TrainerConfig { l2: Some(0.0), tolerance: 1e-10, ..Default::default() };
        let a = fit_logistic(&x, &y, &cfg).unwrap();
        prop_assume!(a.converged && a.weights.iter().all(|w| w.abs() < 50.0));
        let shifted: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] + shift, r[1]]).collect();
        let b = fit_logistic(&shifted, &y, &cfg).unwrap();
        prop_assert!(b.converged);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa - wb).abs() <= 1e-6 * wa.abs().max(1.0));
        }
        let za: Vec<f64> = x.iter().map(|r| r[0] * a.weights[0] + r[1] * a.weights[1] + a.bias).collect();
        let zb: Vec<f64> = shifted.iter().map(|r| r[0] * b.weights[0] + r[1] * b.weights[1] + b.bias).collect();
        for i in 0..za.len() {
            for j in 0..za.len() {
                if za[i] - za[j] > 1e-6 {
                    prop_assert!(zb[i] > zb[j]);
                }
            }
        }
    }

    #[test]
    fn sigmoid_is_monotone_and_bounded(a in -800.0f64..800.0, d in 0.0f64..10.0) {
        let (p, q) = (sigmoid(a), sigmoid(a + d));
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q >= p);
    }

    #[test]
    fn density_transform_is_clipped(
        train in prop::collection::vec(1.0f64..50_000.0, 2..30),
        d in prop::option::of(-10.0f64..100_000.0),
    ) {
        let n = DensityNormalizer::fit(train.iter().map(|&v| Some(v))).unwrap();
        prop_assert!((0.0..=1.0).contains(&n.transform(d)));
    }

    #[test]
    fn bayes_ratio_is_scale_free_and_swap_consistent(
        via_t in 0u64..500, novia_t in 1u64..500, via_not_t in 1u64..500, novia_not_t in 1u64..500,
        k in 1u64..10_000,
    ) {
        let t = ContingencyTable { via_t, via_not_t, novia_t, novia_not_t };
        let r = bayes_ratio(&t).unwrap();
        let scaled = ContingencyTable {
            via_t: via_t * k,
            via_not_t: via_not_t * k,
            novia_t: novia_t * k,
            novia_not_t: novia_not_t * k,
        };
        prop_assert_eq!(bayes_ratio(&scaled).unwrap(), r);
        // Relabelled table: P(not V | T) / P(not V | not T) counted directly.
        let n_t = (via_t + novia_t) as u128;
        let n_not = (via_not_t + novia_not_t) as u128;
        let swapped = bayes_ratio(&t.swap_via()).unwrap();
        prop_assert_eq!(swapped, (novia_t as u128 * n_not) as f64 / (n_t * novia_not_t as u128) as f64);
    }
}
