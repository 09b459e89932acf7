use std::collections::BTreeSet;

use landmark_frames::corpus_io::{
    parse_alignment, read_mask, read_score_matrix, read_score_matrix_text, write_alignment,
    write_mask, write_score_matrix, write_score_matrix_text, BoundaryUnit, FrameTiming, Gender,
    Manner, MannerTable, PhoneAlignment, ScoreMatrix, Segment,
};
use landmark_frames::decoder::viterbi;
use landmark_frames::landmark::{
    annotate, read_landmarks, write_landmarks, AnnotationConfig, AnnotationMode, LandmarkKind,
};
use landmark_frames::scoring::{
    align_edit, per_increment, read_confusion_csv, read_report_csv, write_confusion_csv,
    write_report_csv, INS,
};
use landmark_frames::stats::{cv_folds, welch_t, wilcoxon_signed_rank};
use landmark_frames::strategy::{
    adjust_mask_to_rate, apply_replacement, apply_weights, mask_landmark, mask_or, mask_random,
    mask_regular, mask_subtract, temporal_means, FrameMask, LandmarkRegime, Replacement,
    WeightVector,
};
use proptest::prelude::*;

fn matrix_strategy(max_t: usize, max_s: usize) -> impl Strategy<Value = ScoreMatrix> {
    (1..=max_t, 1..=max_s).prop_flat_map(|(t, s)| {
        prop::collection::vec(-50.0f64..0.0, t * s)
            .prop_map(move |v| ScoreMatrix::new("m", t, s, v).unwrap())
    })
}

fn mask_for(frames: usize) -> impl Strategy<Value = FrameMask> {
    prop::collection::vec(any::<bool>(), frames).prop_map(FrameMask::from_dropped)
}

fn matrix_and_mask() -> impl Strategy<Value = (ScoreMatrix, FrameMask)> {
    matrix_strategy(40, 5).prop_flat_map(|m| {
        let t = m.frames();
        (Just(m), mask_for(t))
    })
}

const PHONES: [&str; 14] = [
    "aa", "iy", "w", "l", "s", "sh", "p", "t", "m", "n", "ch", "jh", "h#", "pcl",
];

fn alignment_strategy() -> impl Strategy<Value = PhoneAlignment> {
    prop::collection::vec((0..PHONES.len(), 1usize..12), 1..14).prop_map(|segs| {
        let mut start = 0;
        let segments = segs
            .into_iter()
            .map(|(p, len)| {
                let s = Segment::new(PHONES[p], start, start + len);
                start += len;
                s
            })
            .collect();
        PhoneAlignment::new("u", segments).unwrap()
    })
}

fn base_events(m: Manner) -> usize {
    match m {
        Manner::Vowel | Manner::Glide => 1,
        Manner::Fricative | Manner::Nasal | Manner::Stop => 2,
        Manner::Affricate => 3,
        _ => 0,
    }
}

fn kind_fits(kind: LandmarkKind, m: Manner) -> bool {
    use LandmarkKind::*;
    match kind {
        V => m == Manner::Vowel,
        G => m == Manner::Glide,
        Fc | Fr => matches!(m, Manner::Fricative | Manner::Affricate),
        Sc => m == Manner::Stop,
        Sr => matches!(m, Manner::Stop | Manner::Affricate),
        Nc | Nr => m == Manner::Nasal,
        MC => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kept_rows_untouched((m, mask) in matrix_and_mask()) {
        for method in [Replacement::Copy, Replacement::Fill0, Replacement::FillConst] {
            let out = apply_replacement(&m, &mask, method, None).unwrap();
            for t in (0..m.frames()).filter(|t| !mask.is_dropped(*t)) {
                prop_assert_eq!(out.row(t), m.row(t));
            }
        }
    }

    #[test]
    fn replacement_rows_follow_their_rule((m, mask) in matrix_and_mask()) {
        let s = m.senones();
        let means: Vec<f64> = (0..s).map(|j| (0..m.frames()).map(|t| m.get(t, j)).sum::<f64>() / m.frames() as f64).collect();
        let fill0 = apply_replacement(&m, &mask, Replacement::Fill0, None).unwrap();
        let fillc = apply_replacement(&m, &mask, Replacement::FillConst, None).unwrap();
        let copy = apply_replacement(&m, &mask, Replacement::Copy, None).unwrap();
        let mut last_kept = None;
        for t in 0..m.frames() {
            if !mask.is_dropped(t) {
                last_kept = Some(t);
                continue;
            }
            prop_assert!(fill0.row(t).iter().all(|v| *v == 0.0));
            for (j, mean) in means.iter().enumerate() {
                prop_assert!((fillc.get(t, j) - mean).abs() <= 1e-12);
            }
            match last_kept {
                Some(k) => prop_assert_eq!(copy.row(t), m.row(k)),
                None => prop_assert_eq!(copy.row(t), fillc.row(t)),
            }
        }
    }

    #[test]
    fn upsample_keeps_constants(t in 2usize..60, p in 2usize..=6, s in 1usize..4, c in -40.0f64..0.0) {
        let m = ScoreMatrix::new("c", t, s, vec![c; t * s]).unwrap();
        let mask = mask_regular(t, p, 1).unwrap();
        let out = apply_replacement(&m, &mask, Replacement::Upsample, None).unwrap();
        for tt in 0..t {
            for j in 0..s {
                prop_assert!((out.get(tt, j) - c).abs() <= 1e-9);
            }
            if !mask.is_dropped(tt) {
                prop_assert_eq!(out.row(tt), m.row(tt));
            }
        }
    }

    #[test]
    fn unit_weights_are_identity(m in matrix_strategy(30, 4)) {
        let out = apply_weights(&m, &WeightVector::ones(m.frames())).unwrap();
        prop_assert_eq!(out, m);
    }

    #[test]
    fn weighting_commutes_with_masking_on_kept_frames(
        (m, mask) in matrix_and_mask(),
        ws in prop::collection::vec(0.0f64..5.0, 40),
    ) {
        let w = WeightVector::new(ws[..m.frames()].to_vec()).unwrap();
        let a = apply_replacement(&apply_weights(&m, &w).unwrap(), &mask, Replacement::Fill0, None).unwrap();
        let b = apply_weights(&apply_replacement(&m, &mask, Replacement::Fill0, None).unwrap(), &w).unwrap();
        for t in (0..m.frames()).filter(|t| !mask.is_dropped(*t)) {
            prop_assert_eq!(a.row(t), b.row(t));
        }
    }

    #[test]
    fn regular_drop_count_is_exact(t in 1usize..500, p in 2usize..10, d_frac in 0.0f64..1.0) {
        let d = 1 + ((p - 1) as f64 * d_frac) as usize % (p - 1);
        let mask = mask_regular(t, p, d).unwrap();
        let expected = (0..t).filter(|x| x % p < d).count();
        prop_assert_eq!(mask.drop_count(), expected);
        if d == 1 {
            prop_assert_eq!(mask.drop_count(), t.div_ceil(p));
        }
    }

    #[test]
    fn random_mask_respects_count_and_protection(
        t in 1usize..200,
        frac in 0.0f64..1.0,
        seed in any::<u64>(),
        prot in prop::collection::btree_set(0usize..200, 0..40),
    ) {
        let prot: BTreeSet<usize> = prot.into_iter().filter(|x| *x < t).collect();
        let free = t - prot.len();
        let n = (free as f64 * frac) as usize;
        let mask = mask_random(t, n, seed, &prot).unwrap();
        prop_assert_eq!(mask.drop_count(), n);
        prop_assert!(prot.iter().all(|x| !mask.is_dropped(*x)));
        prop_assert_eq!(mask_random(t, n, seed, &prot).unwrap(), mask);
        prop_assert!(mask_random(t, free + 1, seed, &prot).is_err());
    }

    #[test]
    fn matched_random_equals_landmark_keep_count(
        t in 1usize..200,
        lms in prop::collection::btree_set(0usize..200, 0..60),
        seed in any::<u64>(),
    ) {
        let lms: BTreeSet<usize> = lms.into_iter().filter(|x| *x < t).collect();
        let keep = mask_landmark(&lms, t, LandmarkRegime::Keep);
        let drop = mask_landmark(&lms, t, LandmarkRegime::Drop);
        let random = mask_random(t, keep.drop_count(), seed, &BTreeSet::new()).unwrap();
        prop_assert_eq!(random.drop_count(), keep.drop_count());
        prop_assert_eq!(keep.drop_count() + drop.drop_count(), t);
    }

    #[test]
    fn hybrid_mask_spares_landmarks(
        t in 1usize..200,
        p in 2usize..6,
        lms in prop::collection::btree_set(0usize..200, 0..60),
    ) {
        let lms: BTreeSet<usize> = lms.into_iter().filter(|x| *x < t).collect();
        let regular = mask_regular(t, p, p - 1).unwrap();
        let hybrid = mask_subtract(&regular, &lms);
        prop_assert!(lms.iter().all(|x| !hybrid.is_dropped(*x)));
        let collide = lms.iter().any(|x| regular.is_dropped(*x));
        if collide {
            prop_assert!(hybrid.drop_rate() < regular.drop_rate());
        } else {
            prop_assert_eq!(hybrid, regular);
        }
    }

    #[test]
    fn rate_adjustment_hits_target(
        mask in mask_for(120),
        prot in prop::collection::btree_set(0usize..120, 0..30),
        target in 0usize..=120,
        seed in any::<u64>(),
    ) {
        let fixed_drops = prot.iter().filter(|x| mask.is_dropped(**x)).count();
        let feasible = target >= fixed_drops && target <= fixed_drops + (120 - prot.len());
        match adjust_mask_to_rate(&mask, target, &prot, seed) {
            Ok(out) => {
                prop_assert!(feasible);
                prop_assert_eq!(out.drop_count(), target);
                for x in &prot {
                    prop_assert_eq!(out.is_dropped(*x), mask.is_dropped(*x));
                }
            }
            Err(_) => prop_assert!(!feasible),
        }
    }

    #[test]
    fn mask_or_is_union(a in mask_for(50), b in mask_for(50)) {
        let u = mask_or(&a, &b).unwrap();
        for t in 0..50 {
            prop_assert_eq!(u.is_dropped(t), a.is_dropped(t) || b.is_dropped(t));
        }
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..7),
        b in prop::collection::vec(0u8..4, 0..7),
        c in prop::collection::vec(0u8..4, 0..7),
    ) {
        let s = |v: &[u8]| v.iter().map(|x| format!("p{x}")).collect::<Vec<_>>();
        let (a, b, c) = (s(&a), s(&b), s(&c));
        let d = |x: &[String], y: &[String]| align_edit(x, y).errors();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        let ab = align_edit(&a, &b);
        let ba = align_edit(&b, &a);
        prop_assert_eq!(ab.sub + ab.ins + ab.del, ba.sub + ba.ins + ba.del);
    }

    #[test]
    fn confusion_marginals_reconcile(
        a in prop::collection::vec(0u8..4, 0..10),
        b in prop::collection::vec(0u8..4, 0..10),
    ) {
        let s = |v: &[u8]| v.iter().map(|x| format!("p{x}")).collect::<Vec<_>>();
        let (a, b) = (s(&a), s(&b));
        let rep = align_edit(&a, &b);
        for p in a.iter().collect::<BTreeSet<_>>() {
            let row: usize = rep.confusion.iter().filter(|((r, _), _)| r == p).map(|(_, c)| c).sum();
            prop_assert_eq!(row, a.iter().filter(|x| *x == p).count());
        }
        let ins: usize = rep.confusion.iter().filter(|((r, _), _)| r == INS).map(|(_, c)| c).sum();
        prop_assert_eq!(ins, rep.ins);
    }

    #[test]
    fn per_increment_is_zero_at_baseline_and_monotone(x in 0.01f64..100.0, y in 0.0f64..200.0, z in 0.0f64..200.0) {
        prop_assert_eq!(per_increment(x, x).unwrap(), 0.0);
        let (lo, hi) = if y <= z { (y, z) } else { (z, y) };
        prop_assert!(per_increment(x, lo).unwrap() <= per_increment(x, hi).unwrap());
    }

    #[test]
    fn wilcoxon_invariant_under_positive_affine_maps(
        pairs in prop::collection::vec((-10i32..10, -10i32..10), 1..15),
        scale in 1u32..8,
        shift in -20i32..20,
    ) {
        let base: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (*a as f64, *b as f64)).collect();
        let f = |x: f64| scale as f64 * x + shift as f64;
        let mapped: Vec<(f64, f64)> = base.iter().map(|(a, b)| (f(*a), f(*b))).collect();
        match (wilcoxon_signed_rank(&base), wilcoxon_signed_rank(&mapped)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.statistic, y.statistic);
                prop_assert_eq!(x.p, y.p);
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn welch_is_antisymmetric(
        a in prop::collection::vec(-10.0f64..10.0, 2..12),
        b in prop::collection::vec(-10.0f64..10.0, 2..12),
    ) {
        let (x, y) = (welch_t(&a, &b).unwrap(), welch_t(&b, &a).unwrap());
        prop_assert_eq!(x.t, -y.t);
        prop_assert_eq!(x.p, y.p);
    }

    #[test]
    fn folds_are_gender_balanced(n_f in 0usize..40, n_m in 0usize..40, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(n_f + n_m >= k);
        let mut spk: Vec<(String, Gender)> = (0..n_f).map(|i| (format!("f{i}"), Gender::F)).collect();
        spk.extend((0..n_m).map(|i| (format!("m{i}"), Gender::M)));
        let folds = cv_folds(&spk, k, seed).unwrap();
        prop_assert!(folds.max_gender_deviation() <= 1.0 + 1e-12);
        let sizes: Vec<usize> = folds.folds.iter().map(|f| f.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n_f + n_m);
        prop_assert_eq!(cv_folds(&spk, k, seed).unwrap(), folds);
    }

    #[test]
    fn annotation_counts_and_positions(al in alignment_strategy(), offset in any::<bool>(), merge in any::<bool>()) {
        let table = MannerTable::timit();
        let mode = if offset { AnnotationMode::Offset } else { AnnotationMode::Boundary };
        let cfg = AnnotationConfig { mode, widen_radius: 0, merge_mc: merge };
        let lms = annotate(&al, &table, &cfg).unwrap();
        prop_assert_eq!(&annotate(&al, &table, &cfg).unwrap(), &lms);
        let segs = al.segments();
        let manners: Vec<Manner> = segs.iter().map(|s| table.get(&s.phone).unwrap()).collect();
        let mc = lms.events().iter().filter(|e| e.kind == LandmarkKind::MC).count();
        let expected: usize = manners.iter().map(|m| base_events(*m)).sum::<usize>() - mc;
        prop_assert_eq!(lms.len(), expected);
        if !merge {
            prop_assert_eq!(mc, 0);
        }
        for e in lms.events() {
            if e.kind == LandmarkKind::MC {
                let j = segs.iter().position(|s| s.start == e.frame);
                prop_assert!(j.is_some_and(|j| j > 0 && manners[j].is_consonantal() && manners[j - 1].is_consonantal()));
            } else {
                let ok = segs.iter().zip(&manners).any(|(s, m)| s.start <= e.frame && e.frame < s.end && kind_fits(e.kind, *m));
                prop_assert!(ok, "{:?} outside a compatible segment", e);
            }
        }
    }

    #[test]
    fn sample_to_frame_is_monotone(a in 0u64..10_000_000, b in 0u64..10_000_000) {
        let timing = FrameTiming::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(timing.sample_to_frame(lo) <= timing.sample_to_frame(hi));
    }

    #[test]
    fn alignment_segments_tile_the_utterance(al in alignment_strategy()) {
        let mut next = 0;
        for s in al.segments() {
            prop_assert_eq!(s.start, next);
            prop_assert!(s.end > s.start);
            next = s.end;
        }
        prop_assert_eq!(next, al.num_frames());
    }

    #[test]
    fn artifacts_round_trip(al in alignment_strategy(), m in matrix_strategy(20, 4), mask in mask_for(30)) {
        let timing = FrameTiming::default();
        prop_assert_eq!(parse_alignment("u", &write_alignment(&al), &timing, BoundaryUnit::Frames).unwrap(), al.clone());
        prop_assert_eq!(read_score_matrix("m", &write_score_matrix(&m)).unwrap(), m.clone());
        prop_assert_eq!(read_score_matrix_text("m", &write_score_matrix_text(&m)).unwrap(), m);
        prop_assert_eq!(read_mask(&write_mask(&mask)).unwrap(), mask);
        let lms = annotate(&al, &MannerTable::timit(), &AnnotationConfig::default()).unwrap();
        prop_assert_eq!(read_landmarks("u", &write_landmarks(&lms)).unwrap(), lms);
    }

    #[test]
    fn reports_round_trip(
        words in prop::collection::vec((prop::collection::vec(0u8..5, 0..8), prop::collection::vec(0u8..5, 0..8)), 1..6),
    ) {
        let s = |v: &[u8]| v.iter().map(|x| format!("p{x}")).collect::<Vec<_>>();
        let rows: Vec<(String, _)> = words
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (format!("u{i}"), align_edit(&s(a), &s(b))))
            .collect();
        let back = read_report_csv(&write_report_csv(&rows)).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for ((ia, ra), (ib, rb)) in rows.iter().zip(&back) {
            prop_assert_eq!(ia, ib);
            prop_assert_eq!((ra.n_ref, ra.ins, ra.del, ra.sub), (rb.n_ref, rb.ins, rb.del, rb.sub));
        }
        let conf = &rows[0].1.confusion;
        prop_assert_eq!(&read_confusion_csv(&write_confusion_csv(conf)).unwrap(), conf);
    }
}

#[test]
fn single_state_path_ignores_weights() {
    let tm = landmark_frames::decoder::TransitionModel::new(vec![0.0], vec![0.0], vec!["a".into()])
        .unwrap();
    let m = ScoreMatrix::new("m", 5, 1, vec![-1.0, -2.0, -3.0, -4.0, -5.0]).unwrap();
    for w in [0.0, 0.5, 3.0] {
        let weights = WeightVector::new(vec![w; 5]).unwrap();
        assert_eq!(
            viterbi(&m, &tm, Some(&weights), None).unwrap().states,
            vec![0; 5]
        );
    }
}

#[test]
fn temporal_means_cover_all_frames() {
    let m = ScoreMatrix::new("m", 3, 2, vec![-1.0, -4.0, -2.0, -5.0, -3.0, -6.0]).unwrap();
    assert_eq!(temporal_means(&m), vec![-2.0, -5.0]);
}
