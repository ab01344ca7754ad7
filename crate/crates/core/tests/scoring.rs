use curabench::scoring::meteor::{align, count_chunks, tokenize};
use curabench::scoring::{
    meteor, meteor_detail, score_four_afc, score_two_afc, score_winoground, DiffType, FourAfcSample, MatchStage,
    MeteorConfig, TwoAfcSample, WinoQuad,
};
use proptest::prelude::*;

const WORDS: [&str; 16] = [
    "the", "dog", "dogs", "ball", "balls", "look", "looking", "at", "a", "cat", "is", "on", "rug", "play",
    "playing", "red",
];

fn sentence(idx: Vec<usize>) -> String {
    idx.into_iter().map(|i| WORDS[i % WORDS.len()]).collect::<Vec<_>>().join(" ")
}

fn words() -> impl Strategy<Value = String> {
    proptest::collection::vec(0usize..WORDS.len(), 1..9).prop_map(sentence)
}

fn apply(f: u8, x: f64) -> f64 {
    match f % 3 {
        0 => x.exp(),
        1 => 3.0 * x - 7.0,
        _ => x.atan(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn meteor_bounds_and_m0(c in words(), r in words()) {
        let cfg = MeteorConfig::default();
        let d = meteor_detail(&c, &r, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&d.score));
        if d.matches == 0 {
            prop_assert_eq!(d.score, 0.0);
        } else {
            prop_assert!(d.chunks >= 1 && d.chunks <= d.matches);
        }
    }

    #[test]
    fn identical_sentences(r in words()) {
        let cfg = MeteorConfig::default();
        let m = tokenize(&r).len() as f64;
        let s = meteor(&r, &r, &cfg).unwrap();
        prop_assert!((s - (1.0 - 0.5 / m.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn permuting_identical_candidate_never_helps(r in words(), perm_seed in any::<u64>()) {
        let cfg = MeteorConfig::default();
        let mut toks = tokenize(&r);
        let n = toks.len();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            toks.swap(i, (s >> 33) as usize % (i + 1));
        }
        let base = meteor(&r, &r, &cfg).unwrap();
        prop_assert!(meteor(&toks.join(" "), &r, &cfg).unwrap() <= base + 1e-12);
    }

    #[test]
    fn alignment_is_one_to_one(c in words(), r in words()) {
        let a = align(&tokenize(&c), &tokenize(&r), &[MatchStage::Exact, MatchStage::Stem]);
        let mut cs: Vec<usize> = a.iter().map(|p| p.0).collect();
        let mut rs: Vec<usize> = a.iter().map(|p| p.1).collect();
        cs.dedup();
        rs.sort_unstable();
        rs.dedup();
        prop_assert_eq!(cs.len(), a.len());
        prop_assert_eq!(rs.len(), a.len());
        prop_assert!(count_chunks(&a) <= a.len());
    }

    #[test]
    fn stemming_only_adds_matches(c in words(), r in words()) {
        let exact = MeteorConfig { stages: vec![MatchStage::Exact], ..MeteorConfig::default() };
        let both = MeteorConfig::default();
        prop_assert!(meteor_detail(&c, &r, &both).unwrap().matches >= meteor_detail(&c, &r, &exact).unwrap().matches);
    }

    #[test]
    fn monotone_transform_keeps_every_indicator(
        scores in proptest::collection::vec(proptest::array::uniform4(-3.0f64..3.0), 1..60),
        f in any::<u8>(),
    ) {
        let four: Vec<FourAfcSample> = scores.iter().enumerate().map(|(i, s)| FourAfcSample {
            sample_id: i.to_string(), label: "x".into(), candidate_scores: *s, correct_index: i % 4,
        }).collect();
        let four_t: Vec<FourAfcSample> = four.iter().cloned().map(|mut x| {
            x.candidate_scores = x.candidate_scores.map(|v| apply(f, v)); x
        }).collect();
        prop_assert_eq!(score_four_afc(&four).unwrap(), score_four_afc(&four_t).unwrap());

        let quads: Vec<WinoQuad> = scores.iter().enumerate().map(|(i, s)| WinoQuad {
            sample_id: i.to_string(), s_pp: s[0], s_pn: s[1], s_np: s[2], s_nn: s[3],
        }).collect();
        let quads_t: Vec<WinoQuad> = quads.iter().map(|q| WinoQuad {
            sample_id: q.sample_id.clone(), s_pp: apply(f, q.s_pp), s_pn: apply(f, q.s_pn),
            s_np: apply(f, q.s_np), s_nn: apply(f, q.s_nn),
        }).collect();
        let (a, b) = (score_winoground(&quads).unwrap(), score_winoground(&quads_t).unwrap());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.overall.hits <= a.positive_context.hits.min(a.negative_context.hits));
        for q in &quads {
            prop_assert!(!q.group_hit() || (q.positive_hit() && q.negative_hit()));
        }

        let two: Vec<TwoAfcSample> = scores.iter().enumerate().map(|(i, s)| TwoAfcSample {
            sample_id: i.to_string(), pos_score: s[0], neg_score: s[1], diff_type: DiffType::ALL[i % 6],
        }).collect();
        let two_t: Vec<TwoAfcSample> = two.iter().cloned().map(|mut x| {
            x.pos_score = apply(f, x.pos_score); x.neg_score = apply(f, x.neg_score); x
        }).collect();
        let (a, b) = (score_two_afc(&two).unwrap(), score_two_afc(&two_t).unwrap());
        prop_assert_eq!(&a, &b);
        let hits: usize = a.by_type.values().map(|t| t.hits).sum();
        let n: usize = a.by_type.values().map(|t| t.n).sum();
        prop_assert_eq!((hits, n), (a.tally.hits, a.tally.n));
    }
}

#[test]
fn constant_scorer_never_beats_chance() {
    let four = vec![FourAfcSample {
        sample_id: "a".into(),
        label: "x".into(),
        candidate_scores: [0.5; 4],
        correct_index: 0,
    }];
    assert_eq!(score_four_afc(&four).unwrap().accuracy(), 0.0);
    let q = WinoQuad {
        sample_id: "q".into(),
        s_pp: 0.5,
        s_pn: 0.5,
        s_np: 0.5,
        s_nn: 0.5,
    };
    let w = score_winoground(&[q]).unwrap();
    assert_eq!((w.overall.hits, w.positive_context.hits, w.negative_context.hits), (0, 0, 0));
}
