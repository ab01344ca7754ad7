//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use curabench::assignment::{
    build_topk, dense_oracle, load_matrix_ids, load_topk, solve_sparse_assignment, store_topk, AssignmentError,
    MatrixIds, SparseTopKMatrix,
};
use curabench::embedding::{load_embeddings, store_embeddings, EmbeddingSet};
use curabench::filter::{caption_key, dedup_by_caption, retain_above};
use curabench::fixture::FixturePaths;
use curabench::manifest::{read_manifest, write_manifest, Manifest, PairRecord, Source};
use curabench::pipeline::{run_pipeline, PipelineConfig};
use curabench::scoring::{
    meteor, meteor_detail, score_four_afc, score_two_afc, score_winoground, DiffType, FourAfcSample, MeteorConfig,
    TwoAfcSample, WinoQuad,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn chance_levels() -> Outcome {
    const N: usize = 100_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let four: Vec<FourAfcSample> = (0..N)
        .map(|i| FourAfcSample {
            sample_id: i.to_string(),
            label: "x".into(),
            candidate_scores: [rng.random(), rng.random(), rng.random(), rng.random()],
            correct_index: rng.random_range(0..4),
        })
        .collect();
    let two: Vec<TwoAfcSample> = (0..N)
        .map(|i| TwoAfcSample {
            sample_id: i.to_string(),
            pos_score: rng.random(),
            neg_score: rng.random(),
            diff_type: DiffType::ALL[i % DiffType::ALL.len()],
        })
        .collect();
    let quads: Vec<WinoQuad> = (0..N)
        .map(|i| WinoQuad {
            sample_id: i.to_string(),
            s_pp: rng.random(),
            s_pn: rng.random(),
            s_np: rng.random(),
            s_nn: rng.random(),
        })
        .collect();
    let f = score_four_afc(&four).map_err(|e| e.to_string())?.accuracy();
    let t = score_two_afc(&two).map_err(|e| e.to_string())?.accuracy();
    let w = score_winoground(&quads).map_err(|e| e.to_string())?;
    let (wo, wp, wn) = (w.overall.accuracy(), w.positive_context.accuracy(), w.negative_context.accuracy());
    let elapsed = start.elapsed();
    check!(within(f, 0.25, 0.01), "4afc {f}");
    check!(within(t, 0.50, 0.01), "2afc {t}");
    check!(within(wo, 1.0 / 6.0, 0.01), "winoground overall {wo}");
    check!(within(wp, 0.25, 0.01), "winoground positive {wp}");
    check!(within(wn, 0.25, 0.01), "winoground negative {wn}");
    check!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "4afc {f:.4}, 2afc {t:.4}, winoground {wo:.4}/{wp:.4}/{wn:.4} in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn grid_value(rng: &mut impl Rng) -> f64 {
    rng.random_range(-4096i32..=4096) as f64 / 4096.0
}

fn assignment_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut dense_n, mut sparse_feasible, mut sparse_infeasible) = (0, 0, 0);
    for inst in 0..1200 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(rows..=9);
        let dense: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| grid_value(&mut rng)).collect()).collect();

        let m = SparseTopKMatrix::from_dense(&dense).map_err(|e| e.to_string())?;
        let s = solve_sparse_assignment(&m, false).map_err(|e| format!("dense #{inst}: {e}"))?;
        let o = dense_oracle(&dense).map_err(|e| e.to_string())?;
        check!(s.total == o.total, "dense #{inst}: solver {} oracle {}", s.total, o.total);
        check!(s.is_injective(), "dense #{inst}: not injective");
        dense_n += 1;

        // drop entries but keep every row non-empty
        let p = rng.random_range(0.2..0.7);
        let mut masked = dense.clone();
        let mut sparse_rows = Vec::new();
        for (i, r) in dense.iter().enumerate() {
            let keep_always = rng.random_range(0..cols);
            let mut row = Vec::new();
            for (j, &v) in r.iter().enumerate() {
                if j != keep_always && rng.random_bool(p) {
                    masked[i][j] = f64::NEG_INFINITY;
                } else {
                    row.push((j, v as f32));
                }
            }
            sparse_rows.push(row);
        }
        let sm = SparseTopKMatrix::from_rows(cols, cols, sparse_rows).map_err(|e| e.to_string())?;
        match (dense_oracle(&masked), solve_sparse_assignment(&sm, false)) {
            (Ok(o), Ok(s)) => {
                check!(s.total == o.total, "sparse #{inst}: solver {} oracle {}", s.total, o.total);
                check!(s.is_injective(), "sparse #{inst}: not injective");
                sparse_feasible += 1;
            }
            (Err(AssignmentError::NoPerfectMatching { .. }), Err(AssignmentError::NoPerfectMatching { .. })) => {
                sparse_infeasible += 1
            }
            (o, s) => return Err(format!("sparse #{inst}: oracle {o:?} solver {s:?}")),
        }
    }
    let compared = dense_n + sparse_feasible;
    check!(compared >= 1000, "only {compared} optimality comparisons");
    Ok(format!(
        "{dense_n} dense + {sparse_feasible} sparse instances agree, {sparse_infeasible} infeasible agreed, 0 mismatches"
    ))
}

fn unit_vectors(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize) -> Result<EmbeddingSet, String> {
    let rows = (0..n).map(|i| {
        let v: Vec<f32> = (0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        (format!("{prefix}{i}"), v)
    });
    EmbeddingSet::from_rows(dim, rows, false)
        .and_then(|s| s.normalize())
        .map_err(|e| e.to_string())
}

fn assignment_scale() -> Outcome {
    const DIM: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let anchors = unit_vectors(&mut rng, "a", 10_000, DIM)?;
    let cands = unit_vectors(&mut rng, "c", 50_000, DIM)?;
    let start = Instant::now();
    let m = build_topk(&anchors, &cands, 100).map_err(|e| e.to_string())?;
    let topk_time = start.elapsed();
    let a = solve_sparse_assignment(&m, false).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check!(a.is_injective(), "mapping is not injective");
    check!(a.unmatched.is_empty(), "{} rows unmatched", a.unmatched.len());
    check!(elapsed < Duration::from_secs(300), "took {elapsed:?}");

    let m2 = build_topk(&anchors, &cands, 100).map_err(|e| e.to_string())?;
    check!(m2 == m, "top-k matrix differs between runs");
    let a2 = solve_sparse_assignment(&m2, false).map_err(|e| e.to_string())?;
    check!(a2 == a, "assignment differs between runs");
    Ok(format!(
        "10000x50000 k=100 dim={DIM}: topk {:.1}s + match {:.1}s, total {:.3}, injective, deterministic",
        topk_time.as_secs_f64(),
        (elapsed - topk_time).as_secs_f64(),
        a.total
    ))
}

const VOCAB: [&str; 20] = [
    "the", "a", "dog", "dogs", "ball", "balls", "look", "looking", "looks", "at", "cat", "cats", "sat", "on", "rug",
    "play", "playing", "red", "big", "is",
];

fn random_sentence(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let n = rng.random_range(1..=10);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

fn meteor_correctness() -> Outcome {
    let cfg = MeteorConfig::default();
    let m = |c: &str, r: &str| meteor(c, r, &cfg).map_err(|e| e.to_string());
    let same = "the dog is on the rug";
    let v = m(same, same)?;
    check!(within(v, 1.0 - 0.5 / 216.0, 1e-6), "identical six tokens {v}");
    let v = m("red balls", "the cat sat")?;
    check!(within(v, 0.0, 1e-6), "disjoint {v}");
    let v = m("the cat sat", "the cat sat down")?;
    // P = 1, R = 3/4, one chunk of three
    let fmean = 10.0 * 0.75 / (0.75 + 9.0);
    let expected = fmean * (1.0 - 0.5 / 27.0);
    check!(within(v, expected, 1e-6) && within(v, 0.754986, 1e-6), "cat sat {v} vs {expected}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut chunk_pairs = 0;
    for i in 0..10_000 {
        let c = random_sentence(&mut rng);
        let r = random_sentence(&mut rng);
        let (cs, rs) = (c.join(" "), r.join(" "));
        let d = meteor_detail(&cs, &rs, &cfg).map_err(|e| e.to_string())?;
        check!((0.0..=1.0).contains(&d.score) && d.score <= d.fmean + 1e-15, "#{i}: bounds {d:?}");
        check!((0.0..=0.5).contains(&d.penalty), "#{i}: penalty {d:?}");
        if d.matches == 0 {
            check!(d.score == 0.0 && d.chunks == 0, "#{i}: m = 0 but {d:?}");
            continue;
        }
        check!(1 <= d.chunks && d.chunks <= d.matches, "#{i}: chunks {d:?}");
        // same token multiset in another order: same matches, and fewer
        // chunks never scores lower
        let mut shuffled = c.clone();
        for k in (1..shuffled.len()).rev() {
            shuffled.swap(k, rng.random_range(0..=k));
        }
        let e = meteor_detail(&shuffled.join(" "), &rs, &cfg).map_err(|e| e.to_string())?;
        check!(e.matches == d.matches, "#{i}: shuffle changed matches");
        if e.chunks != d.chunks {
            chunk_pairs += 1;
            let (lo, hi) = if e.chunks < d.chunks { (&e, &d) } else { (&d, &e) };
            check!(hi.score < lo.score, "#{i}: {} chunks {} vs {} chunks {}", lo.chunks, lo.score, hi.chunks, hi.score);
        }
    }
    Ok(format!(
        "worked examples within 1e-6 (cat sat = {v:.6}); 10000 random pairs, {chunk_pairs} chunk comparisons"
    ))
}

fn filter_dedup_laws() -> Outcome {
    const N: usize = 10_000;
    // sims on a 1/1000 grid: integer comparisons give the exact expected counts
    let grid: Vec<i64> = (0..N as i64).map(|i| (i * 7919) % 2001 - 1000).collect();
    let records: Vec<PairRecord> = (0..N)
        .map(|i| {
            let variant = match i % 3 {
                0 => format!("look at the toy {}", i % 2500),
                1 => format!("LOOK at  the Toy {}", i % 2500),
                _ => format!("\tlook at the toy {} ", i % 2500),
            };
            PairRecord::new(format!("p{i:05}"), format!("img{i}"), variant, Source::Saycam)
                .with_similarity(grid[i] as f64 / 1000.0)
        })
        .collect();
    let sims: Vec<f64> = records.iter().map(|r| r.similarity.unwrap()).collect();

    let mut prev: Option<HashSet<String>> = None;
    let mut counts = Vec::new();
    for t in [-1000i64, -500, -1, 0, 200, 201, 750, 1000] {
        let kept = retain_above(&records, &sims, t as f64 / 1000.0);
        let expected = grid.iter().filter(|&&g| g > t).count();
        check!(kept.len() == expected, "threshold {t}: kept {} expected {expected}", kept.len());
        check!(kept.iter().all(|r| r.similarity.unwrap() > t as f64 / 1000.0), "threshold {t}: kept a record at or below");
        let ids: HashSet<String> = kept.iter().map(|r| r.pair_id.clone()).collect();
        if let Some(p) = &prev {
            check!(ids.is_subset(p), "threshold {t}: not monotone");
        }
        prev = Some(ids);
        counts.push(expected);
    }

    let m = Manifest::new(records).map_err(|e| e.to_string())?;
    let once = dedup_by_caption(&m).map_err(|e| e.to_string())?;
    check!(once.len() == 2500, "dedup kept {}", once.len());
    let twice = dedup_by_caption(&once).map_err(|e| e.to_string())?;
    check!(twice.records == once.records, "dedup not idempotent");
    let mut best: HashMap<String, (i64, usize)> = HashMap::new();
    for (i, (r, &g)) in m.records.iter().zip(&grid).enumerate() {
        let e = best.entry(caption_key(&r.caption)).or_insert((i64::MIN, usize::MAX));
        if g > e.0 || (g == e.0 && i < e.1) {
            *e = (g, i);
        }
    }
    check!(best.len() == 2500, "{} normalized captions", best.len());
    for r in &once.records {
        let (_, i) = best[&caption_key(&r.caption)];
        check!(r.pair_id == format!("p{i:05}"), "{}: not the argmax", r.pair_id);
    }
    Ok(format!("10000 records, retained counts {counts:?}, dedup 10000 -> 2500, idempotent"))
}

fn pipeline_determinism() -> Outcome {
    let fixture = FixturePaths::in_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e"));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for (run, (threads, in_flight)) in [(1, 1), (1, 1), (4, 8)].into_iter().enumerate() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let cfg = PipelineConfig {
            max_in_flight: in_flight,
            ..Default::default()
        };
        let (files, summary) = pool
            .install(|| run_pipeline(&fixture, dir.path().join(format!("run{run}")), &cfg))
            .map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = files.files().iter().map(fs::read).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        outputs.push(bytes);
        summaries.push(summary);
    }
    let s = &summaries[0];
    check!(s.anchors_in == 200 && s.candidates_in == 1000, "fixture sizes {s:?}");
    check!(outputs[0] == outputs[1], "two identical runs differ");
    check!(outputs[0] == outputs[2], "1 vs 4 threads differ");
    Ok(format!(
        "{} files identical over 2 runs and 1/4 threads; kept {}, transferred {}, matched {}, composed {}",
        outputs[0].len(),
        s.anchors_kept,
        s.transferred,
        s.matched,
        s.composed
    ))
}

fn format_round_trips() -> Outcome {
    const IDS: [&str; 4] = ["猫-", "niño_", "🐶/", "Zürich \"q\" "];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);

    let set = unit_vectors(&mut rng, "", 500, 24)?;
    let renamed = EmbeddingSet::from_rows(
        24,
        set.ids().iter().enumerate().map(|(i, _)| (format!("{}{i}", IDS[i % 4]), set.row(i).to_vec())),
        true,
    )
    .map_err(|e| e.to_string())?;
    let p = dir.path().join("x.emb");
    store_embeddings(&renamed, &p).map_err(|e| e.to_string())?;
    let back = load_embeddings(&p).map_err(|e| e.to_string())?;
    check!(back.ids() == renamed.ids(), "EMB1 ids differ");
    let bits = |s: &EmbeddingSet| s.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check!(bits(&back) == bits(&renamed), "EMB1 payload differs");

    let m = build_topk(&renamed, &renamed, 7).map_err(|e| e.to_string())?;
    let ids = MatrixIds {
        rows: renamed.ids().to_vec(),
        cols: renamed.ids().to_vec(),
    };
    let sp = dir.path().join("x.stk");
    store_topk(&m, Some(&ids), &sp).map_err(|e| e.to_string())?;
    let mb = load_topk(&sp).map_err(|e| e.to_string())?;
    check!(mb == m, "STK1 matrix differs");
    check!(mb.values().iter().zip(m.values()).all(|(a, b)| a.to_bits() == b.to_bits()), "STK1 values differ in bits");
    check!(load_matrix_ids(&sp).map_err(|e| e.to_string())? == ids, "STK1 ids differ");

    let records: Vec<PairRecord> = (0..2000)
        .map(|i| {
            let mut r = PairRecord::new(
                format!("{}{i}", IDS[i % 4]),
                format!("frames/{}.jpg", IDS[(i + 1) % 4]),
                format!("schau mal, der Hund {i} läuft 🐕 \"quoted\"\n"),
                if i % 2 == 0 { Source::Saycam } else { Source::Transferred },
            );
            if i % 3 == 0 {
                r = r.with_similarity(rng.random::<f64>() * 2.0 - 1.0);
            }
            r
        })
        .collect();
    let man = Manifest::new(records).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_manifest(&man, &a).map_err(|e| e.to_string())?;
    let back = read_manifest(&a).map_err(|e| e.to_string())?;
    check!(back.records == man.records, "manifest records differ");
    check!(
        back.records.iter().zip(&man.records).all(|(x, y)| x.similarity.map(f64::to_bits) == y.similarity.map(f64::to_bits)),
        "similarity bits differ"
    );
    write_manifest(&back, &b).map_err(|e| e.to_string())?;
    check!(fs::read(&a).ok() == fs::read(&b).ok(), "manifest rewrite not byte-identical");
    Ok("EMB1 500x24, STK1 500x500 k=7 with ids, manifest 2000 records; all bit-exact with non-ASCII text".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("chance levels", chance_levels),
        ("assignment optimality", assignment_optimality),
        ("assignment scale", assignment_scale),
        ("meteor correctness", meteor_correctness),
        ("filter and dedup laws", filter_dedup_laws),
        ("pipeline determinism", pipeline_determinism),
        ("format round-trips", format_round_trips),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
