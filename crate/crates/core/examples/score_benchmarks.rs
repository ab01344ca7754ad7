//! The four benchmark scorers and the merged report, on random scores
//! (chance level) and on embedding-resolved samples.
//!
//!     cargo run --release --example score_benchmarks

use curabench::embedding::EmbeddingSet;
use curabench::scoring::{
    build_report, cosine_score_samples, score_captions, score_four_afc, score_two_afc, score_winoground,
    CaptionSample, DiffType, FourAfcSample, MeteorConfig, TaskOutputs, TwoAfcSample, WinoQuad,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 20_000;
    let four: Vec<FourAfcSample> = (0..n)
        .map(|i| FourAfcSample {
            sample_id: i.to_string(),
            label: "x".into(),
            candidate_scores: [rng.random(), rng.random(), rng.random(), rng.random()],
            correct_index: i % 4,
        })
        .collect();
    let two: Vec<TwoAfcSample> = (0..n)
        .map(|i| TwoAfcSample {
            sample_id: i.to_string(),
            pos_score: rng.random(),
            neg_score: rng.random(),
            diff_type: DiffType::ALL[i % 6],
        })
        .collect();
    let quads: Vec<WinoQuad> = (0..n)
        .map(|i| WinoQuad {
            sample_id: i.to_string(),
            s_pp: rng.random(),
            s_pn: rng.random(),
            s_np: rng.random(),
            s_nn: rng.random(),
        })
        .collect();
    let captions = vec![
        CaptionSample { sample_id: "a".into(), reference: "look at the ball".into(), candidate: "look at the balls".into() },
        CaptionSample { sample_id: "b".into(), reference: "where is the cup".into(), candidate: "the cup is there".into() },
    ];
    let report = build_report(&TaskOutputs {
        labeled_s: Some(score_four_afc(&four)?),
        vtwt: Some(score_two_afc(&two)?),
        winoground: Some(score_winoground(&quads)?),
        caption: Some(score_captions(&captions, &MeteorConfig::default())?),
    })?;
    println!("random scores, {n} samples per task:\n{}", report.to_json());

    // Scores can also come from embeddings: cosine of (image id, text id).
    let img = EmbeddingSet::from_rows(2, [("ball.jpg", vec![1.0f32, 0.0]), ("cup.jpg", vec![0.0, 1.0])], true)?;
    let txt = EmbeddingSet::from_rows(2, [("ball", vec![0.96f32, 0.28]), ("cup", vec![0.28, 0.96])], true)?;
    let s = cosine_score_samples(&[("ball.jpg", "ball"), ("ball.jpg", "cup"), ("cup.jpg", "ball"), ("cup.jpg", "cup")], &img, &txt)?;
    let q = WinoQuad { sample_id: "q".into(), s_pp: s[0], s_pn: s[1], s_np: s[2], s_nn: s[3] };
    println!("embedding quad {s:.2?}: group hit {}", q.group_hit());
    Ok(())
}
