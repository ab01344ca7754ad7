//! Similarity filtering and caption deduplication on a handful of pairs.
//!
//!     cargo run --example filter_and_dedup

use curabench::embedding::EmbeddingSet;
use curabench::filter::{dedup_by_caption, filter_pairs, pair_similarities, FilterConfig};
use curabench::manifest::{Manifest, PairRecord, Source};

fn unit(angle_deg: f32) -> Vec<f32> {
    let r = angle_deg.to_radians();
    vec![r.cos(), r.sin()]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = Manifest::new(vec![
        PairRecord::new("p1", "f/1.jpg", "look at the ball", Source::Saycam),
        PairRecord::new("p2", "f/2.jpg", "Look at the  ball", Source::Saycam),
        PairRecord::new("p3", "f/3.jpg", "where is the cup", Source::Saycam),
        PairRecord::new("p4", "f/4.jpg", "mmhm", Source::Saycam),
    ])?;
    // Image and caption vectors at chosen angles, so cosines are cos(angle).
    let img = EmbeddingSet::from_rows(2, [("p1", unit(0.0)), ("p2", unit(0.0)), ("p3", unit(0.0)), ("p4", unit(0.0))], true)?;
    let txt = EmbeddingSet::from_rows(2, [("p1", unit(30.0)), ("p2", unit(60.0)), ("p3", unit(45.0)), ("p4", unit(85.0))], true)?;

    let cfg = FilterConfig::with_threshold(0.2);
    for (r, s) in pairs.records.iter().zip(pair_similarities(&pairs, &img, &txt, &cfg)?) {
        println!("{:<3} {:<20} cosine {s:.3}", r.pair_id, r.caption);
    }

    let kept = filter_pairs(&pairs, &img, &txt, &cfg)?;
    println!("\nabove {}: {:?}", cfg.threshold, kept.ids().collect::<Vec<_>>());

    // p1 and p2 share a caption once case and spacing are normalized; p1 is
    // the more similar of the two.
    let unique = dedup_by_caption(&kept)?;
    println!("after dedup: {:?}", unique.ids().collect::<Vec<_>>());
    Ok(())
}
