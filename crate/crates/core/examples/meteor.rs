//! METEOR caption scores with their components.
//!
//!     cargo run --example meteor -- "candidate caption" "reference caption"

use curabench::scoring::{meteor_detail, MeteorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: Vec<(String, String)> = match args.as_slice() {
        [c, r] => vec![(c.clone(), r.clone())],
        _ => [
            ("the dog is on the rug", "the dog is on the rug"),
            ("look at the dogs", "look at the dog"),
            ("the rug is on the dog", "the dog is on the rug"),
            ("where is your shoe", "look at the ball"),
        ]
        .iter()
        .map(|(c, r)| (c.to_string(), r.to_string()))
        .collect(),
    };
    let cfg = MeteorConfig::default();
    println!("{:<28} {:<28} {:>3} {:>3} {:>7} {:>7} {:>8}", "candidate", "reference", "m", "ch", "fmean", "pen", "score");
    for (c, r) in &pairs {
        let d = meteor_detail(c, r, &cfg)?;
        println!(
            "{c:<28} {r:<28} {:>3} {:>3} {:>7.4} {:>7.4} {:>8.6}",
            d.matches, d.chunks, d.fmean, d.penalty, d.score
        );
    }
    Ok(())
}
