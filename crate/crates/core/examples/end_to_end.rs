//! Generates the synthetic fixture and runs filter, transfer, top-k, match
//! and compose on it.
//!
//!     cargo run --release --example end_to_end -- [OUT_DIR]

use curabench::fixture::{Fixture, FixtureConfig};
use curabench::pipeline::{run_pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/e2e".into());
    let out = std::path::Path::new(&out);

    let fixture = Fixture::generate(&FixtureConfig::default());
    let inputs = fixture.write(out.join("fixture"))?;
    let (files, summary) = run_pipeline(&inputs, out.join("run"), &PipelineConfig::default())?;

    println!("anchors kept     {}/{}", summary.anchors_kept, summary.anchors_in);
    println!("transferred      {}/{} ({} rejected)", summary.transferred, summary.candidates_in, summary.rejected);
    println!("matched          {} (total similarity {:.4})", summary.matched, summary.match_total);
    println!("composed dataset {} records", summary.composed);
    for f in files.files() {
        println!("  {}", f.display());
    }
    Ok(())
}
