//! Seeded subsampling and union of manifests, as used for ablation datasets.
//!
//!     cargo run --example compose

use curabench::manifest::{
    arm_sample_size, compose_datasets, write_manifest, CompositionArm, CompositionSpec, Manifest, PairRecord, Source,
};

fn manifest(prefix: &str, n: usize, source: Source) -> Manifest {
    Manifest::new(
        (0..n)
            .map(|i| PairRecord::new(format!("{prefix}-{i:03}"), format!("{prefix}/{i}.jpg"), format!("caption {i}"), source))
            .collect(),
    )
    .expect("unique ids")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let base = dir.join("base.jsonl");
    let extra = dir.join("transferred.jsonl");
    write_manifest(&manifest("sc", 100, Source::Saycam), &base)?;
    write_manifest(&manifest("tr", 80, Source::Transferred), &extra)?;

    // All of the base set plus a quarter of the transferred set; the same
    // arm string is accepted by `curabench compose --arm`.
    let arms = vec![CompositionArm::new(&base, 1.0, 0), format!("{}:0.25:7", extra.display()).parse()?];
    let composed = compose_datasets(&CompositionSpec::new(arms)?)?;
    println!("{} records ({} + {})", composed.len(), 100, arm_sample_size(0.25, 80));
    println!("{}", composed.provenance);

    let again = compose_datasets(&CompositionSpec::new(vec![
        CompositionArm::new(&base, 1.0, 0),
        CompositionArm::new(&extra, 0.25, 7),
    ])?)?;
    println!("same seed, same records: {}", again.records == composed.records);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join(format!("curabench-compose-{}", std::process::id()));
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
