//! Writes the synthetic end-to-end fixture, by default over the bundled copy.
//!
//!     cargo run --example make_fixture -- [DIR]

use curabench::fixture::{Fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/e2e").into());
    let paths = Fixture::generate(&FixtureConfig::default()).write(&dir)?;
    println!("{paths:#?}");
    Ok(())
}
