//! Caption rewriting with the offline mock backend, a custom template, and a
//! backend that fails before succeeding.
//!
//!     cargo run --example transfer_mock
//!
//! For a real service use `HttpBackend` with `HttpConfig::new(url, timeout)
//! .with_env_token()`; the token comes from TRANSFER_BACKEND_TOKEN.

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use curabench::manifest::{Manifest, PairRecord, Source};
use curabench::transfer::{
    parse_response, render_prompt, run_transfer, Backend, BackendError, BackendPolicy, MockBackend, PromptTemplate,
};

struct Flaky(AtomicU32);

impl Backend for Flaky {
    fn send(&self, _prompt: &str) -> Result<String, BackendError> {
        if self.0.fetch_add(1, Ordering::SeqCst) < 2 {
            Err(BackendError::Transient("503 from upstream".into()))
        } else {
            Ok("```json\n{\"caption\": \"look, a train!\", \"infeasible\": false}\n```".into())
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pool = Manifest::new(vec![
        PairRecord::new("g1", "pool/1.jpg", "A red double-decker bus parked beside a stone church.", Source::General),
        PairRecord::new("g2", "pool/2.jpg", "Quarterly revenue chart with three colored bars.", Source::General),
        PairRecord::new("g3", "pool/3.jpg", "A puppy chewing on a blue rope toy on the carpet.", Source::General),
    ])?;

    let template = PromptTemplate::new("Say this the way you would to a toddler.\nCaption: {}")?
        .with_few_shot("Caption: A cat sleeping on a sofa.\nAnswer: {\"caption\": \"the kitty is sleeping!\", \"infeasible\": false}");
    println!("{}\n", render_prompt(&template, &pool.records[0].caption)?);

    let policy = BackendPolicy { backoff_base: Duration::from_millis(5), ..Default::default() };
    let out = run_transfer(&pool, &MockBackend::new(1, 0.3), &template, &policy)?;
    for r in &out.manifest.records {
        println!("kept     {} {:?}", r.pair_id, r.caption);
    }
    for r in &out.rejections {
        println!("rejected {} ({}, {} attempt)", r.pair_id, r.reason, r.attempts);
    }

    let one = Manifest::new(vec![PairRecord::new("t1", "pool/t.jpg", "A steam train on a bridge.", Source::General)])?;
    let out = run_transfer(&one, &Flaky(AtomicU32::new(0)), &template, &policy)?;
    println!("\nflaky backend: {:?} after {} attempts", out.results[0].simplified, out.results[0].attempts);

    let parsed = parse_response(r#"{"caption": "", "infeasible": true}"#, &template.fields)?;
    println!("infeasible answer parses to feasible={}", parsed.feasible);
    Ok(())
}
