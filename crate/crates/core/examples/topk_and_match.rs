//! Sparse top-k similarities between anchors and candidates, then a
//! one-to-one assignment that maximizes total similarity.
//!
//!     cargo run --release --example topk_and_match

use curabench::assignment::{
    build_topk, dense_oracle, select_matched_subset, solve_sparse_assignment, AssignmentError, SparseTopKMatrix,
};
use curabench::fixture::{Fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Greedy would give row 0 its best column and lose overall.
    let dense = vec![vec![0.9, 0.8, 0.1], vec![0.85, 0.2, 0.1], vec![0.3, 0.3, 0.7]];
    let m = SparseTopKMatrix::from_dense(&dense)?;
    let a = solve_sparse_assignment(&m, false)?;
    println!("3x3 mapping {:?}, total {:.2}", a.mapping, a.total);
    println!("exhaustive  {:?}, total {:.2}", dense_oracle(&dense)?.mapping, dense_oracle(&dense)?.total);

    // Two rows that both only store column 0: no full matching.
    let tight = SparseTopKMatrix::from_rows(3, 1, vec![vec![(0, 0.9)], vec![(0, 0.8)]])?;
    match solve_sparse_assignment(&tight, false) {
        Err(AssignmentError::NoPerfectMatching { rows }) => println!("no full matching; rows {rows:?} compete"),
        other => println!("unexpected: {other:?}"),
    }
    let partial = solve_sparse_assignment(&tight, true)?;
    println!("allowing unmatched: {:?}, unmatched {:?}", partial.mapping, partial.unmatched);

    // Image-to-image matching on the synthetic fixture.
    let fx = Fixture::generate(&FixtureConfig::default());
    let anchor_ids: Vec<String> = fx.anchors.ids().map(str::to_owned).collect();
    let cand_ids: Vec<String> = fx.candidates.ids().map(str::to_owned).collect();
    let topk = build_topk(&fx.img.subset(&anchor_ids)?, &fx.img.subset(&cand_ids)?, 20)?;
    let a = solve_sparse_assignment(&topk, false)?;
    let chosen = select_matched_subset(&fx.candidates, &a, &cand_ids)?;
    println!(
        "\nfixture: {} anchors matched to {} of {} candidates, mean similarity {:.4}",
        anchor_ids.len(),
        chosen.len(),
        cand_ids.len(),
        a.total / chosen.len() as f64
    );
    for r in chosen.records.iter().take(3) {
        println!("  {} {}", r.pair_id, r.caption);
    }
    Ok(())
}
