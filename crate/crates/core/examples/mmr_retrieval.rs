//! Diversity-aware selection, then the coarse retrieval stage over a library file.
//!
//! `cargo run --example mmr_retrieval`

use std::path::Path;

use nl2opt::hrag::{coarse_retrieve, mmr_select, parse_library, HashEmbedder, Library, MmrParams};

pub fn run() -> anyhow::Result<String> {
    let mut out = String::new();
    // two near-duplicates of the query and one orthogonal-ish alternative
    let query = [1.0, 0.0];
    let pool = vec![("a", vec![1.0, 0.05]), ("a'", vec![1.0, 0.06]), ("b", vec![0.6, 0.8])];
    for lambda in [1.0, 0.5, 0.3] {
        let picked = mmr_select(&query, &pool, &MmrParams { lambda, k: 2, fetch_k: 3 })?;
        out += &format!("lambda {lambda}: {picked:?}\n");
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/library.jsonl");
    let exemplars = parse_library(&std::fs::read_to_string(&path)?, "library.jsonl");
    let embedder = HashEmbedder::default();
    let library = Library::build(exemplars, &embedder)?;
    let query = "Ship goods from two warehouses to three stores at least cost.";
    for hint in [None, Some("LP")] {
        let found = coarse_retrieve(&library, &embedder, query, &MmrParams::default(), hint)?;
        out += &format!("\nhint {hint:?}:\n");
        for e in found {
            out += &format!("  line {}: {} / {}\n", e.source_line, e.problem_type, e.problem_subtype);
        }
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
