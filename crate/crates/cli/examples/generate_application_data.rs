//! Regenerates `data/application_synthetic.csv`.
//!
//! Usage: `cargo run -p censored-meta-cli --example generate_application_data [PATH] [SEED]`

use std::path::PathBuf;

use censored_meta::synthetic::{application_dataset, DEFAULT_SEED};
use censored_meta_cli::ingest::write_records;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/application_synthetic.csv"));
    let seed = args.next().map_or(DEFAULT_SEED, |s| s.parse().expect("seed must be an integer"));
    let records = application_dataset(seed);
    let file = std::fs::File::create(&path).unwrap_or_else(|e| panic!("cannot create {}: {e}", path.display()));
    write_records(&records, file).expect("write dataset");
    let censored = records.iter().filter(|r| r.outcome.is_censored()).count();
    println!("wrote {} studies ({censored} censored) to {}", records.len(), path.display());
}
