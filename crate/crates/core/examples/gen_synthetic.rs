//! Regenerates the bundled synthetic benchmark.
//!
//! cargo run -p lensforge --example gen_synthetic -- fixtures/synthetic

use lensforge::synthetic::{generate, SyntheticConfig};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic".into());
    std::fs::create_dir_all(&dir).expect("create output directory");
    let bench = generate(&SyntheticConfig::default());
    bench.write_to(&dir).expect("write fixture files");
    println!("wrote {} records to {dir}", bench.manifest.records.len());
}
