//! Regenerates the bundled cross-organism fixture.
//!
//! cargo run -p irmkit --example make_fixture -- crates/core/tests/fixtures/cross_organism

use std::path::PathBuf;

fn main() {
    let dir: PathBuf = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/fixtures/cross_organism"));
    let fixture = irmkit::fixture::cross_organism_fixture();
    if let Err(e) = fixture.write(&dir) {
        eprintln!("{e}");
        std::process::exit(1);
    }
    println!("wrote fixture to {}", dir.display());
}
