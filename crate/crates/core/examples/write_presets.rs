//! Writes the bundled model files: the four-component factor model with the published pair
//! ranks, and the single Gaussian with ranks (3, 3, 4).
//!
//! Usage: `cargo run -p gmmsi --example write_presets -- <dir>`

use std::path::PathBuf;

use gmmsi::model::{gauss_334, table_one};

fn main() -> gmmsi::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("table1.toml"), table_one(1).to_toml()?)?;
    std::fs::write(dir.join("gauss334.toml"), gauss_334(1).to_toml()?)?;
    Ok(())
}
