//! Writes the bundled scenarios as config + CSV directories.
//!
//! `cargo run -p gridflex-cli --example write_bundled -- scenarios`

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    for sc in [gridflex::synthetic::tiny(), gridflex::synthetic::feeder15()] {
        let dir = root.join(&sc.name);
        std::fs::create_dir_all(&dir)?;
        let cfg = gridflex_cli::export::write_scenario(&sc, &dir)?;
        println!("{}", cfg.display());
    }
    Ok(())
}
