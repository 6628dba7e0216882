//! Parse an experiment file and print its canonical form with every default
//! spelled out.

use flatquad::config::parse_config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/examples/circle.ini").into());
    let cfg = parse_config(&std::fs::read_to_string(&path)?)?;
    print!("{}", cfg.to_ini());
    Ok(())
}
