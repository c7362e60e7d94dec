//! Parse, override, validate and print a configuration.

use bimrecon::config::Config;

fn main() -> anyhow::Result<()> {
    let text = "# finer walls\nalpha = 0.08\nsubsample = 0.03\nseed = 7\n";
    let mut cfg = Config::parse(text)?;
    cfg.set("mip_gap", "0.001")?;
    println!("{}", cfg.render());
    for bad in ["alpha = -1", "alpha = 1\nalpha = 2", "colour = red"] {
        println!("{bad:?} -> {}", Config::parse(bad).unwrap_err());
    }
    Ok(())
}
