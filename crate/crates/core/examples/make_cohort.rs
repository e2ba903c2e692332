//! Regenerates `data/cohort.csv`: `cargo run --example make_cohort`.

use censored_outliers::sim::{cohort_csv, synthetic_cohort, COHORT_SEED};

fn main() -> std::io::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/cohort.csv");
    std::fs::write(path, cohort_csv(&synthetic_cohort(COHORT_SEED)))?;
    println!("wrote {path}");
    Ok(())
}
