//! Regenerate the bundled replay fixture.
//!
//! ```text
//! cargo run --example make_fixture -- [OUT_DIR]
//! ```
//!
//! Defaults to `crates/core/fixtures`. The files are deterministic, so
//! regenerating leaves a clean checkout unchanged.

use std::path::PathBuf;

use targ::fixture::{synthetic_bundle, FixtureSpec, BUNDLE_FILES};

fn main() -> targ::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let bundle = synthetic_bundle(&FixtureSpec::default())?;
    bundle.write(&out)?;
    println!(
        "{} queries, {} passages -> {}",
        bundle.traces.len(),
        bundle.passages.len(),
        out.display()
    );
    for f in BUNDLE_FILES {
        println!("  {f}");
    }
    Ok(())
}
