mod common;

use std::fs;

use common::fixture_dir;
use targ::fixture::{synthetic_bundle, FixtureSpec, BUNDLE_FILES};

#[test]
fn bundled_fixture_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_bundle(&FixtureSpec::default())
        .unwrap()
        .write(dir.path())
        .unwrap();
    for f in BUNDLE_FILES {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(fixture_dir().join(f)).unwrap(),
            "{f} is stale; regenerate with `cargo run --example make_fixture`"
        );
    }
}
