//! Byte-for-byte comparison of backtest outputs against the checked-in
//! fixtures. Run with `UPDATE_GOLDEN=1` to rewrite the expected files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use alphax_cli::{backtest, RunConfig};

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn check(fixture: &str) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(fixture);
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&dir.join("config.toml"), &[]).unwrap();
    cfg.apply_flags(None, None, None, None, Some(tmp.path().to_path_buf())).unwrap();
    backtest(&cfg).unwrap();
    let mut got = read_tree(tmp.path());
    got.remove(Path::new("config.toml"));

    let expected = dir.join("expected");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = fs::remove_dir_all(&expected);
        for (path, bytes) in &got {
            let target = expected.join(path);
            fs::create_dir_all(target.parent().unwrap()).unwrap();
            fs::write(target, bytes).unwrap();
        }
        return;
    }
    let want = read_tree(&expected);
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (path, bytes) in &want {
        assert!(got[path] == *bytes, "{fixture}: {} differs from the golden file", path.display());
    }
}

#[test]
fn small_fixture_matches_golden() {
    check("small");
}

#[test]
fn full_fixture_matches_golden() {
    check("full");
}
