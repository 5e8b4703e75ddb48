mod common;

use std::fs;
use std::io::Read;

use magdirac_lab::export::{export_bundle, CHECKSUMS_FILE};
use magdirac_lab::manifest::{sha256_hex, CONFIG_FILE, MANIFEST_FILE};
use magdirac_lab::run::run_experiment;
use magdirac_lab::LabError;

fn fresh_run(dir: &std::path::Path) -> std::path::PathBuf {
    let out = dir.join("free");
    run_experiment(&common::free(), &out).unwrap();
    out
}

fn entries(path: &std::path::Path) -> Vec<(String, Vec<u8>, u32, u64)> {
    let mut a = tar::Archive::new(fs::File::open(path).unwrap());
    a.entries()
        .unwrap()
        .map(|e| {
            let mut e = e.unwrap();
            let name = e.path().unwrap().to_string_lossy().into_owned();
            let (mode, mtime) = (e.header().mode().unwrap(), e.header().mtime().unwrap());
            let mut body = vec![];
            e.read_to_end(&mut body).unwrap();
            (name, body, mode, mtime)
        })
        .collect()
}

#[test]
fn archive_starts_with_manifest_and_lists_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let run = fresh_run(dir.path());
    let b = export_bundle(&run, None).unwrap();
    assert_eq!(b.path, dir.path().join("free.tar"));
    assert_eq!(&b.members[..3], [MANIFEST_FILE, CONFIG_FILE, CHECKSUMS_FILE]);
    let reports = &b.members[3..];
    assert!(reports.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(reports.len(), common::csv_files(&run).len());

    let es = entries(&b.path);
    assert_eq!(es[0].0, format!("free/{MANIFEST_FILE}"));
    assert!(es.iter().all(|e| e.2 == 0o644 && e.3 == 0));
    let sums = String::from_utf8(es[2].1.clone()).unwrap();
    for (name, body, ..) in &es {
        let short = name.strip_prefix("free/").unwrap();
        if short != CHECKSUMS_FILE {
            assert!(sums.contains(&format!("{}  {short}\n", sha256_hex(body))), "{short}");
            assert_eq!(body, &fs::read(run.join(short)).unwrap());
        }
    }
    assert_eq!(sha256_hex(&fs::read(&b.path).unwrap()), b.sha256);
}

#[test]
fn same_directory_twice_gives_identical_archives() {
    let dir = tempfile::tempdir().unwrap();
    let run = fresh_run(dir.path());
    let a = export_bundle(&run, Some(&dir.path().join("a.tar"))).unwrap();
    let b = export_bundle(&run, Some(&dir.path().join("b.tar"))).unwrap();
    assert_eq!(a.sha256, b.sha256);
    assert_eq!(fs::read(&a.path).unwrap(), fs::read(&b.path).unwrap());
}

#[test]
fn missing_report_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let run = fresh_run(dir.path());
    fs::remove_file(run.join("hardy.csv")).unwrap();
    let e = export_bundle(&run, None).unwrap_err();
    assert!(matches!(e, LabError::IncompleteRun { .. }));
    assert!(e.to_string().contains("`hardy.csv`"), "{e}");
    assert_eq!(e.exit_code(), 3);
    assert!(!dir.path().join("free.tar").exists());
}

#[test]
fn tampered_report_and_missing_manifest_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let run = fresh_run(dir.path());
    fs::write(run.join("smoothing.csv"), "edited\n").unwrap();
    assert!(export_bundle(&run, None).unwrap_err().to_string().contains("checksum mismatch"));
    fs::remove_file(run.join(MANIFEST_FILE)).unwrap();
    assert!(export_bundle(&run, None).unwrap_err().to_string().contains(MANIFEST_FILE));
}
