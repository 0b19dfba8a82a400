//! File formats exercised through the filesystem.

use std::io::Write as _;

use posekit::io;
use posekit::synth::{
    generate_scenes, to_candidate_set, to_dataset, to_selection_entries, Selector, SynthConfig,
};
use posekit::DataError;

fn scenes(n: usize) -> (SynthConfig, Vec<posekit::synth::Scene>) {
    let cfg = SynthConfig {
        seed: 99,
        ..SynthConfig::default()
    };
    let s = generate_scenes(&cfg, n).unwrap();
    (cfg, s)
}

#[test]
fn synthetic_files_round_trip() {
    let (cfg, sc) = scenes(3);
    let sigmas = cfg.sigma_table().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = |f: &str| dir.path().join(f);

    let ds = to_dataset(&sc, cfg.num_keypoints);
    io::save_dataset(&ds, path("gt.json")).unwrap();
    let back = io::load_dataset(path("gt.json")).unwrap();
    assert_eq!(back, ds);
    assert_eq!(
        back.instances().unwrap().len(),
        sc.iter().map(|s| s.gts.len()).sum::<usize>()
    );

    let set = to_candidate_set(&sc);
    io::save_candidates(&set, path("cands.txt")).unwrap();
    assert_eq!(io::load_candidates(path("cands.txt")).unwrap(), set);

    let mut sel = Vec::new();
    for s in &sc {
        sel.extend(to_selection_entries(
            s,
            &s.select(Selector::OwnerArgmax, &sigmas).unwrap(),
        ));
    }
    io::save_selection(&sel, path("selected.json")).unwrap();
    assert_eq!(io::load_selection(path("selected.json")).unwrap(), sel);

    // Saving what was loaded reproduces the bytes.
    let first = std::fs::read(path("gt.json")).unwrap();
    io::save_dataset(&back, path("gt2.json")).unwrap();
    assert_eq!(std::fs::read(path("gt2.json")).unwrap(), first);
}

#[test]
fn candidate_errors_name_the_line() {
    let (_, sc) = scenes(1);
    let set = to_candidate_set(&sc);
    let mut text = Vec::new();
    io::write_candidates(
        &mut text,
        set.iter()
            .flat_map(|(&id, cs)| cs.iter().take(3).map(move |c| (id, c))),
    )
    .unwrap();
    let mut text = String::from_utf8(text).unwrap();
    text.push_str("0 P9 0 0 0.5\n");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::File::create(&path)
        .unwrap()
        .write_all(text.as_bytes())
        .unwrap();
    let err = io::load_candidates(&path).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 4"), "{msg}");
    assert!(msg.contains("bad.txt"), "{msg}");
}

#[test]
fn dataset_errors_are_reported_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.json");
    std::fs::write(&path, "{\"images\": [], \"annotations\": [{]}").unwrap();
    match io::load_dataset(&path) {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        io::load_dataset(dir.path().join("missing.json")),
        Err(DataError::Io { .. })
    ));
}

#[test]
fn sigma_tables_resolve_from_search_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("hands.json"), "[0.05, 0.07, 0.09]").unwrap();
    std::fs::write(dir.path().join("broken.json"), "[0.05, -1]").unwrap();
    std::env::set_var(io::SIGMA_PATH_ENV, dir.path());
    let preset = io::resolve_sigmas("hands").unwrap();
    assert_eq!(preset.name(), "hands");
    assert_eq!(preset.table(3).unwrap().len(), 3);
    assert!(preset.table(4).is_err());
    assert!(io::resolve_sigmas("broken").is_err());
    assert!(io::resolve_sigmas("nowhere").is_err());
    assert!(io::resolve_sigmas("crowdpose14").is_ok());
}
