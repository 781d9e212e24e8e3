use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qrpanel_core::pipeline::{run_replicate, run_stages, DataSource, RunConfig, Stage, MANIFEST};

fn small_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.source = DataSource::Synthetic;
    c.synth_firms = 80;
    c.synth_years = 10;
    c.bootstrap = 10;
    c.seed = 11;
    c.out = out.to_path_buf();
    c
}

fn read_bundle(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn speed_at(csv: &str, leverage: &str, theta: &str) -> f64 {
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[1] == leverage && &rec[2] == "all" && &rec[3] == theta {
            return rec[5].parse().unwrap();
        }
    }
    panic!("no {leverage} speed at {theta}");
}

#[test]
fn known_speed_recovered_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.synth_firms = 300;
    c.synth_years = 15;
    c.synth_delta = 0.5;
    c.bootstrap = 0;
    c.set("leverage", "book").unwrap();
    run_replicate(&c).unwrap();
    let csv = fs::read_to_string(dir.path().join("07_speed.csv")).unwrap();
    let s = speed_at(&csv, "BOOK", "0.5");
    assert!((0.45..=0.55).contains(&s), "speed {s}");
}

#[test]
fn empty_input_fails_at_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("panel.csv");
    let macro_path = dir.path().join("macro.csv");
    fs::write(&input, "").unwrap();
    fs::write(&macro_path, "year,cpi_inflation,gdp_growth\n2000,2,1\n").unwrap();
    let mut c = RunConfig::default();
    c.input = Some(input);
    c.macro_path = Some(macro_path);
    c.out = dir.path().join("out");
    let err = run_replicate(&c).unwrap_err();
    assert_eq!(err.stage, Stage::Ingest);
    let bundle = read_bundle(&c.out);
    let names: Vec<&String> = bundle.keys().collect();
    assert_eq!(names, vec!["00_config.txt", MANIFEST]);
    let manifest = String::from_utf8(bundle[MANIFEST].clone()).unwrap();
    assert!(manifest.contains("status = incomplete"));
    assert!(manifest.contains("failed_stage = ingest"));
}

#[test]
fn header_only_input_fails_at_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("panel.csv");
    let macro_path = dir.path().join("macro.csv");
    fs::write(&input, "firm_id,fyear,at,debt,mkt_eq,act,lct,ebit,ip,txt,sale,ppent,dp\n").unwrap();
    fs::write(&macro_path, "year,cpi_inflation,gdp_growth\n2000,2,1\n").unwrap();
    let mut c = RunConfig::default();
    c.input = Some(input);
    c.macro_path = Some(macro_path);
    c.out = dir.path().join("out");
    assert_eq!(run_replicate(&c).unwrap_err().stage, Stage::Ingest);
}

#[test]
fn late_stage_failure_keeps_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(&dir.path().join("out"));
    // one firm: the Hausman between regression has no degrees of freedom
    c.synth_firms = 1;
    let err = run_replicate(&c).unwrap_err();
    assert_eq!(err.stage, Stage::Hausman);
    let bundle = read_bundle(&c.out);
    assert!(bundle.contains_key("02_yearly_means.txt"));
    assert!(!bundle.contains_key("05_quantile_book.txt"));
    let manifest = String::from_utf8(bundle[MANIFEST].clone()).unwrap();
    assert!(manifest.contains("failed_stage = hausman"));
}

#[test]
fn rerun_is_byte_identical_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(&dir.path().join("a"));
    let b = small_config(&dir.path().join("b"));
    run_replicate(&a).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| run_replicate(&b)).unwrap();
    let (ba, bb) = (read_bundle(&a.out), read_bundle(&b.out));
    assert_eq!(ba.keys().collect::<Vec<_>>(), bb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ba {
        assert!(bytes == &bb[name], "{name} differs");
    }
}

#[test]
fn subcommands_reproduce_their_slice() {
    let dir = tempfile::tempdir().unwrap();
    // write a data set once, then analyse it from files
    let mut sim = small_config(&dir.path().join("sim"));
    run_stages(&sim, &[Stage::Simulate]).unwrap();
    let data = sim.out.join("data");
    sim.source = DataSource::File;
    sim.input = Some(data.join("panel.csv"));
    sim.macro_path = Some(data.join("macro.csv"));

    let mut full = sim.clone();
    full.out = dir.path().join("full");
    let summary = run_replicate(&full).unwrap();
    assert_eq!(summary.files.last().map(String::as_str), Some(MANIFEST));
    let full_bundle = read_bundle(&full.out);

    for stage in Stage::ANALYSIS {
        let mut part = sim.clone();
        part.out = dir.path().join(stage.name());
        let s = run_stages(&part, &[stage]).unwrap();
        let slice = read_bundle(&part.out);
        for name in s.files.iter().filter(|n| n.as_str() != MANIFEST) {
            assert!(slice[name] == full_bundle[name], "{stage}: {name} differs from the full run");
        }
        assert!(s.files.len() >= 3, "{stage} wrote nothing");
    }
}

#[test]
fn bundle_files_follow_pipeline_order_and_have_no_blank_cells() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let summary = run_replicate(&c).unwrap();
    let order: Vec<&str> = summary
        .files
        .iter()
        .map(|f| f.as_str())
        .filter(|f| !f.starts_with("data/"))
        .collect();
    let stems: Vec<&str> = order.iter().map(|f| f.split('.').next().unwrap()).collect();
    assert!(stems.windows(2).all(|w| w[0] <= w[1]), "{stems:?}");
    assert_eq!(order.first(), Some(&"00_config.txt"));
    for stem in [
        "01_validation",
        "02_yearly_means",
        "03_correlations",
        "04_hausman",
        "05_quantile_book",
        "06_quantile_market",
        "07_speed",
        "08_speed_regimes",
    ] {
        assert!(order.iter().any(|f| f.starts_with(stem)), "missing {stem}");
    }
    for f in order.iter().filter(|f| f.ends_with(".csv")) {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for rec in rdr.records() {
            assert!(rec.unwrap().iter().all(|cell| !cell.trim().is_empty()), "blank cell in {f}");
        }
    }
    let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert!(manifest.contains("status = complete"));
    assert!(manifest.contains("config_sha256 = "));
    assert!(manifest.contains("bootstrap_seed.book.0.5 = "));
}

#[test]
fn master_seed_drives_only_the_resampling() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = small_config(&dir.path().join("sim"));
    run_stages(&sim, &[Stage::Simulate]).unwrap();
    sim.source = DataSource::File;
    sim.input = Some(sim.out.join("data/panel.csv"));
    sim.macro_path = Some(sim.out.join("data/macro.csv"));
    let mut a = sim.clone();
    a.out = dir.path().join("a");
    let mut b = sim.clone();
    b.out = dir.path().join("b");
    b.seed = 12;
    run_stages(&a, &[Stage::Qreg]).unwrap();
    run_stages(&b, &[Stage::Qreg]).unwrap();
    let cols = |dir: &Path| {
        let text = fs::read_to_string(dir.join("05_quantile_book.csv")).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        rdr.records()
            .map(|r| {
                let r = r.unwrap();
                (r[3].to_string(), r[4].to_string())
            })
            .unzip::<_, _, Vec<_>, Vec<_>>()
    };
    let (est_a, se_a) = cols(&a.out);
    let (est_b, se_b) = cols(&b.out);
    assert_eq!(est_a, est_b);
    assert_ne!(se_a, se_b);
}
