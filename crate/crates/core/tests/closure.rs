use crater_core::bundle::ingest_bundle;
use crater_core::catalog::CraterCatalog;
use crater_core::config::{PipelineConfig, TileSpec};
use crater_core::pipeline::{detect, detect_tiled};
use crater_core::synth::{generate_field, match_catalogs, precision_recall, MatchCriterion, MatchParams, SynthParams};

#[test]
fn pipeline_recovers_synthetic_field() {
    let field = generate_field(&SynthParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    field.write_truth_bundle(dir.path()).unwrap();
    let bundle = ingest_bundle(dir.path()).unwrap();
    assert!(bundle.report.skipped.is_empty());

    let cfg = PipelineConfig::default();
    let det = detect(&bundle.records, &cfg);
    assert!(det.counts.is_monotone(), "{}", det.counts);
    let cat = CraterCatalog::new("field", 1024, 1024, det.craters);
    let m = match_catalogs(&cat, &field.truth, MatchCriterion::CenterAndSize, MatchParams::default()).unwrap();
    let s = precision_recall(&m);
    assert!(s.precision >= 0.95 && s.recall >= 0.95, "{s:?}\n{}", det.counts);
}

#[test]
fn tiled_run_keeps_interior_craters() {
    let field = generate_field(&SynthParams { n_craters: 60, ..SynthParams::default() }).unwrap();
    let cfg = PipelineConfig::default();
    let full = detect(&field.truth_records, &cfg);
    let tiled = detect_tiled(&field.truth_records, 1024, 1024, TileSpec { tile_w: 256, tile_h: 256, overlap: Some(64) }, &cfg).unwrap();
    assert!(tiled.tiles > 1);
    let full = CraterCatalog::new("f", 1024, 1024, full.craters);
    let tiled = CraterCatalog::new("t", 1024, 1024, tiled.craters);
    let m = match_catalogs(&tiled, &full, MatchCriterion::CenterAndSize, MatchParams::default()).unwrap();
    assert!(m.pairs.len() * 10 >= full.len() * 5, "{} of {}", m.pairs.len(), full.len());
}
