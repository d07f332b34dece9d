//! File-level integration: synthetic worlds rendered to disk, read back
//! through the public parsers, and pushed through tagging and evaluation,
//! including the export formats.

use longwatch_core::boundary::BoroughMap;
use longwatch_core::evaluate::{
    build_report, cluster_unpermitted, clusters_to_geojson, match_confirmations, per_borough_csv,
};
use longwatch_core::geo::GridConfig;
use longwatch_core::ingest::{
    parse_frames, parse_permits, FrameFormat, FrameParseConfig, PermitColumnMap,
};
use longwatch_core::simulate::{
    gen_frames, gen_world, world_permit_csv, DetectorModel, FrameGenParams, PlaneRect,
};
use longwatch_core::tagging::{run_tagging, verdicts_to_csv, verdicts_to_geojson, TaggingParams};
use std::fs;
use std::io::BufReader;

fn borough_file(grid: &GridConfig) -> String {
    // one generous square around the world bounds labeled Manhattan
    let lo = grid
        .unproject(longwatch_core::geo::PlanePoint::new(-50_000.0, -50_000.0))
        .unwrap();
    let hi = grid
        .unproject(longwatch_core::geo::PlanePoint::new(50_000.0, 50_000.0))
        .unwrap();
    format!(
        r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","properties":{{"borough":"Manhattan"}},"geometry":{{"type":"Polygon","coordinates":[[[{w},{s}],[{e},{s}],[{e},{n}],[{w},{n}],[{w},{s}]]]}}}}]}}"#,
        w = lo.lon,
        s = lo.lat,
        e = hi.lon,
        n = hi.lat
    )
}

#[test]
fn world_files_round_trip_through_the_whole_pipeline() {
    let grid = GridConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let world = gen_world(12, 3, PlaneRect::centered(8_000.0), 21, &grid).unwrap();
    let detector = DetectorModel {
        recall: 1.0,
        ..Default::default()
    };
    let frames_path = dir.path().join("frames.jsonl");
    let permits_path = dir.path().join("permits.csv");
    fs::write(
        &frames_path,
        gen_frames(&world, &FrameGenParams::default(), &detector, 21, &grid).unwrap(),
    )
    .unwrap();
    fs::write(&permits_path, world_permit_csv(&world, &grid).unwrap()).unwrap();

    let dataset = parse_frames(
        BufReader::new(fs::File::open(&frames_path).unwrap()),
        FrameFormat::Jsonl,
        &FrameParseConfig::default(),
    )
    .unwrap();
    assert_eq!(dataset.rejects.rejected, 0);
    assert_eq!(dataset.frames.len(), 15 * 20);

    let permits = parse_permits(
        fs::File::open(&permits_path).unwrap(),
        &PermitColumnMap::default(),
        &grid.bounds,
    )
    .unwrap();
    assert_eq!(permits.permits.len(), 12);
    assert_eq!(permits.rejects.rejected, 0);

    let params = TaggingParams::default();
    let verdicts = run_tagging(&dataset, &grid, &params).unwrap();
    assert_eq!(verdicts.iter().filter(|v| v.confirmed).count(), 15);

    let boroughs = BoroughMap::parse(&borough_file(&grid)).unwrap();
    let report = build_report(
        &verdicts,
        &permits.permits,
        &dataset.frames,
        &grid,
        params.window,
        Some(&boroughs),
    )
    .unwrap();
    report.check_identities().unwrap();
    assert_eq!(report.confirmed_permitted, 12);
    assert_eq!(report.unpermitted_clusters, 3);
    assert_eq!(report.tagged_total, 15);
    assert_eq!(report.missed_permits, 0);
    assert_eq!(report.out_of_scope_permits, 0);

    // per-borough attribution with the boundary file present
    let manhattan = &report.per_borough["Manhattan"];
    assert_eq!(manhattan.tagged_total, 15);
    assert_eq!(manhattan.unpermitted_clusters, 3);
    let csv = per_borough_csv(&report);
    assert!(csv.lines().count() >= 2);

    // exports are well-formed and deterministic
    let gj1 = verdicts_to_geojson(&verdicts, &grid).unwrap();
    let gj2 = verdicts_to_geojson(&verdicts, &grid).unwrap();
    assert_eq!(
        serde_json::to_string(&gj1).unwrap(),
        serde_json::to_string(&gj2).unwrap()
    );
    assert_eq!(gj1["type"], "FeatureCollection");
    assert_eq!(gj1["features"].as_array().unwrap().len(), verdicts.len());
    let csv1 = verdicts_to_csv(&verdicts);
    assert_eq!(csv1.lines().count(), verdicts.len() + 1);

    let outcome = match_confirmations(&verdicts, &permits.permits, &grid).unwrap();
    let clusters = cluster_unpermitted(&outcome.unmatched_cells, &grid);
    let cluster_gj = clusters_to_geojson(&clusters, &grid).unwrap();
    assert_eq!(cluster_gj["features"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_and_jsonl_frame_inputs_agree() {
    let grid = GridConfig::default();
    let world = gen_world(3, 0, PlaneRect::centered(5_000.0), 5, &grid).unwrap();
    let jsonl = gen_frames(
        &world,
        &FrameGenParams::default(),
        &DetectorModel::default(),
        5,
        &grid,
    )
    .unwrap();
    let from_jsonl = parse_frames(
        jsonl.as_bytes(),
        FrameFormat::Jsonl,
        &FrameParseConfig::default(),
    )
    .unwrap();

    // re-render the same records as CSV
    let mut csv = String::from("frame_id,captured_at,lat,lon,heading_deg,detected,confidence\n");
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            v["frame_id"].as_str().unwrap(),
            v["captured_at"].as_str().unwrap(),
            v["lat"],
            v["lon"],
            v["heading_deg"],
            v["detected"],
            v.get("confidence")
                .and_then(|c| c.as_f64())
                .map(|c| c.to_string())
                .unwrap_or_default(),
        ));
    }
    let from_csv = parse_frames(
        csv.as_bytes(),
        FrameFormat::Csv,
        &FrameParseConfig::default(),
    )
    .unwrap();
    assert_eq!(from_jsonl.source_digest, from_csv.source_digest);
    assert_eq!(from_jsonl.frames.len(), from_csv.frames.len());
}

#[test]
fn verdicts_are_identical_across_input_permutations() {
    let grid = GridConfig::default();
    let world = gen_world(6, 2, PlaneRect::centered(7_000.0), 31, &grid).unwrap();
    let jsonl = gen_frames(
        &world,
        &FrameGenParams::default(),
        &DetectorModel::default(),
        31,
        &grid,
    )
    .unwrap();
    let mut lines: Vec<&str> = jsonl.lines().collect();
    let forward = parse_frames(
        jsonl.as_bytes(),
        FrameFormat::Jsonl,
        &FrameParseConfig::default(),
    )
    .unwrap();
    lines.reverse();
    let reversed_text = lines.join("\n");
    let reversed = parse_frames(
        reversed_text.as_bytes(),
        FrameFormat::Jsonl,
        &FrameParseConfig::default(),
    )
    .unwrap();

    let params = TaggingParams::default();
    let v1 = run_tagging(&forward, &grid, &params).unwrap();
    let v2 = run_tagging(&reversed, &grid, &params).unwrap();
    assert_eq!(v1, v2);
}
