use std::path::Path;
use std::process::{Command, Output};

fn gridfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rasterize(
    dir: &Path,
    lat: &str,
    lon: &str,
    a: &str,
    extra: &[&str],
) -> (Output, std::path::PathBuf) {
    let csv = dir.join("centres.csv");
    let mut args = vec![
        "rasterize",
        "--center-lat",
        lat,
        "--center-lon",
        lon,
        "--size-m",
        a,
        "--resolution-m",
        "500",
        "--out",
        path(&csv),
    ];
    args.extend_from_slice(extra);
    (gridfuse(&args), csv)
}

#[test]
fn rasterize_writes_thirty_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = rasterize(dir.path(), "0", "0", "3000", &[]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("virtual layers: [4, 9]"), "{stdout}");
    assert!(stdout.contains("#latlon == G: 36 == 36 OK"), "{stdout}");
    let body = std::fs::read_to_string(csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("lat,lon"));
    assert_eq!(lines.count(), 36);
}

#[test]
fn small_city_is_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = rasterize(dir.path(), "48.8566", "2.3522", "400", &[]);
    assert_eq!(code(&out), 0);
    let body = std::fs::read_to_string(csv).unwrap();
    assert_eq!(body, "lat,lon\n48.8566000,2.3522000\n");
}

#[test]
fn negative_coordinates_parse() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = rasterize(dir.path(), "-33.8688", "-70.6693", "2500", &[]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("virtual layers: [4, 9, 16]"));
}

#[test]
fn three_decimals_fail_on_a_rounding_boundary_centre() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = rasterize(dir.path(), "0.3", "0.0125", "3000", &["--decimals", "3"]);
    assert_eq!(code(&out), 3);
    assert!(
        text(&out.stderr).contains("count mismatch"),
        "{}",
        text(&out.stderr)
    );
    assert!(text(&out.stdout).contains("FAIL"));
    assert!(!csv.exists(), "no partial output on failure");

    let (out, csv) = rasterize(dir.path(), "0.3", "0.0125", "3000", &["--decimals", "4"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 37);
}

#[test]
fn invalid_size_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = rasterize(dir.path(), "0", "0", "100", &[]);
    assert_eq!(code(&out), 2);
    let (out, _) = rasterize(dir.path(), "89.5", "0", "3000", &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_flags_are_rejected_before_io() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let out = gridfuse(&[
        "rasterize",
        "--center-lat",
        "0",
        "--size-m",
        "3000",
        "--out",
        path(&csv),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!csv.exists());
}

/// Generates one synthetic city and returns (lat, lon, graph, raster).
fn gen_city(dir: &Path) -> (String, String, std::path::PathBuf, std::path::PathBuf) {
    let out = gridfuse(&[
        "gen",
        "--out",
        path(dir),
        "--size-m",
        "3000",
        "--resolution-m",
        "500",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let list = std::fs::read_to_string(dir.join("cities.csv")).unwrap();
    let row: Vec<String> = list
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    (
        row[1].clone(),
        row[2].clone(),
        dir.join(&row[4]),
        dir.join(&row[5]),
    )
}

fn fuse_args<'a>(
    lat: &'a str,
    lon: &'a str,
    graph: &'a Path,
    raster: &'a Path,
    out: &'a Path,
) -> Vec<&'a str> {
    vec![
        "fuse",
        "--center-lat",
        lat,
        "--center-lon",
        lon,
        "--size-m",
        "3000",
        "--resolution-m",
        "500",
        "--graph",
        path(graph),
        "--raster",
        path(raster),
        "--feature",
        "pm25",
        "--out",
        path(out),
    ]
}

#[test]
fn fuse_synthetic_city() {
    let dir = tempfile::tempdir().unwrap();
    let (lat, lon, graph, raster) = gen_city(dir.path());
    let fused = dir.path().join("fused.geojson");
    let out = gridfuse(&fuse_args(&lat, &lon, &graph, &raster, &fused));
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));

    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["edges_total"], 108);
    assert_eq!(report["edges_assigned"], 108);
    assert_eq!(report["edges_valued"], 108);

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fused).unwrap()).unwrap();
    let edges: Vec<_> = doc["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["geometry"]["type"] == "LineString")
        .collect();
    assert_eq!(edges.len(), 108);
    assert!(edges.iter().all(|e| e["properties"]["pm25"].is_number()));

    // same inputs, same bytes
    let again = dir.path().join("again.geojson");
    assert_eq!(
        code(&gridfuse(&fuse_args(&lat, &lon, &graph, &raster, &again))),
        0
    );
    assert_eq!(
        std::fs::read(&fused).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn disjoint_raster_is_a_coverage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (lat, lon, graph, _) = gen_city(dir.path());
    let far = dir.path().join("far.asc");
    std::fs::write(&far, "ncols 2\nnrows 2\nxllcorner 100\nyllcorner 40\ncellsize 0.01\nNODATA_value -9999\n1 2\n3 4\n")
        .unwrap();
    let fused = dir.path().join("fused.geojson");
    let out = gridfuse(&fuse_args(&lat, &lon, &graph, &far, &fused));
    assert_eq!(code(&out), 5, "{}", text(&out.stderr));
    assert!(!fused.exists());
}

#[test]
fn malformed_geojson_reports_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let (lat, lon, _, raster) = gen_city(dir.path());
    let bad = dir.path().join("bad.geojson");
    std::fs::write(
        &bad,
        "{\"type\": \"FeatureCollection\",\n\"features\": [\n{\"type\": \"Feature\",,}\n]}\n",
    )
    .unwrap();
    let fused = dir.path().join("fused.geojson");
    let out = gridfuse(&fuse_args(&lat, &lon, &bad, &raster, &fused));
    assert_eq!(code(&out), 2);
    assert!(
        text(&out.stderr).contains("line 3"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn verify_sweeps_pass() {
    for max in ["41", "1"] {
        let out = gridfuse(&["verify", "--max-s", max]);
        assert_eq!(code(&out), 0, "{}", text(&out.stderr));
        assert!(text(&out.stdout).ends_with("PASS\n"));
    }
    assert_eq!(code(&gridfuse(&["verify", "--max-s", "0"])), 2);
}

#[test]
fn batch_over_generated_cities() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = gridfuse(&[
        "gen",
        "--out",
        path(&data),
        "--size-m",
        "2500",
        "--resolution-m",
        "500",
        "--seed",
        "3",
        "--count",
        "4",
    ]);
    assert_eq!(code(&out), 0);

    let run = |name: &str, parallelism: &str| {
        let out_dir = dir.path().join(name);
        let out = gridfuse(&[
            "batch",
            "--cities",
            path(&data.join("cities.csv")),
            "--resolution-m",
            "500",
            "--out",
            path(&out_dir),
            "--parallelism",
            parallelism,
        ]);
        assert_eq!(code(&out), 0, "{}", text(&out.stderr));
        out_dir
    };
    let serial = run("serial", "1");
    let parallel = run("parallel", "4");
    let reports = std::fs::read_to_string(serial.join("reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 4);
    assert!(reports.lines().all(|l| l.contains("\"status\":\"ok\"")));
    assert_eq!(
        reports,
        std::fs::read_to_string(parallel.join("reports.jsonl")).unwrap()
    );
    for seed in 3..7 {
        let name = format!("synthetic-{seed}.geojson");
        assert_eq!(
            std::fs::read(serial.join(&name)).unwrap(),
            std::fs::read(parallel.join(&name)).unwrap()
        );
    }
}

#[test]
fn batch_keeps_going_past_a_bad_city() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridfuse(&[
        "gen",
        "--out",
        path(dir.path()),
        "--size-m",
        "1500",
        "--resolution-m",
        "500",
    ]);
    assert_eq!(code(&out), 0);
    let list = dir.path().join("cities.csv");
    let mut body = std::fs::read_to_string(&list).unwrap();
    body.push_str("broken,0,0,1500,missing.geojson,synthetic-42.asc\n");
    std::fs::write(&list, body).unwrap();

    let out_dir = dir.path().join("out");
    let out = gridfuse(&[
        "batch",
        "--cities",
        path(&list),
        "--resolution-m",
        "500",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(code(&out), 0);
    let lines: Vec<String> = text(&out.stdout).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"status\":\"ok\""));
    assert!(
        lines[1].contains("\"city_id\":\"broken\"") && lines[1].contains("\"status\":\"error\"")
    );
}
