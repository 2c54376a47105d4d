use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

use traj_georef::model::{Anchor, Dataset, Feature, FeatureId, Landmark, LandmarkId, Match, Pose, Trajectory};
use traj_georef::pipeline::{
    align_stage, evaluate_stage, generate, io, load_inputs, match_stage, overlay_geojson, run_pipeline, PipelineConfig,
    PipelineError, ALIGN_REPORT, ALIGNED, CORRESPONDENCES, FEATURES, GROUND_TRUTH, LANDMARKS, MATCHES, METRICS,
    OVERLAY, REPORT, TRAJECTORIES, WINDOWS,
};
use traj_georef::solver::SolverError;
use traj_georef::synthbench::build;
use traj_georef::{MarkingClass, Point2, Se3, Shape};

const SMALL: &str = r#"
seed = 5

[synthetic.scene]
extent = 300.0
block_length = 100.0
route_length = 800.0

[synthetic.drift]
amplitude = 0.5
bias = [1.0, -0.5]

[output]
dir = "out"
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn small(dir: &Path) -> PipelineConfig {
    PipelineConfig::load(&write_config(dir, SMALL)).unwrap()
}

// Config reading the files written by `generate` in `from`.
fn input_config(dir: &Path, from: &Path, extra: &str) -> PipelineConfig {
    let text = format!(
        r#"
[input]
trajectories = "{}"
features = "{}"
landmarks = "{}"
{extra}

[output]
dir = "{}"
"#,
        from.join(TRAJECTORIES).display(),
        from.join(FEATURES).display(),
        from.join(LANDMARKS).display(),
        dir.join("out").display()
    );
    PipelineConfig::load(&write_config(dir, &text)).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&read(path)).unwrap()
}

#[test]
fn generated_files_load_as_inputs() {
    let gen_dir = TempDir::new().unwrap();
    let cfg = small(gen_dir.path());
    let written = generate(&cfg).unwrap();
    assert_eq!(written.len(), 5);
    for name in [TRAJECTORIES, FEATURES, LANDMARKS, GROUND_TRUTH, CORRESPONDENCES] {
        assert!(cfg.out_dir().join(name).is_file(), "{name}");
    }

    let expected = build(cfg.synthetic.as_ref().unwrap()).unwrap().dataset;
    let run_dir = TempDir::new().unwrap();
    let input = input_config(run_dir.path(), cfg.out_dir(), "");
    let data = load_inputs(&input).unwrap();
    assert_eq!(data.trajectories.len(), expected.trajectories.len());
    assert_eq!(data.features, expected.features);
    assert_eq!(data.landmarks, expected.landmarks);

    // Without ground truth, evaluation reports the match table only.
    let report = run_pipeline(&input).unwrap();
    assert!(report.alignment.is_none());
    assert!(report.matched > 0);
    assert_eq!(report.features, expected.features.len());
}

#[test]
fn records_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = build(&small(dir.path()).synthetic.unwrap()).unwrap();
    let d = &data.dataset;
    let p = |n: &str| dir.path().join(n);
    io::write_trajectories(&p("t"), &d.trajectories).unwrap();
    io::write_features(&p("f"), &d.features).unwrap();
    io::write_landmarks(&p("l"), &d.landmarks).unwrap();
    let matches: Vec<Match> = data
        .correspondences
        .iter()
        .map(|&(feature, landmark)| Match {
            feature,
            landmark,
            distance: 0.125,
        })
        .collect();
    io::write_matches(&p("m"), &matches).unwrap();
    io::write_correspondences(&p("c"), &data.correspondences).unwrap();

    assert_eq!(io::read_trajectories(&p("t")).unwrap(), d.trajectories);
    assert_eq!(strip(io::read_features(&p("f")).unwrap()), d.features);
    assert_eq!(strip(io::read_landmarks(&p("l")).unwrap()), d.landmarks);
    assert_eq!(strip(io::read_matches(&p("m")).unwrap()), matches);
    assert_eq!(io::read_correspondences(&p("c")).unwrap(), data.correspondences);
}

fn strip<T>(v: Vec<(usize, T)>) -> Vec<T> {
    v.into_iter().map(|(_, x)| x).collect()
}

fn generated(dir: &Path) -> PipelineConfig {
    let cfg = small(dir);
    generate(&cfg).unwrap();
    cfg
}

fn append(path: &Path, line: &str) {
    let mut f = fs::OpenOptions::new().append(true).open(path).unwrap();
    writeln!(f, "{line}").unwrap();
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn unknown_anchor_pose_names_the_feature() {
    let dir = TempDir::new().unwrap();
    let cfg = generated(dir.path());
    let features = cfg.out_dir().join(FEATURES);
    append(
        &features,
        r#"{"v":1,"id":777777,"session":"s0","pose":99999999,"class":"pole","points":[[1.0,2.0]]}"#,
    );
    let err = load_inputs(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let PipelineError::Validation { path, line, message } = &err else {
        panic!("{err:?}");
    };
    assert_eq!(path.as_deref(), Some(features.as_path()));
    assert_eq!(*line, Some(line_count(&features)));
    assert!(message.contains("777777"), "{message}");
}

#[test]
fn malformed_records_report_file_and_line() {
    let dir = TempDir::new().unwrap();
    let cfg = generated(dir.path());
    let landmarks = cfg.out_dir().join(LANDMARKS);
    let n = line_count(&landmarks);

    append(&landmarks, r#"{"v":1,"id":5,"class":"pole","points":[[1.0,2.0]],"extra":true}"#);
    let err = load_inputs(&cfg).unwrap_err();
    assert!(matches!(&err, PipelineError::Parse { line, .. } if *line == n + 1), "{err:?}");
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().starts_with(&format!("{}:{}:", landmarks.display(), n + 1)));

    generate(&cfg).unwrap();
    append(&landmarks, r#"{"v":2,"id":5,"class":"pole","points":[[1.0,2.0]]}"#);
    let err = load_inputs(&cfg).unwrap_err();
    assert!(err.to_string().contains("schema version 2"), "{err}");

    generate(&cfg).unwrap();
    append(&landmarks, r#"{"v":1,"id":5,"class":"pole","points":[[1.0,2.0],[3.0,4.0]]}"#);
    assert!(matches!(load_inputs(&cfg).unwrap_err(), PipelineError::Parse { .. }));
}

#[test]
fn matches_must_pair_known_compatible_records() {
    let dir = TempDir::new().unwrap();
    let cfg = generated(dir.path());
    match_stage(&cfg).unwrap();
    let data = load_inputs(&cfg).unwrap();
    let pole = data.features.iter().find(|f| f.class() == MarkingClass::Pole).unwrap();
    let curb = data.landmarks.iter().find(|l| l.class() == MarkingClass::CurbLine).unwrap();
    let matches = cfg.out_dir().join(MATCHES);
    append(
        &matches,
        &format!(r#"{{"v":1,"feature":{},"landmark":{},"distance":0.1}}"#, pole.id.0, curb.id.0),
    );
    let err = align_stage(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().starts_with("align: "), "{err}");
    assert!(err.to_string().contains("cannot match"), "{err}");
}

#[test]
fn chained_stages_equal_run() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let run = small(a.path());
    let report = run_pipeline(&run).unwrap();

    let staged = small(b.path());
    generate(&staged).unwrap();
    let m = match_stage(&staged).unwrap();
    assert_eq!(m, vec![staged.out_dir().join(MATCHES), staged.out_dir().join(WINDOWS)]);
    let al = align_stage(&staged).unwrap();
    assert_eq!(al.len(), 3);
    assert_eq!(evaluate_stage(&staged).unwrap(), report);

    for name in [MATCHES, WINDOWS, ALIGNED, ALIGN_REPORT, OVERLAY, METRICS, REPORT] {
        assert_eq!(read(&run.out_dir().join(name)), read(&staged.out_dir().join(name)), "{name}");
    }
    let metrics = json(&run.out_dir().join(METRICS));
    assert_eq!(metrics["v"], 1);
    assert!(metrics["alignment"]["position_rmse"].as_f64().unwrap() < 0.2);
}

#[test]
fn seeds_drive_every_random_stream() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let x = small(a.path());
    let y = small(b.path());
    let mut z = small(c.path());
    z.apply_seed(6);
    for cfg in [&x, &y, &z] {
        generate(cfg).unwrap();
    }
    let same = |p: &PipelineConfig, q: &PipelineConfig, name: &str| read(&p.out_dir().join(name)) == read(&q.out_dir().join(name));
    assert!(same(&x, &y, FEATURES) && same(&x, &y, LANDMARKS));
    assert!(!same(&x, &z, LANDMARKS));
}

#[test]
fn zero_landmarks_degrade_to_the_initial_trajectories() {
    let dir = TempDir::new().unwrap();
    let cfg = generated(dir.path());
    fs::write(cfg.out_dir().join(LANDMARKS), "").unwrap();
    match_stage(&cfg).unwrap();
    assert_eq!(line_count(&cfg.out_dir().join(MATCHES)), 0);
    let windows = fs::read_to_string(cfg.out_dir().join(WINDOWS)).unwrap();
    assert!(windows
        .lines()
        .all(|l| serde_json::from_str::<Value>(l).unwrap()["status"] == "insufficient_features"));

    align_stage(&cfg).unwrap();
    let report = json(&cfg.out_dir().join(ALIGN_REPORT));
    assert!(!report["warnings"].as_array().unwrap().is_empty());
    let initial = io::read_trajectories(&cfg.out_dir().join(TRAJECTORIES)).unwrap();
    assert_eq!(io::read_trajectories(&cfg.out_dir().join(ALIGNED)).unwrap(), initial);

    let metrics = evaluate_stage(&cfg).unwrap();
    assert_eq!(metrics.matched, 0);
    assert_eq!(metrics.alignment.unwrap().recall, 0.0);
}

fn tiny_dataset() -> Dataset {
    let poses = (0..3)
        .map(|k| Pose {
            session_id: "a".into(),
            index: k,
            timestamp: k as f64,
            transform: Se3::from_planar(10.0 * k as f64, 0.0, 0.0),
        })
        .collect();
    let feature = Feature {
        id: FeatureId(1),
        anchor: Anchor {
            session_id: "a".into(),
            pose_index: 1,
        },
        local: Shape::Pole(Point2::new(2.0, 3.0)),
    };
    let landmarks = vec![
        Landmark {
            id: LandmarkId(7),
            shape: Shape::Pole(Point2::new(12.5, 3.5)),
        },
        Landmark {
            id: LandmarkId(8),
            shape: Shape::Segment(
                traj_georef::SegmentChain::new(
                    vec![Point2::new(0.0, -4.0), Point2::new(20.0, -4.0)],
                    MarkingClass::CurbLine,
                )
                .unwrap(),
            ),
        },
    ];
    Dataset::new(vec![Trajectory::new("a", poses).unwrap()], vec![feature], landmarks).unwrap()
}

fn layer<'a>(doc: &'a Value, name: &str) -> Vec<&'a Value> {
    doc["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["properties"]["layer"] == name)
        .collect()
}

fn check_geojson(doc: &Value) {
    assert_eq!(doc["type"], "FeatureCollection");
    let position = |p: &Value| {
        let c = p.as_array().unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|v| v.as_f64().unwrap().is_finite()));
    };
    for f in doc["features"].as_array().unwrap() {
        assert_eq!(f["type"], "Feature");
        assert!(f["properties"].is_object());
        let g = &f["geometry"];
        match g["type"].as_str().unwrap() {
            "Point" => position(&g["coordinates"]),
            "LineString" => {
                let cs = g["coordinates"].as_array().unwrap();
                assert!(cs.len() >= 2);
                cs.iter().for_each(position);
            }
            other => panic!("unexpected geometry {other}"),
        }
    }
}

#[test]
fn overlay_layers_and_displacements() {
    let data = tiny_dataset();
    let empty = overlay_geojson(&data, &data.trajectories, &[]);
    check_geojson(&empty);
    assert_eq!(layer(&empty, "initial").len(), 1);
    assert_eq!(layer(&empty, "aligned").len(), 1);
    assert_eq!(layer(&empty, "landmarks").len(), 2);
    assert!(layer(&empty, "displacement").is_empty());

    let m = Match {
        feature: FeatureId(1),
        landmark: LandmarkId(7),
        distance: 0.7,
    };
    let doc = overlay_geojson(&data, &data.trajectories, &[m]);
    check_geojson(&doc);
    let d = layer(&doc, "displacement");
    assert_eq!(d.len(), 1);
    assert_eq!(d[0]["geometry"]["coordinates"], serde_json::json!([[12.0, 3.0], [12.5, 3.5]]));
    assert_eq!(d[0]["properties"]["feature"], 1);
    assert_eq!(d[0]["properties"]["landmark"], 7);
}

#[test]
fn solver_failures_exit_with_numerical_status() {
    let e: PipelineError = SolverError::NumericalFailure { max_damping: 1e12 }.into();
    assert_eq!(e.exit_code(), 4);
    let e: PipelineError = SolverError::InvalidOptions("x").into();
    assert_eq!(e.exit_code(), 2);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_traj-georef")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cli_runs_and_reports() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("elsewhere");
    let o = cli(&["run", "--config", arg(&config), "--out", arg(&out), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("total"), "{stdout}");
    assert!(stdout.contains("position rmse"), "{stdout}");
    assert_eq!(fs::read_to_string(out.join(REPORT)).unwrap(), stdout);

    let o = cli(&["generate", "--config", arg(&config), "--out", arg(&dir.path().join("again")), "--seed", "9"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 5);
    assert_eq!(read(&out.join(FEATURES)), read(&dir.path().join("again").join(FEATURES)));
}

#[test]
fn cli_exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |o: std::process::Output| o.status.code().unwrap();

    let missing = dir.path().join("missing.toml");
    assert_eq!(code(cli(&["run", "--config", arg(&missing)])), 2);

    let unknown = write_config(dir.path(), "[synthetic]\nwibble = 1\n");
    assert_eq!(code(cli(&["generate", "--config", arg(&unknown)])), 2);

    let cfg = small(dir.path());
    generate(&cfg).unwrap();
    let input_dir = TempDir::new().unwrap();
    input_config(input_dir.path(), cfg.out_dir(), "");
    let config = input_dir.path().join("config.toml");
    assert_eq!(code(cli(&["match", "--config", arg(&config)])), 0);
    append(&cfg.out_dir().join(FEATURES), "not json");
    assert_eq!(code(cli(&["match", "--config", arg(&config)])), 3);

    let config = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = cli(&["generate", "--config", arg(&config), "--out", arg(&blocker.join("sub"))]);
    assert_eq!(code(o), 1);
}

#[test]
fn minimal_files_load() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("poses.ndjson"),
        concat!(
            r#"{"v":1,"session":"a","index":0,"t":0.0,"x":0.0,"y":0.0,"z":0.0,"qw":1.0,"qx":0.0,"qy":0.0,"qz":0.0}"#,
            "\n",
            r#"{"v":1,"session":"a","index":1,"t":1.0,"x":1.0,"y":0.0,"z":0.0,"qw":1.0,"qx":0.0,"qy":0.0,"qz":0.0}"#,
            "\n",
        ),
    )
    .unwrap();
    fs::write(
        d.join("features.ndjson"),
        r#"{"v":1,"id":3,"session":"a","pose":1,"class":"pole","points":[[0.5,2.0]]}"#,
    )
    .unwrap();
    fs::write(d.join("landmarks.ndjson"), "\n{\"v\":1,\"id\":4,\"class\":\"pole\",\"points\":[[1.5,2.0]]}\n").unwrap();
    let text = "[input]\ntrajectories = \"poses.ndjson\"\nfeatures = \"features.ndjson\"\nlandmarks = \"landmarks.ndjson\"\n";
    let cfg = PipelineConfig::load(&write_config(d, text)).unwrap();
    let data = load_inputs(&cfg).unwrap();
    assert_eq!(data.trajectories.len(), 1);
    assert_eq!(data.trajectories[0].len(), 2);
    let f = data.feature(FeatureId(3)).unwrap();
    assert_eq!(data.feature_world(f), Shape::Pole(Point2::new(1.5, 2.0)));
    assert_eq!(data.landmark(LandmarkId(4)).unwrap().shape, Shape::Pole(Point2::new(1.5, 2.0)));
}

#[test]
fn saving_loaded_inputs_reproduces_the_files() {
    let dir = TempDir::new().unwrap();
    let cfg = generated(dir.path());
    let data = load_inputs(&cfg).unwrap();
    let again = dir.path().join("again");
    fs::create_dir(&again).unwrap();
    io::write_trajectories(&again.join(TRAJECTORIES), &data.trajectories).unwrap();
    io::write_features(&again.join(FEATURES), &data.features).unwrap();
    io::write_landmarks(&again.join(LANDMARKS), &data.landmarks).unwrap();
    for name in [TRAJECTORIES, FEATURES, LANDMARKS] {
        assert_eq!(read(&cfg.out_dir().join(name)), read(&again.join(name)), "{name}");
    }
}
