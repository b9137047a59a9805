//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use pathsup_core::eval::{annotation_time, boxes_only_curve, efficiency_curve, TimeModel};
use pathsup_core::io;
use pathsup_core::linkage::{brute_force_linkage, solve_linkage, ClusterGraph};
use pathsup_core::model::{
    BBox, BoxAnnotation, BoxSource, Detection, DetectionId, GroundTruth, PathAnnotation, PathId, Point, PointTrack,
    TrackId, Trajectory, TrajectoryEntry,
};
use pathsup_core::prelabel::{brute_force_prelabel, solve_prelabel};
use pathsup_core::synth::{generate_scenario, Scenario, SynthConfig};
use pathsup_core::testkit::{random_linkage_instance, random_prelabel_instance};
use pathsup_core::{EngineConfig, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn prelabel_oracle() -> Outcome {
    let config = EngineConfig::default();
    let n = 200;
    let mut worst: f64 = 0.0;
    let mut refined = 0;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_dets = rng.random_range(1..=14);
        let n_paths = rng.random_range(1..=3);
        let inst = random_prelabel_instance(&mut rng, n_dets, n_paths, &config);
        let fast = solve_prelabel(&inst.detections, &inst.paths, &inst.graph, &config);
        let exact = brute_force_prelabel(&inst.detections, &inst.paths, &inst.graph, &config)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let gap = (fast.energy - exact.energy).abs();
        worst = worst.max(gap);
        refined += usize::from(fast.refined_components > 0);
        ensure(gap <= 1e-9, || {
            format!(
                "seed {seed}: solver energy {} vs exhaustive {}",
                fast.energy, exact.energy
            )
        })?;
    }
    Ok(format!(
        "{n} instances, max |gap| {worst:.1e}, exact search improved on graph-cut moves in {refined}"
    ))
}

fn linkage_oracle() -> Outcome {
    let n = 200;
    let mut worst: f64 = 0.0;
    let mut infeasible = 0;
    for seed in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let size = rng.random_range(1..=12);
        let inst = random_linkage_instance(&mut rng, size);
        let members: Vec<&Detection> = inst.detections.iter().collect();
        let cluster = ClusterGraph::build(PathId(0), &members, &inst.graph, &inst.config)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        match (solve_linkage(&cluster), brute_force_linkage(&cluster)) {
            (Ok(fast), Ok(exact)) => {
                let gap = (fast.total_cost - exact.total_cost).abs();
                worst = worst.max(gap);
                ensure(gap <= 1e-9, || {
                    format!(
                        "seed {seed}: solver cost {} vs exhaustive {}",
                        fast.total_cost, exact.total_cost
                    )
                })?;
                let frame: BTreeMap<DetectionId, u32> = inst.detections.iter().map(|d| (d.id, d.frame)).collect();
                let frames: Vec<u32> = fast.chosen.iter().map(|id| frame[id]).collect();
                ensure(frames.windows(2).all(|w| w[0] < w[1]), || {
                    format!("seed {seed}: chosen frames {frames:?} not strictly increasing")
                })?;
            }
            (Err(_), Err(_)) => infeasible += 1,
            (fast, exact) => return Err(format!("seed {seed}: feasibility differs: {fast:?} vs {exact:?}")),
        }
    }
    Ok(format!(
        "{n} clusters ({infeasible} without any path), max |gap| {worst:.1e}"
    ))
}

fn noiseless_end_to_end() -> Outcome {
    let cfg = SynthConfig {
        n_objects: 5,
        n_frames: 300,
        ..SynthConfig::noiseless()
    };
    let scenario = generate_scenario(&cfg).map_err(|e| e.to_string())?;
    let points = efficiency_curve(&scenario, &[0], &cfg.engine_config(), &[0.95], &TimeModel::default())
        .map_err(|e| e.to_string())?;
    let recall = points[0].recall[0].recall;
    ensure(recall == 1.0, || format!("recall@0.95 = {recall}"))?;
    Ok(format!(
        "recall@0.95 = {recall} over {} boxes",
        points[0].recall[0].total
    ))
}

fn noisy_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_objects: 10,
        n_frames: 600,
        miss_rate: 0.15,
        fp_rate: 0.5,
        center_jitter: 0.05,
        excursion_probability: 0.0,
        ..SynthConfig::default()
    }
}

fn noisy_scenario() -> Result<Scenario, String> {
    generate_scenario(&noisy_config(0)).map_err(|e| e.to_string())
}

fn noisy_end_to_end() -> Outcome {
    let scenario = noisy_scenario()?;
    let budgets = [0, 1, 3, 10];
    let points = efficiency_curve(
        &scenario,
        &budgets,
        &scenario.config.engine_config(),
        &[0.5],
        &TimeModel::default(),
    )
    .map_err(|e| e.to_string())?;
    let recalls: Vec<f64> = points.iter().map(|p| p.recall[0].recall).collect();
    ensure(recalls[2] >= 0.90, || {
        format!("recall@0.5 with 3 boxes = {:.4}", recalls[2])
    })?;
    ensure(recalls.windows(2).all(|w| w[0] <= w[1]), || {
        format!("curve over budgets {budgets:?} decreases: {recalls:?}")
    })?;
    let shown: Vec<String> = recalls.iter().map(|r| format!("{r:.4}")).collect();
    Ok(format!("recall@0.5 over budgets {budgets:?} = [{}]", shown.join(", ")))
}

/// Reported alongside the criteria: how the curve behaves over more seeds.
fn noisy_monotone_seeds() -> String {
    let mut monotone = 0;
    let mut dips = Vec::new();
    let seeds = 8;
    for seed in 0..seeds {
        let Ok(s) = generate_scenario(&noisy_config(seed)) else {
            continue;
        };
        let Ok(points) = efficiency_curve(
            &s,
            &[0, 1, 3, 10],
            &s.config.engine_config(),
            &[0.5],
            &TimeModel::default(),
        ) else {
            continue;
        };
        let r: Vec<f64> = points.iter().map(|p| p.recall[0].recall).collect();
        let dip = r.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        if dip <= 0.0 {
            monotone += 1;
        } else {
            dips.push(format!("seed {seed} dips {dip:.4}"));
        }
    }
    format!("noisy curve non-decreasing on {monotone}/{seeds} seeds {dips:?}")
}

fn saturation() -> Outcome {
    let scenario = noisy_scenario()?;
    let every_frame = scenario.config.n_frames as usize;
    let points = efficiency_curve(
        &scenario,
        &[every_frame],
        &scenario.config.engine_config(),
        &[0.95],
        &TimeModel::default(),
    )
    .map_err(|e| e.to_string())?;
    let r = &points[0].recall[0];
    ensure(r.recall == 1.0, || {
        format!("recall@0.95 = {} ({}/{})", r.recall, r.recalled, r.total)
    })?;
    Ok(format!("recall@0.95 = 1 with {} supervised boxes", points[0].boxes))
}

fn time_model() -> Outcome {
    let model = TimeModel::default();
    let worked = annotation_time([60.0], 3, 60.0, &model);
    ensure((worked - 155.4).abs() < 1e-9, || {
        format!("worked example gives {worked}")
    })?;

    let scenario = noisy_scenario()?;
    let fps = scenario.config.fps;
    let path = efficiency_curve(&scenario, &[3], &scenario.config.engine_config(), &[0.5], &model)
        .map_err(|e| e.to_string())?;
    let target = path[0].recall[0].recall;
    let path_time = path[0].time_seconds;

    let intervals = [10.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.3, 0.2, 1.0 / fps];
    let boxes_only = boxes_only_curve(&scenario, &intervals, &[0.5], &model).map_err(|e| e.to_string())?;
    let at_two_seconds = boxes_only
        .iter()
        .find(|p| matches!(p.budget, pathsup_core::eval::Budget::BoxesOnly { seconds_between_boxes } if seconds_between_boxes == 2.0))
        .expect("2 s interval evaluated");
    ensure(path_time < at_two_seconds.time_seconds, || {
        format!(
            "path-supervised {path_time:.1} s is not below boxes-only at 1 box / 2 s ({:.1} s)",
            at_two_seconds.time_seconds
        )
    })?;
    let (interval, needed) = intervals
        .iter()
        .zip(&boxes_only)
        .find(|(_, p)| p.recall[0].recall >= target)
        .ok_or_else(|| format!("boxes-only never reaches recall {target:.4}"))?;
    ensure(*interval <= 2.0, || {
        format!("boxes-only reaches recall {target:.4} already at one box per {interval} s")
    })?;
    ensure(path_time < needed.time_seconds, || {
        format!(
            "path-supervised {path_time:.1} s vs boxes-only {:.1} s",
            needed.time_seconds
        )
    })?;
    Ok(format!(
        "155.4 s worked example; recall@0.5 {target:.4} costs {path_time:.0} s with paths, \
         boxes-only needs one box per {interval} s and {:.0} s ({:.1}x)",
        needed.time_seconds,
        needed.time_seconds / path_time
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = noisy_scenario()?;
    io::write_scenario(dir.path(), &scenario, &scenario.config.engine_config()).map_err(|e| e.to_string())?;
    let run = |jobs: &str, tag: &str| -> Result<Vec<u8>, String> {
        let d = dir.path();
        let out = d.join(format!("traj_{tag}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_pathsup"))
            .arg("infer")
            .args(["--detections", &p(d, io::DETECTIONS_FILE)])
            .args(["--paths", &p(d, io::PATHS_FILE)])
            .args(["--tracks", &p(d, io::TRACKS_FILE)])
            .args(["--boxes", &p(d, io::BOXES_FILE)])
            .args(["--config", &p(d, io::CONFIG_FILE)])
            .args(["--out", &out.display().to_string()])
            .args(["--report", &p(d, &format!("report_{tag}.json"))])
            .args(["--jobs", jobs])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        std::fs::read(out).map_err(|e| e.to_string())
    };
    let first = run("1", "a")?;
    let second = run("4", "b")?;
    ensure(!first.is_empty(), || "empty trajectories file".into())?;
    ensure(first == second, || "trajectories differ between runs".into())?;
    Ok(format!(
        "{} identical bytes across two runs (1 and 4 jobs)",
        first.len()
    ))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        rng.random_range(-1e3..1e4),
        rng.random_range(-1e3..1e4),
        rng.random_range(1e-3..1e3),
        rng.random_range(1e-3..1e3),
    )
    .expect("positive size")
}

fn random_point(rng: &mut ChaCha8Rng) -> Point {
    Point::new(rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4))
}

fn io_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1000;

    let detections: Vec<Detection> = (0..n)
        .map(|k| {
            let b = random_box(&mut rng);
            Detection::new(DetectionId(k), rng.random(), b, rng.random_range(0.0..=1.0)).expect("valid")
        })
        .collect();
    ensure(
        io::parse_detections(&io::format_detections(&detections)).ok() == Some(detections),
        || "detections differ after round trip".into(),
    )?;

    // 1000 path samples over 40 contiguous paths
    let mut paths = Vec::new();
    let mut remaining = n as usize;
    let mut id = 0;
    while remaining > 0 {
        let len = if id == 39 {
            remaining
        } else {
            rng.random_range(1..=remaining.min(50))
        };
        let samples = (0..len).map(|_| random_point(&mut rng)).collect();
        paths.push(PathAnnotation::new(PathId(id), rng.random_range(0..10_000), samples).expect("non-empty"));
        remaining -= len;
        id += 1;
    }
    let path_lines = io::format_paths(&paths);
    ensure(path_lines.lines().count() == n as usize, || {
        "wrong path sample count".into()
    })?;
    ensure(io::parse_paths(&path_lines).ok() == Some(paths), || {
        "paths differ after round trip".into()
    })?;

    let tracks: Vec<PointTrack> = (0..n)
        .map(|k| {
            let len = rng.random_range(1..6);
            let pts = (0..len).map(|_| random_point(&mut rng)).collect();
            PointTrack::new(TrackId(k), rng.random(), pts).expect("non-empty")
        })
        .collect();
    ensure(
        io::parse_tracks(&io::format_tracks(&tracks)).ok() == Some(tracks),
        || "tracks differ after round trip".into(),
    )?;

    let boxes: Vec<BoxAnnotation> = (0..n)
        .map(|_| BoxAnnotation {
            path_id: PathId(rng.random_range(0..50)),
            frame: rng.random(),
            bbox: random_box(&mut rng),
        })
        .collect();
    ensure(io::parse_boxes(&io::format_boxes(&boxes)).ok() == Some(boxes), || {
        "boxes differ after round trip".into()
    })?;

    let sources = [
        BoxSource::Detected,
        BoxSource::Interpolated,
        BoxSource::Extrapolated,
        BoxSource::Supervised,
    ];
    let mut trajectories: BTreeMap<PathId, Trajectory> = BTreeMap::new();
    let mut entries = 0;
    while entries < n {
        let path_id = PathId(rng.random_range(0..40));
        let t = trajectories.entry(path_id).or_insert_with(|| Trajectory::new(path_id));
        let entry = TrajectoryEntry {
            bbox: random_box(&mut rng),
            source: sources[rng.random_range(0..4)],
        };
        if t.entries.insert(rng.random_range(0..5000), entry).is_none() {
            entries += 1;
        }
    }
    let trajectories: Vec<Trajectory> = trajectories.into_values().collect();
    ensure(
        io::parse_trajectories(&io::format_trajectories(&trajectories)).ok() == Some(trajectories.clone()),
        || "trajectories differ after round trip".into(),
    )?;
    let gt: Vec<GroundTruth> = trajectories.iter().map(GroundTruth::from).collect();
    ensure(io::parse_gt(&io::format_gt(&gt)).ok() == Some(gt), || {
        "ground truth differs after round trip".into()
    })?;

    let malformed: [(&str, Result<(), Error>, usize); 4] = [
        (
            "score 1.2",
            io::parse_detections(
                "{\"id\":1,\"frame\":0,\"x\":0,\"y\":0,\"w\":5,\"h\":5,\"score\":0.2}\n\
                 {\"id\":2,\"frame\":0,\"x\":0,\"y\":0,\"w\":5,\"h\":5,\"score\":1.2}\n",
            )
            .map(drop),
            2,
        ),
        (
            "broken JSON",
            io::parse_boxes("{\"path_id\":1,\"frame\":0,\"x\":0,\"y\":0,\"w\":5,\"h\":5}\n\n{\"path_id\":").map(drop),
            3,
        ),
        (
            "missing field",
            io::parse_tracks("{\"track_id\":1,\"points\":[[0,0]]}").map(drop),
            1,
        ),
        (
            "path gap",
            io::parse_paths(
                "{\"path_id\":1,\"frame\":0,\"px\":0,\"py\":0}\n{\"path_id\":1,\"frame\":2,\"px\":0,\"py\":0}\n",
            )
            .map(drop),
            2,
        ),
    ];
    for (what, result, expected_line) in malformed {
        match result {
            Err(Error::Parse { line, .. }) if line == expected_line => {}
            other => {
                return Err(format!(
                    "{what}: expected rejection at line {expected_line}, got {other:?}"
                ))
            }
        }
    }
    Ok(format!(
        "{n} records per kind round-trip exactly; 4 malformed inputs rejected at the right line"
    ))
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "prelabel matches exhaustive search",
            limit: Some(Duration::from_secs(30)),
            check: prelabel_oracle,
        },
        Criterion {
            name: "linkage matches exhaustive search",
            limit: Some(Duration::from_secs(30)),
            check: linkage_oracle,
        },
        Criterion {
            name: "noiseless scenario recovered exactly",
            limit: Some(Duration::from_secs(10)),
            check: noiseless_end_to_end,
        },
        Criterion {
            name: "noisy scenario accuracy and budget curve",
            limit: Some(Duration::from_secs(60)),
            check: noisy_end_to_end,
        },
        Criterion {
            name: "one box per frame saturates",
            limit: None,
            check: saturation,
        },
        Criterion {
            name: "annotation time model",
            limit: None,
            check: time_model,
        },
        Criterion {
            name: "infer is deterministic",
            limit: None,
            check: determinism,
        },
        Criterion {
            name: "record files round-trip",
            limit: None,
            check: io_round_trip,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!(
                "took {:.2} s, limit {} s",
                elapsed.as_secs_f64(),
                limit.as_secs()
            )),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {}: {detail} [{:.2} s]", c.name, elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {}: {reason} [{:.2} s]", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("info  {}", noisy_monotone_seeds());
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
