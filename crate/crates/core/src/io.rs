//! JSON Lines readers and writers for every record kind, and scenario
//! directories.
//!
//! Every file holds one JSON object per line; blank lines are skipped.
//! Validation errors carry the 1-based line number and name the offending
//! field. Floats are written in shortest round-trip form, so parsing a
//! written file gives back identical values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{EngineConfig, ProjectConfig};
use crate::error::{Error, Result};
use crate::model::{
    BBox, BoxAnnotation, BoxSource, Detection, DetectionId, GroundTruth, PathAnnotation, PathId, Point, PointTrack,
    TrackId, Trajectory, TrajectoryEntry,
};
use crate::synth::{Scenario, SynthConfig};

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const PATHS_FILE: &str = "paths.jsonl";
pub const TRACKS_FILE: &str = "tracks.jsonl";
pub const BOXES_FILE: &str = "boxes.jsonl";
pub const GT_FILE: &str = "gt.jsonl";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

/// One detection per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub id: DetectionId,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

/// One path sample per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub path_id: PathId,
    pub frame: u32,
    pub px: f64,
    pub py: f64,
}

/// One point track per line, positions from `start_frame` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub track_id: TrackId,
    pub start_frame: u32,
    pub points: Vec<[f64; 2]>,
}

/// One box per line; shared by box annotations and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub path_id: PathId,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// One trajectory box per line with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub path_id: PathId,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub source: BoxSource,
}

fn bbox_of(x: f64, y: f64, w: f64, h: f64) -> std::result::Result<BBox, String> {
    BBox::new(x, y, w, h).map_err(|e| format!("fields x, y, w, h: {e}"))
}

fn check_finite(field: &str, v: f64) -> std::result::Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("field {field}: {v} is not finite"))
    }
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection) -> Self {
        DetectionRecord {
            id: d.id,
            frame: d.frame,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
        }
    }

    /// Validates the record; the error names the offending field.
    pub fn to_detection(&self) -> std::result::Result<Detection, String> {
        let bbox = bbox_of(self.x, self.y, self.w, self.h)?;
        Detection::new(self.id, self.frame, bbox, self.score).map_err(|e| format!("field score: {e}"))
    }
}

impl PathRecord {
    pub fn from_path(p: &PathAnnotation) -> Vec<PathRecord> {
        p.samples()
            .map(|(frame, s)| PathRecord {
                path_id: p.path_id,
                frame,
                px: s.x,
                py: s.y,
            })
            .collect()
    }
}

impl TrackRecord {
    pub fn from_track(t: &PointTrack) -> Self {
        TrackRecord {
            track_id: t.track_id,
            start_frame: t.start_frame(),
            points: t.points().iter().map(|p| [p.x, p.y]).collect(),
        }
    }

    pub fn to_track(&self) -> std::result::Result<PointTrack, String> {
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err("field points: coordinates must be finite".into());
        }
        let points = self.points.iter().map(|[x, y]| Point::new(*x, *y)).collect();
        PointTrack::new(self.track_id, self.start_frame, points).map_err(|e| format!("field points: {e}"))
    }
}

impl BoxRecord {
    pub fn from_box(b: &BoxAnnotation) -> Self {
        Self::from_parts(b.path_id, b.frame, &b.bbox)
    }

    fn from_parts(path_id: PathId, frame: u32, b: &BBox) -> Self {
        BoxRecord {
            path_id,
            frame,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }

    pub fn to_box(&self) -> std::result::Result<BoxAnnotation, String> {
        Ok(BoxAnnotation {
            path_id: self.path_id,
            frame: self.frame,
            bbox: bbox_of(self.x, self.y, self.w, self.h)?,
        })
    }
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &Trajectory) -> Vec<TrajectoryRecord> {
        t.entries
            .iter()
            .map(|(f, e)| TrajectoryRecord {
                path_id: t.path_id,
                frame: *f,
                x: e.bbox.x,
                y: e.bbox.y,
                w: e.bbox.w,
                h: e.bbox.h,
                source: e.source,
            })
            .collect()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn read_records<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| parse_error(k + 1, e.to_string()))?;
        out.push((k + 1, record));
    }
    Ok(out)
}

fn write_records<T: Serialize>(mut writer: impl Write, records: impl IntoIterator<Item = T>) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

fn convert_all<R, T>(
    records: Vec<(usize, R)>,
    convert: impl Fn(&R) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    records
        .into_iter()
        .map(|(line, r)| convert(&r).map_err(|m| parse_error(line, m)))
        .collect()
}

pub fn read_detections(reader: impl BufRead) -> Result<Vec<Detection>> {
    convert_all(read_records(reader)?, DetectionRecord::to_detection)
}

pub fn write_detections(writer: impl Write, detections: &[Detection]) -> Result<()> {
    write_records(writer, detections.iter().map(DetectionRecord::from_detection))
}

/// Groups path samples by `path_id`. Each path's frames must form a
/// gap-free range; paths come back ordered by id. Errors carry the
/// position paired with the offending record.
pub fn paths_from_records(records: impl IntoIterator<Item = (usize, PathRecord)>) -> Result<Vec<PathAnnotation>> {
    let mut grouped: BTreeMap<PathId, BTreeMap<u32, (usize, Point)>> = BTreeMap::new();
    for (line, r) in records {
        check_finite("px", r.px).map_err(|m| parse_error(line, m))?;
        check_finite("py", r.py).map_err(|m| parse_error(line, m))?;
        let samples = grouped.entry(r.path_id).or_default();
        if samples.insert(r.frame, (line, Point::new(r.px, r.py))).is_some() {
            return Err(parse_error(
                line,
                format!(
                    "field frame: path {} already has a sample at frame {}",
                    r.path_id, r.frame
                ),
            ));
        }
    }
    grouped
        .into_iter()
        .map(|(path_id, samples)| {
            let mut prev: Option<u32> = None;
            for (&frame, &(line, _)) in &samples {
                if let Some(p) = prev {
                    if frame != p + 1 {
                        return Err(parse_error(
                            line,
                            format!(
                                "field frame: path {path_id} samples must cover a contiguous frame range, \
                                 frames {}..={} are missing",
                                p + 1,
                                frame - 1
                            ),
                        ));
                    }
                }
                prev = Some(frame);
            }
            PathAnnotation::from_samples(path_id, samples.into_iter().map(|(f, (_, p))| (f, p)))
        })
        .collect()
}

pub fn read_paths(reader: impl BufRead) -> Result<Vec<PathAnnotation>> {
    paths_from_records(read_records::<PathRecord>(reader)?)
}

pub fn write_paths(writer: impl Write, paths: &[PathAnnotation]) -> Result<()> {
    write_records(writer, paths.iter().flat_map(PathRecord::from_path))
}

pub fn read_tracks(reader: impl BufRead) -> Result<Vec<PointTrack>> {
    convert_all(read_records(reader)?, TrackRecord::to_track)
}

pub fn write_tracks(writer: impl Write, tracks: &[PointTrack]) -> Result<()> {
    write_records(writer, tracks.iter().map(TrackRecord::from_track))
}

pub fn read_boxes(reader: impl BufRead) -> Result<Vec<BoxAnnotation>> {
    convert_all(read_records(reader)?, BoxRecord::to_box)
}

pub fn write_boxes(writer: impl Write, boxes: &[BoxAnnotation]) -> Result<()> {
    write_records(writer, boxes.iter().map(BoxRecord::from_box))
}

/// Ground truth uses the box record layout; boxes are grouped by `path_id`.
pub fn read_gt(reader: impl BufRead) -> Result<Vec<GroundTruth>> {
    let mut grouped: BTreeMap<PathId, GroundTruth> = BTreeMap::new();
    for (line, r) in read_records::<BoxRecord>(reader)? {
        let b = r.to_box().map_err(|m| parse_error(line, m))?;
        let gt = grouped.entry(r.path_id).or_insert_with(|| GroundTruth {
            path_id: r.path_id,
            boxes: BTreeMap::new(),
        });
        if gt.boxes.insert(r.frame, b.bbox).is_some() {
            return Err(parse_error(
                line,
                format!(
                    "field frame: object {} already has a box at frame {}",
                    r.path_id, r.frame
                ),
            ));
        }
    }
    Ok(grouped.into_values().collect())
}

pub fn write_gt(writer: impl Write, gt: &[GroundTruth]) -> Result<()> {
    write_records(
        writer,
        gt.iter().flat_map(|g| {
            g.boxes
                .iter()
                .map(move |(f, b)| BoxRecord::from_parts(g.path_id, *f, b))
        }),
    )
}

pub fn read_trajectories(reader: impl BufRead) -> Result<Vec<Trajectory>> {
    let mut grouped: BTreeMap<PathId, Trajectory> = BTreeMap::new();
    for (line, r) in read_records::<TrajectoryRecord>(reader)? {
        let bbox = bbox_of(r.x, r.y, r.w, r.h).map_err(|m| parse_error(line, m))?;
        let t = grouped.entry(r.path_id).or_insert_with(|| Trajectory::new(r.path_id));
        let entry = TrajectoryEntry { bbox, source: r.source };
        if t.entries.insert(r.frame, entry).is_some() {
            return Err(parse_error(
                line,
                format!(
                    "field frame: trajectory {} already has a box at frame {}",
                    r.path_id, r.frame
                ),
            ));
        }
    }
    Ok(grouped.into_values().collect())
}

pub fn write_trajectories(writer: impl Write, trajectories: &[Trajectory]) -> Result<()> {
    write_records(writer, trajectories.iter().flat_map(TrajectoryRecord::from_trajectory))
}

macro_rules! file_helpers {
    ($item:ty, $read:ident, $write:ident, $parse:ident, $format:ident, $load:ident, $save:ident) => {
        pub fn $parse(s: &str) -> Result<Vec<$item>> {
            $read(s.as_bytes())
        }

        pub fn $format(items: &[$item]) -> String {
            let mut buf = Vec::new();
            $write(&mut buf, items).expect("writing to memory cannot fail");
            String::from_utf8(buf).expect("JSON output is UTF-8")
        }

        pub fn $load(path: impl AsRef<Path>) -> Result<Vec<$item>> {
            $read(BufReader::new(File::open(path)?))
        }

        pub fn $save(path: impl AsRef<Path>, items: &[$item]) -> Result<()> {
            $write(BufWriter::new(File::create(path)?), items)
        }
    };
}

file_helpers!(
    Detection,
    read_detections,
    write_detections,
    parse_detections,
    format_detections,
    load_detections,
    save_detections
);
file_helpers!(
    PathAnnotation,
    read_paths,
    write_paths,
    parse_paths,
    format_paths,
    load_paths,
    save_paths
);
file_helpers!(
    PointTrack,
    read_tracks,
    write_tracks,
    parse_tracks,
    format_tracks,
    load_tracks,
    save_tracks
);
file_helpers!(
    BoxAnnotation,
    read_boxes,
    write_boxes,
    parse_boxes,
    format_boxes,
    load_boxes,
    save_boxes
);
file_helpers!(GroundTruth, read_gt, write_gt, parse_gt, format_gt, load_gt, save_gt);
file_helpers!(
    Trajectory,
    read_trajectories,
    write_trajectories,
    parse_trajectories,
    format_trajectories,
    load_trajectories,
    save_trajectories
);

/// Writes every record file of a scenario plus `config.toml` holding the
/// engine settings and the generator settings.
pub fn write_scenario(dir: impl AsRef<Path>, scenario: &Scenario, engine: &EngineConfig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_detections(dir.join(DETECTIONS_FILE), &scenario.detections)?;
    save_paths(dir.join(PATHS_FILE), &scenario.paths)?;
    save_tracks(dir.join(TRACKS_FILE), &scenario.tracks)?;
    save_boxes(dir.join(BOXES_FILE), &scenario.boxes)?;
    save_gt(dir.join(GT_FILE), &scenario.ground_truth)?;
    let project = ProjectConfig {
        engine: engine.clone(),
        synth: Some(scenario.config.clone()),
    };
    std::fs::write(dir.join(CONFIG_FILE), project.to_toml_string())?;
    Ok(())
}

/// Reads a scenario directory. Without a `[synth]` section the generator
/// settings default to the engine frame rate and a video ending at the
/// last ground-truth frame. The excursion count is not stored and reads
/// back as zero. A missing `boxes.jsonl` means no boxes.
pub fn read_scenario(dir: impl AsRef<Path>) -> Result<(Scenario, EngineConfig)> {
    let dir = dir.as_ref();
    let project = ProjectConfig::load(dir.join(CONFIG_FILE))?;
    let ground_truth = load_gt(dir.join(GT_FILE))?;
    let boxes_path = dir.join(BOXES_FILE);
    let boxes = if boxes_path.exists() {
        load_boxes(boxes_path)?
    } else {
        Vec::new()
    };
    let config = match project.synth {
        Some(s) => s,
        None => SynthConfig {
            fps: project.engine.fps,
            n_frames: ground_truth
                .iter()
                .filter_map(|g| g.last_frame())
                .max()
                .map_or(0, |f| f + 1),
            n_objects: ground_truth.len(),
            ..SynthConfig::default()
        },
    };
    let scenario = Scenario {
        config,
        ground_truth,
        detections: load_detections(dir.join(DETECTIONS_FILE))?,
        tracks: load_tracks(dir.join(TRACKS_FILE))?,
        paths: load_paths(dir.join(PATHS_FILE))?,
        boxes,
        excursion_samples: 0,
    };
    Ok((scenario, project.engine))
}
