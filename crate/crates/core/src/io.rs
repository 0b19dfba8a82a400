//! File formats: COCO keypoint annotations, COCO keypoint results, dense
//! candidate dumps and selection files.
//!
//! Candidate dumps are plain text, one grid cell per line:
//!
//! ```text
//! image_id level row col conf x1 y1 p1 x2 y2 p2 ... xK yK pK
//! ```
//!
//! `level` is `P3`, `P4` or `P5` (strides 8, 16, 32), `p_i` the predicted
//! visibility probability of keypoint `i`. Blank lines and lines starting
//! with `#` are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::assign::{GridCandidate, Level};
use crate::error::DataError;
use crate::eval::{Detection, ImageInstance};
use crate::pose::{GroundTruthInstance, Keypoint, Pose, SigmaPreset, SigmaTable, Visibility};

/// Environment variable holding extra directories searched for
/// `<name>.json` sigma tables, separated like `PATH`.
pub const SIGMA_PATH_ENV: &str = "POSEKIT_SIGMA_PATH";

/// COCO keypoint names in annotation order.
pub const COCO_KEYPOINT_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// COCO person skeleton, 1-based keypoint indices.
pub const COCO_SKELETON: [[u32; 2]; 19] = [
    [16, 14],
    [14, 12],
    [17, 15],
    [15, 13],
    [12, 13],
    [6, 12],
    [7, 13],
    [6, 7],
    [6, 8],
    [7, 9],
    [8, 10],
    [9, 11],
    [2, 3],
    [1, 2],
    [1, 3],
    [2, 4],
    [3, 5],
    [4, 6],
    [5, 7],
];

/// Writes integral values as JSON integers, the way COCO files store
/// visibility flags and pixel coordinates.
fn compact_f64s<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        if x.fract() == 0.0 && x.abs() < 9.0e15 {
            seq.serialize_element(&(x as i64))?;
        } else {
            seq.serialize_element(&x)?;
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    #[serde(default = "person_category")]
    pub category_id: u64,
    #[serde(serialize_with = "compact_f64s")]
    pub keypoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_keypoints: Option<u32>,
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default)]
    pub iscrowd: u8,
}

fn person_category() -> u64 {
    1
}

impl Annotation {
    /// Declared labeled-keypoint count, or the count of `v > 0` flags.
    pub fn num_labeled(&self) -> u32 {
        self.num_keypoints.unwrap_or_else(|| {
            self.keypoints
                .chunks_exact(3)
                .filter(|t| t[2] > 0.0)
                .count() as u32
        })
    }

    /// Usable for similarity math: labeled keypoints, positive area, not a crowd region.
    pub fn is_usable(&self) -> bool {
        self.num_labeled() > 0 && self.area > 0.0 && self.iscrowd == 0
    }

    pub fn to_instance(&self) -> crate::error::Result<GroundTruthInstance> {
        GroundTruthInstance::new(
            self.id,
            Pose::from_flat(&self.keypoints)?,
            self.area,
            self.bbox,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
    #[serde(default)]
    pub keypoints: Vec<String>,
    #[serde(default)]
    pub skeleton: Vec<[u32; 2]>,
}

impl Category {
    pub fn person(num_keypoints: usize) -> Self {
        let (keypoints, skeleton) = if num_keypoints == COCO_KEYPOINT_NAMES.len() {
            (
                COCO_KEYPOINT_NAMES.iter().map(|s| s.to_string()).collect(),
                COCO_SKELETON.to_vec(),
            )
        } else {
            (
                (0..num_keypoints).map(|i| format!("kp{i}")).collect(),
                Vec::new(),
            )
        };
        Category {
            id: 1,
            name: "person".into(),
            supercategory: Some("person".into()),
            keypoints,
            skeleton,
        }
    }
}

/// A COCO keypoint annotation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub categories: Vec<Category>,
}

impl Dataset {
    /// Keypoints per instance, from the category definition or else the
    /// first annotation.
    pub fn num_keypoints(&self) -> Option<usize> {
        self.categories
            .iter()
            .map(|c| c.keypoints.len())
            .find(|&k| k > 0)
            .or_else(|| self.annotations.first().map(|a| a.keypoints.len() / 3))
    }

    pub fn image_ids(&self) -> Vec<u64> {
        self.images.iter().map(|i| i.id).collect()
    }

    /// Usable annotations as evaluation instances.
    pub fn instances(&self) -> crate::error::Result<Vec<ImageInstance>> {
        self.annotations
            .iter()
            .filter(|a| a.is_usable())
            .map(|a| {
                Ok(ImageInstance {
                    image_id: a.image_id,
                    instance: a.to_instance()?,
                })
            })
            .collect()
    }

    /// Usable instances grouped by image, in image-id order.
    pub fn instances_by_image(
        &self,
    ) -> crate::error::Result<BTreeMap<u64, Vec<GroundTruthInstance>>> {
        let mut out: BTreeMap<u64, Vec<GroundTruthInstance>> =
            self.images.iter().map(|i| (i.id, Vec::new())).collect();
        for inst in self.instances()? {
            out.entry(inst.image_id).or_default().push(inst.instance);
        }
        Ok(out)
    }

    fn validate(&self, path: &Path) -> Result<(), DataError> {
        let images: BTreeSet<u64> = self.images.iter().map(|i| i.id).collect();
        if images.len() != self.images.len() {
            return Err(DataError::schema(path, "duplicate image id"));
        }
        let k = self.num_keypoints();
        for a in &self.annotations {
            if !images.contains(&a.image_id) {
                return Err(DataError::schema(
                    path,
                    format!(
                        "annotation {} references unknown image {}",
                        a.id, a.image_id
                    ),
                ));
            }
            if let Some(k) = k {
                if a.keypoints.len() != 3 * k {
                    return Err(DataError::schema(
                        path,
                        format!(
                            "annotation {}: keypoints has {} values, expected {} (3 x {k})",
                            a.id,
                            a.keypoints.len(),
                            3 * k
                        ),
                    ));
                }
            }
            for t in a.keypoints.chunks_exact(3) {
                if Visibility::from_f64(t[2]).is_none() {
                    return Err(DataError::schema(
                        path,
                        format!(
                            "annotation {}: visibility flag {} not in {{0, 1, 2}}",
                            a.id, t[2]
                        ),
                    ));
                }
            }
            if !a.area.is_finite() {
                return Err(DataError::schema(
                    path,
                    format!("annotation {}: area is not finite", a.id),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset, DataError> {
    let ds: Dataset = serde_json::from_str(text).map_err(|e| DataError::from_json(path, e))?;
    ds.validate(path)?;
    for a in ds.annotations.iter().filter(|a| !a.is_usable()) {
        log::debug!("{}: annotation {} is not usable", path.display(), a.id);
    }
    Ok(ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_json(ds, path.as_ref())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| DataError::from_json(path, e))?;
    w.write_all(b"\n").map_err(|e| DataError::io(path, e))?;
    w.flush().map_err(|e| DataError::io(path, e))
}

/// One entry of a COCO keypoint results array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub image_id: u64,
    #[serde(default = "person_category")]
    pub category_id: u64,
    #[serde(serialize_with = "compact_f64s")]
    pub keypoints: Vec<f64>,
    pub score: f64,
}

impl ResultEntry {
    /// Predicted pose; any positive visibility value counts as visible.
    pub fn pose(&self) -> Pose {
        Pose::new(
            self.keypoints
                .chunks_exact(3)
                .map(|t| Keypoint {
                    x: t[0],
                    y: t[1],
                    v: if t[2] > 0.0 {
                        Visibility::Visible
                    } else {
                        Visibility::Unlabeled
                    },
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub entries: Vec<ResultEntry>,
}

impl ResultSet {
    pub fn num_keypoints(&self) -> Option<usize> {
        self.entries.first().map(|e| e.keypoints.len() / 3)
    }

    pub fn detections(&self) -> Vec<Detection> {
        self.entries
            .iter()
            .map(|e| Detection {
                image_id: e.image_id,
                pose: e.pose(),
                score: e.score,
                matched_gt: None,
            })
            .collect()
    }

    pub fn from_detections(dets: &[Detection]) -> Self {
        ResultSet {
            entries: dets
                .iter()
                .map(|d| ResultEntry {
                    image_id: d.image_id,
                    category_id: 1,
                    keypoints: d.pose.to_flat(),
                    score: d.score,
                })
                .collect(),
        }
    }

    /// Entries grouped by image, keeping file order within each image.
    pub fn by_image(&self) -> BTreeMap<u64, Vec<&ResultEntry>> {
        let mut out: BTreeMap<u64, Vec<&ResultEntry>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.image_id).or_default().push(e);
        }
        out
    }

    /// Image ids referenced by results but absent from the dataset.
    pub fn unknown_images(&self, ds: &Dataset) -> Vec<u64> {
        let known: BTreeSet<u64> = ds.images.iter().map(|i| i.id).collect();
        let unknown: BTreeSet<u64> = self
            .entries
            .iter()
            .map(|e| e.image_id)
            .filter(|id| !known.contains(id))
            .collect();
        unknown.into_iter().collect()
    }
}

pub fn parse_results(text: &str, path: &Path) -> Result<ResultSet, DataError> {
    let entries: Vec<ResultEntry> =
        serde_json::from_str(text).map_err(|e| DataError::from_json(path, e))?;
    let k = entries.first().map(|e| e.keypoints.len());
    for (i, e) in entries.iter().enumerate() {
        if e.keypoints.len() % 3 != 0 || Some(e.keypoints.len()) != k {
            return Err(DataError::schema(
                path,
                format!(
                    "result {i} (image {}): keypoints has {} values, expected {}",
                    e.image_id,
                    e.keypoints.len(),
                    k.unwrap_or(0)
                ),
            ));
        }
        if !e.score.is_finite() {
            return Err(DataError::schema(
                path,
                format!("result {i}: score is not finite"),
            ));
        }
    }
    Ok(ResultSet { entries })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultSet, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_results(&text, path)
}

pub fn save_results(rs: &ResultSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_json(&rs.entries, path.as_ref())
}

/// Results array as a JSON string (for stdout).
pub fn results_to_string(rs: &ResultSet) -> String {
    serde_json::to_string_pretty(&rs.entries).expect("results serialize")
}

/// Candidates of each image in file order.
pub type CandidateSet = BTreeMap<u64, Vec<GridCandidate>>;

pub fn format_candidate_line(image_id: u64, c: &GridCandidate) -> String {
    use std::fmt::Write as _;
    let mut s = format!("{image_id} {} {} {} {}", c.level(), c.row, c.col, c.conf());
    for (kp, p) in c.pose.keypoints().iter().zip(&c.vis_probs) {
        let _ = write!(s, " {} {} {}", kp.x, kp.y, p);
    }
    s
}

pub fn write_candidates<'a, W: Write>(
    mut w: W,
    cands: impl IntoIterator<Item = (u64, &'a GridCandidate)>,
) -> std::io::Result<()> {
    for (id, c) in cands {
        writeln!(w, "{}", format_candidate_line(id, c))?;
    }
    Ok(())
}

pub fn save_candidates(set: &CandidateSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_candidates(
        &mut w,
        set.iter()
            .flat_map(|(&id, cs)| cs.iter().map(move |c| (id, c))),
    )
    .and_then(|_| w.flush())
    .map_err(|e| DataError::io(path, e))
}

/// Streams candidate lines from any reader.
pub fn read_candidates<R: BufRead>(reader: R, path: &Path) -> Result<CandidateSet, DataError> {
    let mut out = CandidateSet::new();
    let mut k: Option<usize> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 8 || !(tokens.len() - 5).is_multiple_of(3) {
            return Err(DataError::schema(
                path,
                format!(
                    "line {line_no}: expected 5 + 3K fields, found {}",
                    tokens.len()
                ),
            ));
        }
        let this_k = (tokens.len() - 5) / 3;
        match k {
            None => k = Some(this_k),
            Some(k) if k != this_k => {
                return Err(DataError::schema(
                    path,
                    format!("line {line_no}: {this_k} keypoints, earlier lines have {k}"),
                ))
            }
            _ => {}
        }
        let parse_err = |field: &str, col: usize, tok: &str| DataError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            column: col,
            msg: format!("cannot parse {field} from {tok:?}"),
        };
        let int = |i: usize, field: &str| -> Result<u64, DataError> {
            tokens[i]
                .parse::<u64>()
                .map_err(|_| parse_err(field, i + 1, tokens[i]))
        };
        let real = |i: usize, field: &str| -> Result<f64, DataError> {
            tokens[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(field, i + 1, tokens[i]))
        };
        let image_id = int(0, "image_id")?;
        let level: Level = tokens[1].parse().map_err(|_| {
            DataError::schema(
                path,
                format!(
                    "line {line_no}: level {:?} is not one of P3, P4, P5",
                    tokens[1]
                ),
            )
        })?;
        let row = u32::try_from(int(2, "row")?).map_err(|_| parse_err("row", 3, tokens[2]))?;
        let col = u32::try_from(int(3, "col")?).map_err(|_| parse_err("col", 4, tokens[3]))?;
        let conf = real(4, "conf")?;
        let mut kps = Vec::with_capacity(this_k);
        let mut vis = Vec::with_capacity(this_k);
        for j in 0..this_k {
            let base = 5 + 3 * j;
            kps.push(Keypoint {
                x: real(base, "x")?,
                y: real(base + 1, "y")?,
                v: Visibility::Visible,
            });
            vis.push(real(base + 2, "vis_prob")?);
        }
        let cand = GridCandidate::new(level, row, col, conf, Pose::new(kps), vis)
            .map_err(|e| DataError::schema(path, format!("line {line_no}: {e}")))?;
        out.entry(image_id).or_default().push(cand);
    }
    Ok(out)
}

pub fn load_candidates(path: impl AsRef<Path>) -> Result<CandidateSet, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_candidates(BufReader::new(file), path)
}

/// One selected prediction for a ground truth: `pred_index` indexes the
/// image's results in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub image_id: u64,
    pub gt_id: u64,
    pub pred_index: usize,
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<Vec<SelectionEntry>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::from_json(path, e))
}

pub fn save_selection(sel: &[SelectionEntry], path: impl AsRef<Path>) -> Result<(), DataError> {
    write_json(&sel, path.as_ref())
}

/// Resolves a sigma preset name: built-ins first, then `<name>.json` (a
/// JSON array of positive constants) in the directories of
/// [`SIGMA_PATH_ENV`].
pub fn resolve_sigmas(name: &str) -> Result<SigmaPreset, DataError> {
    if let Ok(p) = name.parse::<SigmaPreset>() {
        return Ok(p);
    }
    let dirs = std::env::var_os(SIGMA_PATH_ENV).unwrap_or_default();
    for dir in std::env::split_paths(&dirs) {
        let candidate: PathBuf = dir.join(format!("{name}.json"));
        if candidate.is_file() {
            let text =
                std::fs::read_to_string(&candidate).map_err(|e| DataError::io(&candidate, e))?;
            let k: Vec<f64> =
                serde_json::from_str(&text).map_err(|e| DataError::from_json(&candidate, e))?;
            let table =
                SigmaTable::new(k).map_err(|e| DataError::schema(&candidate, e.to_string()))?;
            return Ok(SigmaPreset::Custom(name.to_owned(), table));
        }
    }
    Err(DataError::schema(
        name,
        format!("unknown sigma preset (built-ins: coco17, crowdpose14, uniform, uniform(K); search path ${SIGMA_PATH_ENV})"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
      "images": [{"id": 7, "width": 640, "height": 480, "license": 3}],
      "annotations": [{"id": 1, "image_id": 7, "category_id": 1,
                       "keypoints": [10, 20, 2, 0, 0, 0], "num_keypoints": 1,
                       "area": 900.5, "bbox": [1, 2, 30, 30], "iscrowd": 0,
                       "segmentation": []}],
      "categories": [{"id": 1, "name": "person", "keypoints": ["a", "b"], "skeleton": [[1, 2]]}]
    }"#;

    fn p() -> &'static Path {
        Path::new("test.json")
    }

    #[test]
    fn minimal_dataset() {
        let ds = parse_dataset(MINIMAL, p()).unwrap();
        assert_eq!((ds.images.len(), ds.annotations.len()), (1, 1));
        assert_eq!(ds.num_keypoints(), Some(2));
        let inst = ds.instances().unwrap();
        assert_eq!(inst.len(), 1);
        assert!((inst[0].instance.scale() - 900.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wrong_keypoint_length_names_annotation() {
        let bad = MINIMAL.replace("[10, 20, 2, 0, 0, 0]", "[10, 20, 2, 0, 0]");
        match parse_dataset(&bad, p()) {
            Err(DataError::Schema { msg, .. }) => assert!(msg.contains("annotation 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_image_and_missing_field() {
        let bad = MINIMAL.replace("\"image_id\": 7", "\"image_id\": 8");
        assert!(matches!(
            parse_dataset(&bad, p()),
            Err(DataError::Schema { .. })
        ));
        let missing = MINIMAL.replace("\"area\": 900.5,", "");
        match parse_dataset(&missing, p()) {
            Err(DataError::Schema { msg, .. }) => assert!(msg.contains("area"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_dataset("{\n  \"images\": [,]\n}", p()) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_keypoint_annotation_is_kept_but_unusable() {
        let text = MINIMAL
            .replace("[10, 20, 2, 0, 0, 0]", "[0, 0, 0, 0, 0, 0]")
            .replace("\"num_keypoints\": 1", "\"num_keypoints\": 0");
        let ds = parse_dataset(&text, p()).unwrap();
        assert_eq!(ds.annotations.len(), 1);
        assert!(!ds.annotations[0].is_usable());
        assert!(ds.instances().unwrap().is_empty());
    }

    #[test]
    fn bad_visibility_flag() {
        let bad = MINIMAL.replace("[10, 20, 2, 0, 0, 0]", "[10, 20, 3, 0, 0, 0]");
        assert!(matches!(
            parse_dataset(&bad, p()),
            Err(DataError::Schema { .. })
        ));
    }

    #[test]
    fn results_parse() {
        assert!(parse_results("[]", p()).unwrap().entries.is_empty());
        let rs = parse_results(
            r#"[{"image_id": 1, "category_id": 1, "keypoints": [1, 2, 1], "score": 0.5}]"#,
            p(),
        )
        .unwrap();
        assert_eq!(rs.entries[0].score, 0.5);
        assert!(parse_results(
            r#"[{"image_id": 1, "keypoints": [1, 2], "score": 0.5}]"#,
            p()
        )
        .is_err());
        assert!(parse_results(r#"[{"image_id": 1, "keypoints": [1, 2, 1]}]"#, p()).is_err());
    }

    #[test]
    fn unknown_result_images_are_reported() {
        let ds = parse_dataset(MINIMAL, p()).unwrap();
        let rs = parse_results(
            r#"[{"image_id": 7, "keypoints": [1, 2, 1, 0, 0, 0], "score": 0.5},
                {"image_id": 99, "keypoints": [1, 2, 1, 0, 0, 0], "score": 0.4}]"#,
            p(),
        )
        .unwrap();
        assert_eq!(rs.entries.len(), 2);
        assert_eq!(rs.unknown_images(&ds), vec![99]);
    }

    #[test]
    fn candidate_lines() {
        let text = "# comment\n3 P4 1 2 0.75 10.5 20 0.9 11 21 0.1\n\n";
        let set = read_candidates(text.as_bytes(), p()).unwrap();
        let c = &set[&3][0];
        assert_eq!(c.stride(), 16);
        assert_eq!((c.row, c.col, c.conf()), (1, 2, 0.75));
        assert_eq!(c.vis_probs, vec![0.9, 0.1]);
        assert_eq!(
            format_candidate_line(3, c),
            "3 P4 1 2 0.75 10.5 20 0.9 11 21 0.1"
        );
    }

    #[test]
    fn candidate_errors() {
        let bad_level = "3 P6 1 2 0.75 10 20 0.9";
        assert!(matches!(
            read_candidates(bad_level.as_bytes(), p()),
            Err(DataError::Schema { .. })
        ));
        let bad_num = "3 P3 1 2 0.75 abc 20 0.9";
        match read_candidates(bad_num.as_bytes(), p()) {
            Err(DataError::Parse { line, column, .. }) => assert_eq!((line, column), (1, 6)),
            other => panic!("{other:?}"),
        }
        let ragged = "1 P3 0 0 0.5 1 2 0.5\n1 P3 0 1 0.5 1 2 0.5 3 4 0.5";
        assert!(read_candidates(ragged.as_bytes(), p()).is_err());
        let bad_conf = "1 P3 0 0 1.5 1 2 0.5";
        assert!(read_candidates(bad_conf.as_bytes(), p()).is_err());
        let short = "1 P3 0 0 0.5";
        assert!(read_candidates(short.as_bytes(), p()).is_err());
    }

    #[test]
    fn sigma_lookup() {
        assert_eq!(resolve_sigmas("coco17").unwrap(), SigmaPreset::Coco17);
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mine.json"), "[0.1, 0.2]").unwrap();
        std::env::set_var(SIGMA_PATH_ENV, dir.path());
        let preset = resolve_sigmas("mine").unwrap();
        assert_eq!(preset.table(2).unwrap().values(), &[0.1, 0.2]);
        assert!(resolve_sigmas("absent").is_err());
    }
}
