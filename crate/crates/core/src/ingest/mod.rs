//! Dataset ingestion: QuickDraw simplified ndjson, the internal versioned
//! JSON format, and the synthetic shape generator.

mod synth;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{Point, VectorSketch};

pub use synth::{synth_dataset, synth_generate, synth_generate_with, SynthCategory};

pub const DATASET_FORMAT: &str = "r2cnn-dataset";
pub const SKETCH_FORMAT: &str = "r2cnn-sketch";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSketch {
    pub sketch: VectorSketch,
    pub label: usize,
    pub category_name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }

    /// Deterministic 80/10/10 partition of a category file by line index.
    fn owns_line(&self, index: usize) -> bool {
        match index % 10 {
            8 => *self == Split::Valid,
            9 => *self == Split::Test,
            _ => *self == Split::Train,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub items: Vec<LabeledSketch>,
    pub split: Split,
}

impl Dataset {
    pub fn new(categories: Vec<String>, items: Vec<LabeledSketch>, split: Split) -> Result<Self> {
        if let Some(bad) = items.iter().find(|it| it.label >= categories.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad.label,
                classes: categories.len(),
            });
        }
        Ok(Self {
            categories,
            items,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }
}

#[derive(Deserialize)]
struct QuickDrawLine {
    #[serde(alias = "category")]
    word: String,
    drawing: Vec<Vec<Vec<f64>>>,
}

/// Parse one line of QuickDraw simplified ndjson. The label is left at 0;
/// callers that know the category list assign it.
pub fn parse_quickdraw_line(text: &str) -> Result<LabeledSketch> {
    let line: QuickDrawLine =
        serde_json::from_str(text.trim()).map_err(|e| Error::MalformedLine(e.to_string()))?;
    let mut points = Vec::new();
    for (stroke, arrays) in line.drawing.iter().enumerate() {
        let [xs, ys] = arrays.as_slice() else {
            return Err(Error::MalformedLine(format!(
                "stroke {stroke} has {} coordinate arrays, expected 2",
                arrays.len()
            )));
        };
        if xs.len() != ys.len() {
            return Err(Error::RaggedStroke {
                stroke,
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        let k = xs.len();
        points.extend(
            xs.iter()
                .zip(ys)
                .enumerate()
                .map(|(i, (&x, &y))| Point::new(x, y, i + 1 == k)),
        );
    }
    Ok(LabeledSketch {
        sketch: VectorSketch::new(points)?,
        label: 0,
        category_name: line.word,
    })
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn check_header(text: &str, format: &'static str, path: &Path) -> Result<()> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if header.format != format {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected format {format:?}, found {:?}", header.format),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            kind: format,
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    label: usize,
    points: VectorSketch,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    split: Split,
    categories: Vec<String>,
    items: Vec<ItemRecord>,
}

pub fn dataset_to_json(dataset: &Dataset) -> String {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: FORMAT_VERSION,
        split: dataset.split,
        categories: dataset.categories.clone(),
        items: dataset
            .items
            .iter()
            .map(|it| ItemRecord {
                label: it.label,
                points: it.sketch.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("dataset serializes")
}

pub fn dataset_from_json(text: &str, path: &Path) -> Result<Dataset> {
    check_header(text, DATASET_FORMAT, path)?;
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let items = file
        .items
        .into_iter()
        .map(|r| {
            let category_name = file.categories.get(r.label).cloned().unwrap_or_default();
            LabeledSketch {
                sketch: r.points,
                label: r.label,
                category_name,
            }
        })
        .collect();
    Dataset::new(file.categories, items, file.split)
}

pub fn save_internal(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_json(dataset)).map_err(|e| Error::io(path, e))
}

pub fn load_internal(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_json(&text, path)
}

#[derive(Serialize, Deserialize)]
struct SketchFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    points: VectorSketch,
}

/// Single-sketch file in the internal format.
pub fn save_sketch(sketch: &VectorSketch, category: Option<&str>, path: &Path) -> Result<()> {
    let file = SketchFile {
        format: SKETCH_FORMAT.into(),
        version: FORMAT_VERSION,
        category: category.map(str::to_owned),
        points: sketch.clone(),
    };
    let text = serde_json::to_string(&file).expect("sketch serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read one sketch: `.ndjson` files are QuickDraw (first line), anything
/// else is the internal single-sketch format.
pub fn load_sketch(path: &Path) -> Result<(VectorSketch, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "ndjson") {
        let line = text.lines().find(|l| !l.trim().is_empty()).ok_or(Error::EmptySketch)?;
        let parsed = parse_quickdraw_line(line)?;
        return Ok((parsed.sketch, Some(parsed.category_name)));
    }
    check_header(&text, SKETCH_FORMAT, path)?;
    let file: SketchFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((file.points, file.category))
}

fn parse_category_file(path: &Path, split: Split, cap: usize) -> Result<Vec<LabeledSketch>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        if items.len() == cap {
            break;
        }
        if split.owns_line(index) {
            items.push(parse_quickdraw_line(line)?);
        }
    }
    Ok(items)
}

/// Load a dataset from a directory of `*.ndjson` files (one category per
/// file, categories sorted by file name) or from an internal-format file.
///
/// Directory lines are partitioned per file by index: `i % 10 == 8` goes to
/// `valid`, `9` to `test`, the rest to `train`.
pub fn load_dataset(path: &Path, split: Split, max_items_per_category: usize) -> Result<Dataset> {
    if max_items_per_category == 0 {
        return Err(Error::EmptyDataset);
    }
    if path.is_file() {
        let mut dataset = load_internal(path)?;
        if dataset.split != split {
            return Err(Error::SplitMismatch {
                found: dataset.split.to_string(),
                requested: split.to_string(),
            });
        }
        let mut seen = vec![0usize; dataset.num_classes()];
        dataset.items.retain(|it| {
            seen[it.label] += 1;
            seen[it.label] <= max_items_per_category
        });
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        return Ok(dataset);
    }

    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ndjson"))
        .collect();
    files.sort();

    #[cfg(feature = "parallel")]
    let parsed: Vec<Result<Vec<LabeledSketch>>> = {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|f| parse_category_file(f, split, max_items_per_category))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parsed: Vec<Result<Vec<LabeledSketch>>> = files
        .iter()
        .map(|f| parse_category_file(f, split, max_items_per_category))
        .collect();

    let mut categories = Vec::with_capacity(files.len());
    let mut items = Vec::new();
    for (label, (file, result)) in files.iter().zip(parsed).enumerate() {
        let name = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for mut item in result? {
            item.label = label;
            item.category_name = name.clone();
            items.push(item);
        }
        categories.push(name);
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(categories, items, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triples(s: &VectorSketch) -> Vec<(f64, f64, u8)> {
        s.points().iter().map(|p| (p.x, p.y, p.state())).collect()
    }

    #[test]
    fn quickdraw_single_stroke() {
        let it = parse_quickdraw_line(r#"{"word":"cat","drawing":[[[0,10],[0,0]]]}"#).unwrap();
        assert_eq!(triples(&it.sketch), vec![(0., 0., 0), (10., 0., 1)]);
        assert_eq!(it.category_name, "cat");
    }

    #[test]
    fn quickdraw_dot_stroke_kept() {
        let it = parse_quickdraw_line(r#"{"word":"x","drawing":[[[0,1],[0,0]],[[5],[5]]]}"#).unwrap();
        assert_eq!(triples(&it.sketch), vec![(0., 0., 0), (1., 0., 1), (5., 5., 1)]);
    }

    #[test]
    fn quickdraw_errors() {
        assert!(matches!(parse_quickdraw_line(r#"{"word":"x"}"#), Err(Error::MalformedLine(_))));
        assert!(matches!(parse_quickdraw_line("not json"), Err(Error::MalformedLine(_))));
        assert!(matches!(
            parse_quickdraw_line(r#"{"word":"x","drawing":[[[0,1,2],[0,0]]]}"#),
            Err(Error::RaggedStroke { stroke: 0, xs: 3, ys: 2 })
        ));
        assert!(matches!(
            parse_quickdraw_line(r#"{"word":"x","drawing":[[[0,1]]]}"#),
            Err(Error::MalformedLine(_))
        ));
    }

    #[test]
    fn quickdraw_accepts_category_key() {
        let it = parse_quickdraw_line(r#"{"category":"dog","drawing":[[[1],[2]]]}"#).unwrap();
        assert_eq!(it.category_name, "dog");
    }

    #[test]
    fn stroke_states_per_stroke() {
        let it = parse_quickdraw_line(
            r#"{"word":"w","drawing":[[[0,1,2,3],[0,1,0,1]],[[9,8,7],[1,2,3]]]}"#,
        )
        .unwrap();
        let states: Vec<u8> = it.sketch.points().iter().map(|p| p.state()).collect();
        assert_eq!(states, vec![0, 0, 0, 1, 0, 0, 1]);
        assert_eq!(it.sketch.segments().len(), 5);
    }

    fn write_category_dir(dir: &Path) {
        for (name, n) in [("b_cat", 3), ("a_dog", 3)] {
            let lines: Vec<String> = (0..n)
                .map(|i| format!(r#"{{"word":"{name}","drawing":[[[{i},{}],[0,0]]]}}"#, i + 5))
                .collect();
            fs::write(dir.join(format!("{name}.ndjson")), lines.join("\n")).unwrap();
        }
    }

    #[test]
    fn directory_load_caps_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        write_category_dir(dir.path());
        let ds = load_dataset(dir.path(), Split::Train, 2).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.categories, vec!["a_dog", "b_cat"]);
        assert_eq!(ds.items.iter().map(|i| i.label).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        assert_eq!(load_dataset(dir.path(), Split::Train, 2).unwrap(), ds);
        assert!(matches!(load_dataset(dir.path(), Split::Train, 0), Err(Error::EmptyDataset)));
        assert!(matches!(load_dataset(dir.path(), Split::Test, 5), Err(Error::EmptyDataset)));
    }

    #[test]
    fn internal_round_trip_is_bitwise() {
        let ds = synth_dataset(&SynthCategory::ALL, 17, 17, Split::Valid);
        assert!(ds.len() > 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_internal(&ds, &path).unwrap();
        let back = load_internal(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.items.iter().zip(&ds.items) {
            for (p, q) in a.sketch.points().iter().zip(b.sketch.points()) {
                assert_eq!(p.x.to_bits(), q.x.to_bits());
                assert_eq!(p.y.to_bits(), q.y.to_bits());
            }
        }
        assert!(matches!(load_dataset(&path, Split::Train, 10), Err(Error::SplitMismatch { .. })));
        assert_eq!(load_dataset(&path, Split::Valid, 1).unwrap().len(), 6);
    }

    #[test]
    fn wrong_version_rejected() {
        let ds = synth_dataset(&SynthCategory::ALL, 1, 1, Split::Train);
        let text = dataset_to_json(&ds).replacen("\"version\":1", "\"version\":2", 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_internal(&path), Err(Error::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let ds = synth_dataset(&SynthCategory::ALL, 1, 1, Split::Train);
        let err = save_internal(&ds, Path::new("/nonexistent-dir/sub/d.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn sketch_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_generate(SynthCategory::Zigzag, 3).sketch;
        let path = dir.path().join("s.json");
        save_sketch(&s, Some("zigzag"), &path).unwrap();
        assert_eq!(load_sketch(&path).unwrap(), (s, Some("zigzag".into())));

        let path = dir.path().join("q.ndjson");
        fs::write(&path, r#"{"word":"cat","drawing":[[[0,10],[0,0]]]}"#).unwrap();
        let (s, cat) = load_sketch(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(cat.as_deref(), Some("cat"));
    }
}
