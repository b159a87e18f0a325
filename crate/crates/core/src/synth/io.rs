//! Dataset directory layout:
//!
//! ```text
//! index.csv      image,label_0,...,label_{L-1}
//! locations.csv  image,attribute,rank,y,x
//! bodies.csv     image,top,left,height,width
//! schema.txt     attribute schema (key = value)
//! images/        NNNNN.ppm
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, WpalError};
use crate::image::RgbImage;

use super::generate::{BodyBox, Dataset, PlantedLocation, SyntheticSample};
use super::schema::{AttributeKind, AttributeSchema};

pub const INDEX_FILE: &str = "index.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";
pub const BODIES_FILE: &str = "bodies.csv";
pub const SCHEMA_FILE: &str = "schema.txt";
pub const IMAGE_DIR: &str = "images";

pub fn image_name(index: usize) -> String {
    format!("{IMAGE_DIR}/{index:05}.ppm")
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| WpalError::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let images = dir.join(IMAGE_DIR);
    fs::create_dir_all(&images).map_err(|e| WpalError::io(&images, e))?;
    let l = dataset.schema.len();
    let mut index = String::from("image");
    for i in 0..l {
        write!(index, ",label_{i}").unwrap();
    }
    index.push('\n');
    let mut locations = String::from("image,attribute,rank,y,x\n");
    let mut bodies = String::from("image,top,left,height,width\n");
    for (i, s) in dataset.samples.iter().enumerate() {
        let name = image_name(i);
        write(dir.join(&name), s.image.encode())?;
        index.push_str(&name);
        for v in &s.labels {
            write!(index, ",{v}").unwrap();
        }
        index.push('\n');
        for p in &s.locations {
            writeln!(locations, "{name},{},{},{},{}", p.attribute, p.rank, p.y, p.x).unwrap();
        }
        let b = &s.body;
        writeln!(bodies, "{name},{},{},{},{}", b.top, b.left, b.height, b.width).unwrap();
    }
    write(dir.join(SCHEMA_FILE), dataset.schema.to_text())?;
    write(dir.join(INDEX_FILE), index)?;
    write(dir.join(LOCATIONS_FILE), locations)?;
    write(dir.join(BODIES_FILE), bodies)
}

struct CsvFile {
    path: PathBuf,
    text: String,
}

impl CsvFile {
    fn open(path: PathBuf) -> Result<Self> {
        let text = fs::read_to_string(&path).map_err(|e| WpalError::io(&path, e))?;
        Ok(CsvFile { path, text })
    }

    fn error(&self, line: usize, detail: impl Into<String>) -> WpalError {
        WpalError::Parse {
            path: self.path.clone(),
            line,
            detail: detail.into(),
        }
    }

    /// Checks the header and yields `(line number, fields)` of data rows.
    fn rows(&self, header: &str) -> Result<Vec<(usize, Vec<&str>)>> {
        let mut lines = self.text.lines();
        if lines.next().map(str::trim) != Some(header) {
            return Err(self.error(1, format!("expected header `{header}`")));
        }
        let n = header.split(',').count();
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n {
                return Err(self.error(i + 2, format!("expected {n} fields, got {}", fields.len())));
            }
            out.push((i + 2, fields));
        }
        Ok(out)
    }

    fn parse<T: std::str::FromStr>(&self, line: usize, field: &str, what: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        field
            .parse()
            .map_err(|e| self.error(line, format!("bad {what} `{field}`: {e}")))
    }
}

/// Reads a dataset written by [`write_dataset`], rejecting any structural
/// inconsistency with the offending line.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let schema = AttributeSchema::read(&dir.join(SCHEMA_FILE))?;
    let l = schema.len();
    let mut header = String::from("image");
    for i in 0..l {
        write!(header, ",label_{i}").unwrap();
    }

    let index = CsvFile::open(dir.join(INDEX_FILE))?;
    let mut names: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    for (line, f) in index.rows(&header)? {
        let name = f[0].to_string();
        if names.contains(&name) {
            return Err(index.error(line, format!("duplicate image `{name}`")));
        }
        let mut labels = Vec::with_capacity(l);
        for v in &f[1..] {
            let x: f64 = index.parse(line, v, "label")?;
            if x != 0.0 && x != 1.0 {
                return Err(index.error(line, format!("label `{v}` is not 0 or 1")));
            }
            labels.push(x);
        }
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| index.error(line, format!("cannot read image `{name}`: {e}")))?;
        let image = RgbImage::decode(&bytes).map_err(|e| index.error(line, format!("image `{name}`: {e}")))?;
        names.push(name);
        samples.push(SyntheticSample {
            image,
            labels,
            locations: Vec::new(),
            body: BodyBox {
                top: 0.0,
                left: 0.0,
                height: 0.0,
                width: 0.0,
            },
        });
    }
    if samples.is_empty() {
        return Err(index.error(1, "dataset has no samples"));
    }
    let lookup = |file: &CsvFile, line: usize, name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| file.error(line, format!("unknown image `{name}`")))
    };

    let locs = CsvFile::open(dir.join(LOCATIONS_FILE))?;
    for (line, f) in locs.rows("image,attribute,rank,y,x")? {
        let s = lookup(&locs, line, f[0])?;
        let attribute: usize = locs.parse(line, f[1], "attribute")?;
        if attribute >= l {
            return Err(locs.error(line, format!("attribute {attribute} out of range")));
        }
        let p = PlantedLocation {
            attribute,
            rank: locs.parse(line, f[2], "rank")?,
            y: locs.parse(line, f[3], "y")?,
            x: locs.parse(line, f[4], "x")?,
        };
        let img = &samples[s].image;
        if !(p.y >= 0.0 && p.y < img.height as f64 && p.x >= 0.0 && p.x < img.width as f64) {
            return Err(locs.error(line, "location outside its image"));
        }
        samples[s].locations.push(p);
    }

    let bodies = CsvFile::open(dir.join(BODIES_FILE))?;
    let mut seen = vec![false; samples.len()];
    for (line, f) in bodies.rows("image,top,left,height,width")? {
        let s = lookup(&bodies, line, f[0])?;
        samples[s].body = BodyBox {
            top: bodies.parse(line, f[1], "top")?,
            left: bodies.parse(line, f[2], "left")?,
            height: bodies.parse(line, f[3], "height")?,
            width: bodies.parse(line, f[4], "width")?,
        };
        seen[s] = true;
    }
    if let Some(i) = seen.iter().position(|&b| !b) {
        return Err(WpalError::Format(format!("{}: no body row for `{}`", BODIES_FILE, names[i])));
    }

    for (s, name) in samples.iter().zip(&names) {
        for (a, spec) in schema.attributes.iter().enumerate() {
            let n = s.locations_of(a).count();
            let expect = if s.labels[a] == 1.0 && spec.kind == AttributeKind::Localizable {
                spec.k
            } else {
                0
            };
            if n != expect {
                return Err(WpalError::Format(format!(
                    "{LOCATIONS_FILE}: `{name}` has {n} centres for attribute {a}, expected {expect}"
                )));
            }
        }
    }
    Ok(Dataset { schema, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, GenerateOptions};

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("wpal-synth-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    fn small() -> Dataset {
        let opts = GenerateOptions {
            count: 6,
            seed: 3,
            ..GenerateOptions::default()
        };
        generate(&AttributeSchema::default(), &opts).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = small();
        let dir = tmp("rt");
        write_dataset(&d, &dir).unwrap();
        assert_eq!(read_dataset(&dir).unwrap(), d);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_image_rejected_with_line() {
        let dir = tmp("missing");
        write_dataset(&small(), &dir).unwrap();
        fs::remove_file(dir.join(image_name(2))).unwrap();
        match read_dataset(&dir) {
            Err(WpalError::Parse { line, detail, .. }) => {
                assert_eq!(line, 4);
                assert!(detail.contains("00002.ppm"));
            }
            other => panic!("{other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn extra_label_column_rejected() {
        let dir = tmp("extra");
        write_dataset(&small(), &dir).unwrap();
        let p = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3].push_str(",1");
        fs::write(&p, lines.join("\n")).unwrap();
        match read_dataset(&dir) {
            Err(WpalError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_index_rejected() {
        let dir = tmp("noindex");
        write_dataset(&small(), &dir).unwrap();
        fs::remove_file(dir.join(INDEX_FILE)).unwrap();
        assert!(matches!(read_dataset(&dir), Err(WpalError::Io { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }
}
