//! `pref-embed/1` JSON Lines files and read-only CSV import.
//!
//! ```text
//! {"format":"pref-embed/1","d":3}
//! {"behavior":"honesty","label":"+","embedding":[0.1,-2.5,3.0]}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BehaviorDataset, Label, LabeledEmbedding};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "pref-embed/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    d: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record<'a> {
    behavior: std::borrow::Cow<'a, str>,
    label: Label,
    embedding: std::borrow::Cow<'a, [f64]>,
}

pub fn write_dataset<W: Write>(dataset: &BehaviorDataset, mut w: W) -> Result<()> {
    let header = Header { format: FORMAT_TAG.into(), d: dataset.dim() };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for b in dataset.behaviors() {
        for (x, label) in b.iter() {
            let rec = Record { behavior: b.id().into(), label, embedding: x.into() };
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &BehaviorDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn read_dataset<R: Read>(r: R) -> Result<BehaviorDataset> {
    let mut lines = BufReader::new(r).lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (line_no, first) = match lines.next() {
        None => return Err(Error::EmptyDataset),
        Some((n, l)) => (n, l?),
    };
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::Parse { line: line_no, message: format!("bad header: {e}") })?;
    if header.format != FORMAT_TAG {
        return Err(Error::Parse { line: line_no, message: format!("unsupported format {:?}", header.format) });
    }
    let d = header.d;
    let mut samples = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse { line: n, message: e.to_string() })?;
        if rec.embedding.len() != d {
            return Err(Error::Schema(format!("line {n}: embedding has {} coordinates, header says {d}", rec.embedding.len())));
        }
        samples.push(LabeledEmbedding {
            vector: rec.embedding.into_owned(),
            label: rec.label,
            behavior_id: rec.behavior.into_owned(),
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    BehaviorDataset::from_samples(d, samples)
}

/// Loads a dataset; files ending in `.csv` go through [`load_csv`].
pub fn load_dataset(path: impl AsRef<Path>) -> Result<BehaviorDataset> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return load_csv(path);
    }
    read_dataset(File::open(path)?)
}

/// Reads `behavior,label,v1..vd` rows. A first row starting with `behavior` is a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<BehaviorDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut d: Option<usize> = None;
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(csv_err)?;
        if line == 1 && rec.get(0) == Some("behavior") {
            continue;
        }
        if rec.len() < 3 {
            return Err(Error::Parse { line, message: "expected behavior,label,v1..vd".into() });
        }
        let label = match &rec[1] {
            "+" => Label::Positive,
            "-" => Label::Negative,
            other => return Err(Error::Parse { line, message: format!("label must be + or -, got {other:?}") }),
        };
        let vector = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let expected = *d.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(Error::Schema(format!("line {line}: {} coordinates, expected {expected}", vector.len())));
        }
        samples.push(LabeledEmbedding { vector, label, behavior_id: rec[0].to_string() });
    }
    match d {
        None => Err(Error::EmptyDataset),
        Some(d) => BehaviorDataset::from_samples(d, samples),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, make_spec, CovDescriptor, Direction};

    #[test]
    fn roundtrip_is_lossless() {
        let s = make_spec(5, 0.2, 0.7, CovDescriptor::Isotropic(3.3), CovDescriptor::Isotropic(0.01), &Direction::Seeded(4))
            .unwrap();
        let ds = generate_dataset(&[("p q".into(), s.clone()), ("r\"s".into(), s)], 8, 17).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn schema_and_parse_errors() {
        let text = "{\"format\":\"pref-embed/1\",\"d\":2}\n\
                    {\"behavior\":\"a\",\"label\":\"+\",\"embedding\":[1,2]}\n\
                    {\"behavior\":\"a\",\"label\":\"-\",\"embedding\":[1]}\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Schema(m)) if m.contains("line 3")));
        let text = "{\"format\":\"pref-embed/1\",\"d\":2}\n{\"behavior\":\"a\",\"label\":\"?\",\"embedding\":[1,2]}\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "{\"format\":\"other\",\"d\":2}\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_dataset("".as_bytes()), Err(Error::EmptyDataset)));
        assert!(matches!(read_dataset("{\"format\":\"pref-embed/1\",\"d\":2}\n".as_bytes()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "behavior,label,v1,v2\na,+,1.5,0\na,-,-1.5,0\n").unwrap();
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.behaviors()[0].mean_difference(), vec![3.0, 0.0]);
        std::fs::write(&p, "a,+,1.5,0\na,-,-1.5\n").unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Schema(_))));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::EmptyDataset)));
    }
}
