use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetManifest, ImageRecord, Split, Sublabel, SublabelTaxonomy};

#[derive(Serialize, Deserialize)]
struct Header {
    name: String,
    sublabels: Vec<Sublabel>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    uri: String,
    width: u32,
    height: u32,
    split: Split,
    #[serde(default)]
    sublabels: BTreeMap<String, u8>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_manifest(BufReader::new(file))
}

/// Parses the line-delimited manifest format. Line numbers in errors are
/// one-based.
pub fn parse_manifest(reader: impl BufRead) -> Result<DatasetManifest, DataError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (header, taxonomy) = loop {
        let Some((line, text)) = lines.next() else {
            return Err(DataError::Parse {
                line: 1,
                message: "missing taxonomy header".into(),
            });
        };
        let text = text.map_err(|e| parse_err(line, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let header: Header = serde_json::from_str(&text).map_err(|e| parse_err(line, e))?;
        let taxonomy = SublabelTaxonomy::new(header.sublabels.clone())?;
        break (header, taxonomy);
    };

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut missing_keys = 0usize;
    for (line, text) in lines {
        let text = text.map_err(|e| parse_err(line, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| parse_err(line, e))?;
        if raw.id.is_empty() {
            return Err(DataError::InvalidRecord {
                line,
                reason: "empty id".into(),
            });
        }
        if raw.width == 0 || raw.height == 0 {
            return Err(DataError::InvalidRecord {
                line,
                reason: format!("image {:?} has zero area", raw.id),
            });
        }
        for (key, &value) in &raw.sublabels {
            if !taxonomy.contains(key) {
                return Err(DataError::UnknownSublabel {
                    sublabel: key.clone(),
                    line: Some(line),
                });
            }
            if value > 1 {
                return Err(DataError::InvalidRecord {
                    line,
                    reason: format!("sublabel {key:?} has value {value}, expected 0 or 1"),
                });
            }
        }
        if !seen.insert(raw.id.clone()) {
            return Err(DataError::DuplicateId { line, id: raw.id });
        }
        let mut sublabels = raw.sublabels;
        for s in taxonomy.sublabels() {
            if !sublabels.contains_key(&s.id) {
                sublabels.insert(s.id.clone(), 0);
                missing_keys += 1;
            }
        }
        records.push(ImageRecord {
            id: raw.id,
            uri: raw.uri,
            width: raw.width,
            height: raw.height,
            split: raw.split,
            sublabels,
        });
    }
    if missing_keys > 0 {
        log::warn!(
            "manifest {:?}: {missing_keys} missing sublabel entries treated as 0",
            header.name
        );
    }
    Ok(DatasetManifest {
        name: header.name,
        taxonomy,
        records,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    write_manifest(manifest, &mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

pub fn write_manifest(manifest: &DatasetManifest, mut out: impl Write) -> std::io::Result<()> {
    let header = Header {
        name: manifest.name.clone(),
        sublabels: manifest.taxonomy.sublabels().to_vec(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for record in &manifest.records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> DataError {
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}
