use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use super::{CorpusError, GradeGroup, Result, Split, UtteranceRecord};

pub const MANIFEST_HEADER: [&str; 5] =
    ["utterance_id", "speaker_id", "grade_group", "split", "path"];

/// Loads a corpus manifest.
///
/// Paths are returned exactly as written; relative paths are interpreted by
/// callers against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(file)
}

fn parse_manifest<R: std::io::Read>(reader: R) -> Result<Vec<UtteranceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let csv_err = |e: csv::Error| CorpusError::ParseError {
        line: e.position().map(|p| p.line()).unwrap_or(1),
        detail: e.to_string(),
    };

    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(CorpusError::ParseError {
            line: 1,
            detail: format!(
                "expected header `{}`, found `{}`",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let utterance_id = field(0).to_string();
        if utterance_id.is_empty() {
            return Err(CorpusError::ParseError {
                line,
                detail: "empty utterance_id".into(),
            });
        }
        let speaker_id = field(1).to_string();
        if speaker_id.is_empty() {
            return Err(CorpusError::ParseError {
                line,
                detail: "empty speaker_id".into(),
            });
        }
        let grade_group: GradeGroup = field(2)
            .parse()
            .map_err(|detail| CorpusError::ParseError { line, detail })?;
        let split = match field(3) {
            "ENROLL" => Split::Enroll,
            "TEST" => Split::Test,
            other => {
                return Err(CorpusError::UnknownSplit {
                    line,
                    value: other.to_string(),
                })
            }
        };
        if !seen.insert(utterance_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: utterance_id,
            });
        }
        records.push(UtteranceRecord {
            utterance_id,
            speaker_id,
            grade_group,
            split,
            path: PathBuf::from(field(4)),
        });
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| CorpusError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut wtr = csv::Writer::from_path(path).map_err(to_err)?;
    wtr.write_record(MANIFEST_HEADER).map_err(to_err)?;
    for r in records {
        wtr.write_record([
            r.utterance_id.as_str(),
            r.speaker_id.as_str(),
            r.grade_group.as_str(),
            r.split.as_str(),
            &r.path.to_string_lossy(),
        ])
        .map_err(to_err)?;
    }
    wtr.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
