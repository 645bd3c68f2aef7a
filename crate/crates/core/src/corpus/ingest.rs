//! CSV readers and writers for the corpus file formats.
//!
//! All files are UTF-8, comma-delimited, RFC-4180 quoted:
//! - `tasks.csv`: `id,text,occupation_code` (occupation_code may be blank)
//! - `votes.csv`: `task_id,v1,v2,v3,v4,v5`
//! - `occupations.csv`: `code,title,industry_codes[,weight]` with
//!   `;`-separated industry codes
//! - `industries.csv`: `code,title`

use std::collections::BTreeSet;
use std::path::Path;

use super::{
    AnnotatedExample, ClassLabel, CorpusError, IndustryMap, OccupationInfo, OccupationMap, Origin,
    Source, TaskStatement, VoteRecord,
};

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> CorpusError {
    CorpusError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CorpusError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    io_err(path, io)
                } else {
                    unreachable!()
                }
            }
            _ => csv_err(path, e),
        })
}

fn column_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &Path,
) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CorpusError::MissingColumn(name.to_string(), path.display().to_string()))
}

/// Reads `tasks.csv`, tagging every statement with `source`. Row order is
/// preserved; text is whitespace-trimmed.
pub fn read_tasks(path: &Path, source: Source) -> Result<Vec<TaskStatement>, CorpusError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let id_col = column_index(&headers, "id", path)?;
    let text_col = column_index(&headers, "text", path)?;
    let occ_col = column_index(&headers, "occupation_code", path)?;

    let mut seen = BTreeSet::new();
    let mut tasks = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::BadRow {
                row,
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { id, row });
        }
        let text = record.get(text_col).unwrap_or("").trim().to_string();
        if text.is_empty() {
            return Err(CorpusError::EmptyText { id, row });
        }
        let occupation = record.get(occ_col).unwrap_or("").trim();
        tasks.push(TaskStatement {
            id,
            text,
            source,
            occupation_code: if occupation.is_empty() {
                None
            } else {
                Some(occupation.to_string())
            },
        });
    }
    Ok(tasks)
}

/// Reads `votes.csv`. Votes accept `S`/`C`/`N` or full class names.
pub fn read_votes(path: &Path) -> Result<Vec<VoteRecord>, CorpusError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let task_col = column_index(&headers, "task_id", path)?;
    let vote_cols: Vec<usize> = (1..=5)
        .map(|i| column_index(&headers, &format!("v{i}"), path))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let task_id = record.get(task_col).unwrap_or("").trim().to_string();
        if task_id.is_empty() {
            return Err(CorpusError::BadRow {
                row,
                message: "empty task_id".into(),
            });
        }
        let mut votes = [ClassLabel::Substitution; 5];
        for (slot, &col) in votes.iter_mut().zip(&vote_cols) {
            let raw = record.get(col).unwrap_or("");
            *slot = ClassLabel::parse(raw).ok_or_else(|| CorpusError::BadRow {
                row,
                message: format!("invalid vote `{raw}`"),
            })?;
        }
        records.push(VoteRecord { task_id, votes });
    }
    Ok(records)
}

/// Reads `occupations.csv`. The `weight` column is optional.
pub fn read_occupations(path: &Path) -> Result<OccupationMap, CorpusError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let code_col = column_index(&headers, "code", path)?;
    let title_col = column_index(&headers, "title", path)?;
    let ind_col = column_index(&headers, "industry_codes", path)?;
    let weight_col = headers.iter().position(|h| h.trim() == "weight");

    let mut map = OccupationMap::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let code = record.get(code_col).unwrap_or("").trim().to_string();
        if code.is_empty() {
            return Err(CorpusError::BadRow {
                row,
                message: "empty occupation code".into(),
            });
        }
        if map.contains_key(&code) {
            return Err(CorpusError::DuplicateId { id: code, row });
        }
        let industry_codes: Vec<String> = record
            .get(ind_col)
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let weight = match weight_col.and_then(|c| record.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(raw.parse::<f64>().map_err(|_| CorpusError::BadRow {
                row,
                message: format!("invalid weight `{raw}`"),
            })?),
        };
        map.insert(
            code,
            OccupationInfo {
                title: record.get(title_col).unwrap_or("").trim().to_string(),
                industry_codes,
                weight,
            },
        );
    }
    Ok(map)
}

/// Reads `industries.csv`.
pub fn read_industries(path: &Path) -> Result<IndustryMap, CorpusError> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let code_col = column_index(&headers, "code", path)?;
    let title_col = column_index(&headers, "title", path)?;

    let mut map = IndustryMap::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let code = record.get(code_col).unwrap_or("").trim().to_string();
        if code.is_empty() {
            return Err(CorpusError::BadRow {
                row,
                message: "empty industry code".into(),
            });
        }
        if map.contains_key(&code) {
            return Err(CorpusError::DuplicateId { id: code, row });
        }
        map.insert(code, record.get(title_col).unwrap_or("").trim().to_string());
    }
    Ok(map)
}

/// Writes statements back out in `tasks.csv` schema plus a `source` column.
pub fn write_tasks_csv(path: &Path, tasks: &[TaskStatement]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record(["id", "text", "source", "occupation_code"])
        .map_err(|e| csv_err(path, e))?;
    for task in tasks {
        wtr.write_record([
            task.id.as_str(),
            task.text.as_str(),
            task.source.as_str(),
            task.occupation_code.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

/// Writes labeled examples as `augmented.csv`
/// (`id,text,label,origin,parent_id`).
pub fn write_annotated_csv(path: &Path, examples: &[AnnotatedExample]) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record(["id", "text", "label", "origin", "parent_id"])
        .map_err(|e| csv_err(path, e))?;
    for ex in examples {
        wtr.write_record([
            ex.task.id.as_str(),
            ex.task.text.as_str(),
            ex.label.as_str(),
            ex.origin.as_str(),
            ex.parent_id.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

/// Reads a file written by [`write_annotated_csv`].
pub fn read_annotated_csv(
    path: &Path,
    tasks: &[TaskStatement],
) -> Result<Vec<AnnotatedExample>, CorpusError> {
    let by_id: std::collections::BTreeMap<&str, &TaskStatement> =
        tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let id_col = column_index(&headers, "id", path)?;
    let text_col = column_index(&headers, "text", path)?;
    let label_col = column_index(&headers, "label", path)?;
    let origin_col = column_index(&headers, "origin", path)?;
    let parent_col = column_index(&headers, "parent_id", path)?;

    let mut examples = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        let label_raw = record.get(label_col).unwrap_or("");
        let label = ClassLabel::parse(label_raw).ok_or_else(|| CorpusError::BadRow {
            row,
            message: format!("invalid label `{label_raw}`"),
        })?;
        let origin_raw = record.get(origin_col).unwrap_or("");
        let origin = Origin::parse(origin_raw).ok_or_else(|| CorpusError::BadRow {
            row,
            message: format!("invalid origin `{origin_raw}`"),
        })?;
        let parent = record.get(parent_col).unwrap_or("").trim();
        let parent_id = if parent.is_empty() {
            None
        } else {
            Some(parent.to_string())
        };
        // Provenance (source, occupation) flows from the original statement
        // when one exists: augmented rows inherit from their parent.
        let lookup_id = parent_id.as_deref().unwrap_or(id.as_str());
        let (source, occupation_code) = match by_id.get(lookup_id) {
            Some(task) => (task.source, task.occupation_code.clone()),
            None => (Source::Synthetic, None),
        };
        examples.push(AnnotatedExample {
            task: TaskStatement {
                id,
                text: record.get(text_col).unwrap_or("").trim().to_string(),
                source,
                occupation_code,
            },
            label,
            origin,
            parent_id,
        });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn three_row_csv_passes_through_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "tasks.csv",
            "id,text,occupation_code\nT1,  Operate machinery ,O1\nT2,File reports,\nT3,Inspect welds,O2\n",
        );
        let tasks = read_tasks(&path, Source::Onet).unwrap();
        assert_eq!(tasks.len(), 3);
        assert_eq!(tasks[0].id, "T1");
        assert_eq!(tasks[0].text, "Operate machinery");
        assert_eq!(tasks[1].occupation_code, None);
        assert_eq!(tasks[2].occupation_code.as_deref(), Some("O2"));
    }

    #[test]
    fn duplicate_id_names_offender() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "tasks.csv",
            "id,text,occupation_code\nT1,a task,\nT1,another,\n",
        );
        match read_tasks(&path, Source::Onet) {
            Err(CorpusError::DuplicateId { id, row }) => {
                assert_eq!(id, "T1");
                assert_eq!(row, 2);
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "tasks.csv", "id,text,occupation_code\nT1,   ,\n");
        assert!(matches!(
            read_tasks(&path, Source::Onet),
            Err(CorpusError::EmptyText { .. })
        ));
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "tasks.csv", "id,body\nT1,x\n");
        match read_tasks(&path, Source::Onet) {
            Err(CorpusError::MissingColumn(col, _)) => assert_eq!(col, "text"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn onet_scale_fixture_roundtrips() {
        // 5,060 rows, the O*NET sample size.
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("id,text,occupation_code\n");
        for i in 0..5060 {
            body.push_str(&format!("T{i},task statement number {i},O{}\n", i % 7));
        }
        let path = write_file(&dir, "tasks.csv", &body);
        let tasks = read_tasks(&path, Source::Onet).unwrap();
        assert_eq!(tasks.len(), 5060);
        assert!(tasks.iter().all(|t| t.source == Source::Onet));
    }

    #[test]
    fn votes_parse_both_spellings() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "votes.csv",
            "task_id,v1,v2,v3,v4,v5\nT1,S,s,Substitution,C,N\n",
        );
        let votes = read_votes(&path).unwrap();
        assert_eq!(votes.len(), 1);
        assert_eq!(votes[0].votes[2], ClassLabel::Substitution);
    }

    #[test]
    fn occupations_with_multiple_industries() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "occupations.csv",
            "code,title,industry_codes\nO1,Welder,I1;I2\nO2,Clerk,I2\n",
        );
        let map = read_occupations(&path).unwrap();
        assert_eq!(map["O1"].industry_codes, vec!["I1", "I2"]);
        assert_eq!(map["O2"].title, "Clerk");
    }

    #[test]
    fn optional_weight_column_is_parsed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "occupations.csv",
            "code,title,industry_codes,weight\nO1,Welder,I1,2.5\nO2,Clerk,I2,\n",
        );
        let map = read_occupations(&path).unwrap();
        assert_eq!(map["O1"].weight, Some(2.5));
        assert_eq!(map["O2"].weight, None);
    }

    #[test]
    fn quoted_fields_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.csv");
        let tasks = vec![TaskStatement {
            id: "T1".into(),
            text: "Weld pipes, beams, and \"special\" joints".into(),
            source: Source::Esco,
            occupation_code: None,
        }];
        write_tasks_csv(&path, &tasks).unwrap();
        let back = read_tasks(&path, Source::Esco).unwrap();
        assert_eq!(back[0].text, tasks[0].text);
    }
}
