use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, DialogueRecord, StrategyLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    /// Guesses from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

#[derive(Deserialize)]
struct RawRow {
    conversation_history: Option<String>,
    tutor_response: Option<String>,
    strategy: Option<String>,
    binary_label: Option<serde_json::Value>,
}

pub fn load_records(path: &Path, format: RecordFormat) -> Result<Vec<DialogueRecord>, CorpusError> {
    parse_records(File::open(path)?, format)
}

pub fn parse_records<R: Read>(reader: R, format: RecordFormat) -> Result<Vec<DialogueRecord>, CorpusError> {
    match format {
        RecordFormat::Jsonl => parse_jsonl(reader),
        RecordFormat::Csv => parse_csv(reader),
    }
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut out = Vec::new();
    for (row, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow { row, reason: e.to_string() })?;
        let history =
            raw.conversation_history.ok_or_else(|| CorpusError::MalformedRow { row, reason: "missing conversation_history".into() })?;
        let binary = match raw.binary_label {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(parse_binary(&v.to_string(), row)?),
        };
        out.push(build(row, history, raw.tutor_response.unwrap_or_default(), raw.strategy, binary)?);
    }
    Ok(out)
}

fn parse_csv<R: Read>(reader: R) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CorpusError::MalformedRow { row: 0, reason: e.to_string() })?.clone();
    // An empty file has no header row at all.
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let history_col = col("conversation_history").ok_or_else(|| CorpusError::MissingColumn("conversation_history".into()))?;
    let response_col = col("tutor_response").ok_or_else(|| CorpusError::MissingColumn("tutor_response".into()))?;
    let strategy_col = col("strategy");
    let binary_col = col("binary_label");

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CorpusError::MalformedRow { row, reason: e.to_string() })?;
        let field = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|v| !v.is_empty());
        let binary = field(binary_col).map(|v| parse_binary(v, row)).transpose()?;
        out.push(build(
            row,
            field(Some(history_col)).unwrap_or_default().to_string(),
            field(Some(response_col)).unwrap_or_default().to_string(),
            field(strategy_col).map(str::to_string),
            binary,
        )?);
    }
    Ok(out)
}

fn parse_binary(v: &str, row: usize) -> Result<u8, CorpusError> {
    match v.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(CorpusError::MalformedRow { row, reason: format!("binary_label must be 0 or 1, got {other}") }),
    }
}

fn build(
    row: usize,
    history: String,
    response: String,
    strategy: Option<String>,
    binary_label: Option<u8>,
) -> Result<DialogueRecord, CorpusError> {
    let strategy = match strategy {
        None => None,
        Some(s) => Some(s.parse::<StrategyLabel>().map_err(|_| CorpusError::UnknownLabel { row: Some(row), label: s })?),
    };
    DialogueRecord { conversation_history: history, tutor_response: response, strategy, binary_label }
        .finish()
        .map_err(|reason| CorpusError::MalformedRow { row, reason })
}

pub fn save_records(path: &Path, records: &[DialogueRecord], format: RecordFormat) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_records(&mut w, records, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(writer: W, records: &[DialogueRecord], format: RecordFormat) -> Result<(), CorpusError> {
    match format {
        RecordFormat::Jsonl => {
            let mut writer = writer;
            for r in records {
                serde_json::to_writer(&mut writer, r).map_err(std::io::Error::other)?;
                writer.write_all(b"\n")?;
            }
        }
        RecordFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            let csv_err = |e: csv::Error| std::io::Error::other(e);
            w.write_record(["conversation_history", "tutor_response", "strategy", "binary_label"]).map_err(csv_err)?;
            for r in records {
                let binary = r.binary_label.map(|b| b.to_string()).unwrap_or_default();
                w.write_record([
                    r.conversation_history.as_str(),
                    r.tutor_response.as_str(),
                    r.strategy.map(StrategyLabel::as_str).unwrap_or(""),
                    binary.as_str(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
