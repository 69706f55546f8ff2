use std::collections::HashMap;
use std::io::Read;

use super::{DataError, Dataset, DatasetFormat, RawRating};

/// Decodes dataset text. Files from these families are ISO-8859-1 unless they
/// happen to be valid UTF-8 (newer redistributions), and Latin-1 maps every byte.
pub(crate) fn decode_text(bytes: &[u8], what: &str) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        Err(_) => {
            log::warn!("{what}: not valid UTF-8, decoding as ISO-8859-1");
            bytes.iter().map(|&b| b as char).collect()
        }
    }
}

pub(crate) fn read_all(mut source: impl Read, what: &str) -> Result<String, DataError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(|e| DataError::Io {
        path: what.to_string(),
        source: e,
    })?;
    Ok(decode_text(&bytes, what))
}

fn malformed(line: usize, reason: impl Into<String>) -> DataError {
    DataError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_number<T: std::str::FromStr>(field: &str, line: usize, name: &str) -> Result<T, DataError> {
    field
        .trim()
        .parse()
        .map_err(|_| malformed(line, format!("bad {name} {field:?}")))
}

/// Parses a ratings file in one of the supported layouts.
///
/// Duplicate (user, item) pairs keep the last occurrence; the number dropped is
/// reported through [`Dataset::ingest_summary`].
pub fn parse_ratings(source: impl Read, format: DatasetFormat) -> Result<Dataset, DataError> {
    let text = read_all(source, "ratings")?;
    let rows = match format {
        DatasetFormat::Ml100k => parse_delimited(&text, format, |l| l.split_whitespace().collect())?,
        DatasetFormat::Ml1m => parse_delimited(&text, format, |l| l.split("::").collect())?,
        DatasetFormat::Bookcrossing => parse_bookcrossing(&text, format)?,
    };
    let (rows, duplicates) = dedup_keep_last(rows);
    if duplicates > 0 {
        log::info!("dropped {duplicates} duplicate (user, item) rows");
    }
    Dataset::from_raw(rows, format, duplicates)
}

fn parse_delimited(
    text: &str,
    format: DatasetFormat,
    split: impl Fn(&str) -> Vec<&str>,
) -> Result<Vec<(usize, RawRating)>, DataError> {
    let scale = format.rating_scale();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields = split(line);
        if fields.len() != 4 {
            return Err(malformed(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let user = fields[0].trim();
        let item = fields[1].trim();
        if user.is_empty() || item.is_empty() {
            return Err(malformed(line_no, "empty id"));
        }
        let rating: f64 = parse_number(fields[2], line_no, "rating")?;
        if !scale.contains(rating) {
            return Err(malformed(line_no, format!("rating {rating} outside [{}, {}]", scale.min, scale.max)));
        }
        let timestamp: i64 = parse_number(fields[3], line_no, "timestamp")?;
        rows.push((
            line_no,
            RawRating {
                user: user.to_string(),
                item: item.to_string(),
                rating,
                timestamp: Some(timestamp),
            },
        ));
    }
    Ok(rows)
}

fn parse_bookcrossing(text: &str, format: DatasetFormat) -> Result<Vec<(usize, RawRating)>, DataError> {
    let scale = format.rating_scale();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(malformed(line_no, format!("expected 3 fields, found {}", record.len())));
        }
        let user = record[0].trim();
        let item = record[1].trim();
        if user.is_empty() || item.is_empty() {
            return Err(malformed(line_no, "empty id"));
        }
        let rating: f64 = parse_number(&record[2], line_no, "rating")?;
        if !scale.contains(rating) {
            return Err(malformed(line_no, format!("rating {rating} outside [{}, {}]", scale.min, scale.max)));
        }
        rows.push((
            line_no,
            RawRating {
                user: user.to_string(),
                item: item.to_string(),
                rating,
                timestamp: None,
            },
        ));
    }
    Ok(rows)
}

fn dedup_keep_last(rows: Vec<(usize, RawRating)>) -> (Vec<RawRating>, usize) {
    let mut position: HashMap<(String, String), usize> = HashMap::with_capacity(rows.len());
    let mut out: Vec<RawRating> = Vec::with_capacity(rows.len());
    let mut duplicates = 0;
    for (_, row) in rows {
        let key = (row.user.clone(), row.item.clone());
        match position.get(&key) {
            Some(&at) => {
                out[at] = row;
                duplicates += 1;
            }
            None => {
                position.insert(key, out.len());
                out.push(row);
            }
        }
    }
    (out, duplicates)
}
