//! Plain-text list files: one entry (or two columns) per line, `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Parses a one-column list. Blank lines and `#` comments are skipped;
/// surrounding whitespace is trimmed but inner spaces are kept (phrases).
pub fn parse_one_column(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(strip_comment)
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect()
}

/// Parses a two-column whitespace-separated table. Lines with a single
/// column are rejected.
pub fn parse_two_column(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) => {
                out.insert(a.to_string(), b.to_string());
            }
            _ => {
                return Err(Error::Parse {
                    what: origin.to_string(),
                    line: lineno + 1,
                    message: "expected exactly two columns".into(),
                })
            }
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn read_one_column(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_one_column(&text))
}

pub fn read_two_column(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_two_column(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let set = parse_one_column("# header\nsocial media  \n\n  tear   gas # inline\n");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["social media", "tear gas"]);
    }

    #[test]
    fn two_columns_reject_extra() {
        assert!(parse_two_column("colour color\n", "t").is_ok());
        assert!(parse_two_column("colour\n", "t").is_err());
        assert!(parse_two_column("a b c\n", "t").is_err());
    }
}
