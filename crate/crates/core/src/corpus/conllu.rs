use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{CorpusError, LabeledInstance, ParseEdge};

pub fn load_conllu(path: &Path) -> Result<BTreeMap<String, Vec<ParseEdge>>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_conllu(&text)
}

/// Reads CoNLL-U into `sent_id → edges`. Sentences without a `# sent_id`
/// comment are keyed by their 0-based position in the file.
///
/// Every token row with `HEAD > 0` yields `(HEAD − 1, ID − 1, DEPREL)`.
/// Multiword ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<BTreeMap<String, Vec<ParseEdge>>, CorpusError> {
    let mut out = BTreeMap::new();
    let mut sent_id: Option<String> = None;
    let mut edges: Vec<ParseEdge> = Vec::new();
    let mut in_sentence = false;
    let mut ordinal = 0usize;

    let mut flush = |sent_id: &mut Option<String>, edges: &mut Vec<ParseEdge>, ordinal: &mut usize| {
        let key = sent_id.take().unwrap_or_else(|| ordinal.to_string());
        out.insert(key, std::mem::take(edges));
        *ordinal += 1;
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let lineno = i + 1;
        if line.trim().is_empty() {
            if in_sentence {
                flush(&mut sent_id, &mut edges, &mut ordinal);
                in_sentence = false;
            }
            continue;
        }
        in_sentence = true;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "sent_id" {
                    sent_id = Some(value.trim().to_string());
                }
            }
            continue;
        }

        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Conllu {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| CorpusError::Conllu {
            line: lineno,
            message: format!("non-integer ID {:?}", cols[0]),
        })?;
        let head: usize = cols[6].parse().map_err(|_| CorpusError::Conllu {
            line: lineno,
            message: format!("non-integer HEAD {:?}", cols[6]),
        })?;
        if id == 0 {
            return Err(CorpusError::Conllu {
                line: lineno,
                message: "token ID must be ≥ 1".into(),
            });
        }
        if head > 0 {
            edges.push(ParseEdge {
                head: head - 1,
                dependent: id - 1,
                relation: cols[7].to_string(),
            });
        }
    }
    if in_sentence {
        flush(&mut sent_id, &mut edges, &mut ordinal);
    }
    Ok(out)
}

/// Sets each instance's edges from `parses[record index]`. Instances with
/// no matching sentence keep their current edges.
pub fn attach_parses(
    instances: &mut [LabeledInstance],
    parses: &BTreeMap<String, Vec<ParseEdge>>,
) -> Result<(), CorpusError> {
    for (i, inst) in instances.iter_mut().enumerate() {
        if let Some(edges) = parses.get(&i.to_string()) {
            inst.parse_edges = edges.clone();
            inst.validate(i)?;
        }
    }
    Ok(())
}
