use std::fs;
use std::path::Path;
use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{tokenize, tokenize_with_offsets, CorpusError, LabeledInstance, ParseEdge, Polarity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Jsonl,
    SemevalXml,
}

impl DatasetFormat {
    /// Guesses from the file extension; anything but `.xml` is jsonl.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xml") => DatasetFormat::SemevalXml,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "semeval_xml" | "semeval-xml" | "xml" => Ok(DatasetFormat::SemevalXml),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<LabeledInstance>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text),
        DatasetFormat::SemevalXml => parse_semeval_xml(&text),
    }
}

/// One instance per non-blank line. Keys: `text`, `aspect`, `from`, `to`
/// (token indices, half-open), `label`, and optionally `edges` as
/// `[head, dependent, relation]` triples.
pub fn parse_jsonl(text: &str) -> Result<Vec<LabeledInstance>, CorpusError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let err = |field: &'static str, message: String| CorpusError::Record {
            line: lineno + 1,
            record,
            field,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| err("<json>", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| err("<json>", "expected an object".into()))?;

        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| err("text", "missing or not a string".into()))?;
        let index = |field: &'static str| {
            obj.get(field)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| err(field, "missing or not a non-negative integer".into()))
        };
        let from = index("from")?;
        let to = index("to")?;
        let label_str = obj
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| err("label", "missing or not a string".into()))?;
        let label =
            Polarity::parse(label_str).ok_or_else(|| err("label", format!("unknown polarity {label_str:?}")))?;
        if let Some(a) = obj.get("aspect") {
            if !a.is_string() {
                return Err(err("aspect", "not a string".into()));
            }
        }

        let mut parse_edges = Vec::new();
        if let Some(edges) = obj.get("edges") {
            let arr = edges
                .as_array()
                .ok_or_else(|| err("edges", "not an array".into()))?;
            for e in arr {
                parse_edges.push(edge_from_json(e).ok_or_else(|| err("edges", format!("bad edge {e}")))?);
            }
        }

        let inst = LabeledInstance {
            text: text.to_string(),
            tokens: tokenize(text),
            aspect_span: from..to,
            label,
            parse_edges,
        };
        inst.validate(record)?;
        out.push(inst);
    }
    Ok(out)
}

fn edge_from_json(v: &Value) -> Option<ParseEdge> {
    let a = v.as_array()?;
    if a.len() != 3 {
        return None;
    }
    Some(ParseEdge {
        head: a[0].as_u64()? as usize,
        dependent: a[1].as_u64()? as usize,
        relation: a[2].as_str()?.to_string(),
    })
}

impl LabeledInstance {
    /// Serializes to the jsonl record format read by [`parse_jsonl`].
    pub fn to_jsonl(&self) -> String {
        let mut obj = Map::new();
        obj.insert("text".into(), json!(self.text));
        obj.insert("aspect".into(), json!(self.aspect_text()));
        obj.insert("from".into(), json!(self.aspect_span.start));
        obj.insert("to".into(), json!(self.aspect_span.end));
        obj.insert("label".into(), json!(self.label.as_str()));
        if !self.parse_edges.is_empty() {
            let edges: Vec<Value> = self
                .parse_edges
                .iter()
                .map(|e| json!([e.head, e.dependent, e.relation]))
                .collect();
            obj.insert("edges".into(), Value::Array(edges));
        }
        Value::Object(obj).to_string()
    }
}

#[derive(Default)]
struct PendingSentence {
    id: String,
    text: String,
    aspects: Vec<(usize, usize, String)>,
}

fn attr(e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>, CorpusError> {
    for a in e.attributes() {
        let a = a.map_err(|e| CorpusError::Xml(e.to_string()))?;
        if a.key.as_ref() == name {
            let v = a
                .unescape_value()
                .map_err(|e| CorpusError::Xml(e.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

/// SemEval ABSA XML. Reads `<aspectTerm>` (2014) and `<Opinion>` (2015/16)
/// elements; `conflict` polarities and implicit `NULL` targets are skipped.
pub fn parse_semeval_xml(text: &str) -> Result<Vec<LabeledInstance>, CorpusError> {
    let mut reader = Reader::from_str(text);
    let mut out = Vec::new();
    let mut current: Option<PendingSentence> = None;
    let mut in_text = false;

    loop {
        let event = reader.read_event().map_err(|e| {
            CorpusError::Xml(format!("at byte {}: {e}", reader.buffer_position()))
        })?;
        match event {
            Event::Start(e) | Event::Empty(e) => match e.name().as_ref() {
                b"sentence" => {
                    current = Some(PendingSentence {
                        id: attr(&e, b"id")?.unwrap_or_default(),
                        ..Default::default()
                    });
                }
                b"text" => in_text = true,
                b"aspectTerm" | b"Opinion" => {
                    let Some(s) = current.as_mut() else { continue };
                    let term = attr(&e, b"term")?.or(attr(&e, b"target")?).unwrap_or_default();
                    if term == "NULL" {
                        continue;
                    }
                    let polarity = attr(&e, b"polarity")?.unwrap_or_default();
                    let num = |name: &[u8]| -> Result<usize, CorpusError> {
                        attr(&e, name)?
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| {
                                CorpusError::Xml(format!(
                                    "sentence {}: aspect {term:?} missing numeric `{}`",
                                    s.id,
                                    String::from_utf8_lossy(name)
                                ))
                            })
                    };
                    let (from, to) = (num(b"from")?, num(b"to")?);
                    s.aspects.push((from, to, polarity));
                }
                _ => {}
            },
            Event::Text(t) if in_text => {
                if let Some(s) = current.as_mut() {
                    let piece = t.unescape().map_err(|e| CorpusError::Xml(e.to_string()))?;
                    s.text.push_str(&piece);
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"text" => in_text = false,
                b"sentence" => {
                    if let Some(s) = current.take() {
                        emit_sentence(s, &mut out)?;
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn emit_sentence(s: PendingSentence, out: &mut Vec<LabeledInstance>) -> Result<(), CorpusError> {
    let toks = tokenize_with_offsets(&s.text);
    let tokens: Vec<String> = toks.iter().map(|(t, _)| t.clone()).collect();
    for (from, to, polarity) in s.aspects {
        let Some(label) = Polarity::parse(&polarity) else {
            continue;
        };
        // Smallest token range whose characters overlap [from, to).
        let covering: Vec<usize> = toks
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| r.start < to && from < r.end)
            .map(|(i, _)| i)
            .collect();
        let (Some(&first), Some(&last)) = (covering.first(), covering.last()) else {
            return Err(CorpusError::CharSpan {
                sentence: s.id.clone(),
                from,
                to,
            });
        };
        let inst = LabeledInstance {
            text: s.text.clone(),
            tokens: tokens.clone(),
            aspect_span: first..last + 1,
            label,
            parse_edges: Vec::new(),
        };
        inst.validate(out.len())?;
        out.push(inst);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jsonl_field_mapping() {
        let line = r#"{"text":"the food was terrible","aspect":"food","from":1,"to":2,"label":"negative"}"#;
        let v = parse_jsonl(line).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tokens, vec!["the", "food", "was", "terrible"]);
        assert_eq!(v[0].aspect_span, 1..2);
        assert_eq!(v[0].label, Polarity::Negative);
    }

    #[test]
    fn empty_input() {
        assert!(parse_jsonl("").unwrap().is_empty());
        assert!(parse_jsonl("\n\n").unwrap().is_empty());
    }

    #[test]
    fn span_outside_sentence() {
        let line = r#"{"text":"the food was terrible","aspect":"food","from":9,"to":10,"label":"negative"}"#;
        match parse_jsonl(line) {
            Err(CorpusError::Span { from: 9, to: 10, tokens: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_record_names_line_and_field() {
        let text = concat!(
            r#"{"text":"a b","from":0,"to":1,"label":"positive"}"#,
            "\n",
            r#"{"text":"a b","from":"x","to":1,"label":"positive"}"#
        );
        let err = parse_jsonl(text).unwrap_err();
        assert!(matches!(err, CorpusError::Record { line: 2, field: "from", .. }), "{err}");
        let err = parse_jsonl(r#"{"text":"a","from":0,"to":1,"label":"meh"}"#).unwrap_err();
        assert!(matches!(err, CorpusError::Record { field: "label", .. }));
    }

    #[test]
    fn semeval_multi_aspect_sentences() {
        let xml = r#"<?xml version="1.0"?>
<sentences>
  <sentence id="1">
    <text>The staff were very polite, but the quality of the food was terrible.</text>
    <aspectTerms>
      <aspectTerm term="staff" polarity="positive" from="4" to="9"/>
      <aspectTerm term="quality of the food" polarity="negative" from="36" to="55"/>
      <aspectTerm term="staff" polarity="conflict" from="4" to="9"/>
    </aspectTerms>
  </sentence>
  <sentence id="2"><text>Nothing here.</text></sentence>
</sentences>"#;
        let v = parse_semeval_xml(xml).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].aspect_span, 1..2);
        assert_eq!(v[1].aspect_text(), "quality of the food");
        assert_eq!(v[1].label, Polarity::Negative);
    }

    #[test]
    fn semeval_offsets_partial_token() {
        // Offsets that clip a token still select the whole covering token.
        let xml = r#"<sentences><sentence id="s"><text>I love sushi-rolls here</text>
<Opinions><Opinion target="sushi" category="FOOD" polarity="positive" from="7" to="12"/>
<Opinion target="NULL" category="X" polarity="neutral" from="0" to="0"/></Opinions></sentence></sentences>"#;
        let v = parse_semeval_xml(xml).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].aspect_span, 2..3);
    }

    #[test]
    fn semeval_span_without_token_is_an_error() {
        let xml = r#"<sentences><sentence id="s"><text>ab</text><aspectTerms>
<aspectTerm term="x" polarity="positive" from="10" to="12"/></aspectTerms></sentence></sentences>"#;
        assert!(matches!(parse_semeval_xml(xml), Err(CorpusError::CharSpan { .. })));
    }

    fn arb_instance() -> impl Strategy<Value = LabeledInstance> {
        (prop::collection::vec("[a-z]{1,6}", 1..8), 0usize..3).prop_flat_map(|(words, label)| {
            let n = words.len();
            (Just(words), Just(label), 0..n).prop_flat_map(move |(words, label, start)| {
                let n = words.len();
                (Just(words), Just(label), Just(start), start + 1..=n)
            })
        })
        .prop_map(|(words, label, start, end)| {
            let n = words.len();
            let parse_edges = (1..n)
                .map(|d| ParseEdge {
                    head: d - 1,
                    dependent: d,
                    relation: "dep".into(),
                })
                .collect();
            LabeledInstance {
                text: words.join(" "),
                tokens: words,
                aspect_span: start..end,
                label: Polarity::from_index(label).unwrap(),
                parse_edges,
            }
        })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(inst in arb_instance()) {
            let back = parse_jsonl(&inst.to_jsonl()).unwrap();
            prop_assert_eq!(back, vec![inst]);
        }
    }
}
