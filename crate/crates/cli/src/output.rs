//! Rendering records as aligned text, CSV or JSON lines.

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Csv,
    JsonLines,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(cell).collect::<Vec<_>>().join("x"),
        other => other.to_string(),
    }
}

fn csv_cell(v: &Value) -> String {
    let s = cell(v);
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// Renders `records` (structs serializing to flat objects) in `format`.
pub fn render<T: Serialize>(format: Format, records: &[T]) -> String {
    let values: Vec<serde_json::Map<String, Value>> = records
        .iter()
        .map(|r| match serde_json::to_value(r).expect("records serialize") {
            Value::Object(map) => map,
            other => {
                let mut map = serde_json::Map::new();
                map.insert("value".into(), other);
                map
            }
        })
        .collect();
    let Some(first) = values.first() else {
        return String::new();
    };
    let columns: Vec<&String> = first.keys().collect();
    let mut out = String::new();
    match format {
        Format::JsonLines => {
            for v in &values {
                out += &serde_json::to_string(v).expect("values serialize");
                out.push('\n');
            }
        }
        Format::Csv => {
            out += &columns.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",");
            out.push('\n');
            for v in &values {
                let row: Vec<String> = columns.iter().map(|c| v.get(*c).map_or(String::new(), csv_cell)).collect();
                out += &row.join(",");
                out.push('\n');
            }
        }
        Format::Human => {
            let rows: Vec<Vec<String>> = values
                .iter()
                .map(|v| columns.iter().map(|c| v.get(*c).map_or(String::new(), cell)).collect())
                .collect();
            let widths: Vec<usize> = columns
                .iter()
                .enumerate()
                .map(|(i, c)| rows.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| -> String {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            out += &line(columns.iter().map(|c| c.as_str()).collect());
            for r in &rows {
                out += &line(r.iter().map(String::as_str).collect());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        name: &'static str,
        count: usize,
        dims: [usize; 2],
        note: Option<f64>,
    }

    fn rows() -> Vec<Row> {
        vec![
            Row {
                name: "a,b",
                count: 3,
                dims: [2, 4],
                note: None,
            },
            Row {
                name: "c",
                count: 10,
                dims: [1, 1],
                note: Some(0.5),
            },
        ]
    }

    #[test]
    fn csv_keeps_field_order_and_quotes() {
        assert_eq!(render(Format::Csv, &rows()), "name,count,dims,note\n\"a,b\",3,2x4,\nc,10,1x1,0.5\n");
    }

    #[test]
    fn json_lines_one_object_per_record() {
        let out = render(Format::JsonLines, &rows());
        assert_eq!(out.lines().count(), 2);
        assert!(out.starts_with("{\"name\":\"a,b\",\"count\":3,\"dims\":[2,4],\"note\":null}"));
    }

    #[test]
    fn human_aligns_columns() {
        let out = render(Format::Human, &rows());
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "name  count  dims  note");
        assert_eq!(lines[1], "a,b   3      2x4");
        assert_eq!(lines[2], "c     10     1x1   0.5");
    }
}
