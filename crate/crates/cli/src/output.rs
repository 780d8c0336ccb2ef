//! Tables and their CSV / JSON encodings.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_num(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::String(s.clone()),
        }
    }
}

/// Shortest round-trip representation; exponent form outside
/// `[1e-4, 1e15)` so tiny values stay short.
pub fn format_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else if x.is_finite() {
        format!("{x:e}")
    } else {
        // NaN / inf have no sensible CSV spelling other than this.
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn rows_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

/// `{"command": …, "meta": …, "rows": […]}`, pretty printed.
pub fn json_document(command: &str, meta: Value, table: &Table) -> Vec<u8> {
    let mut doc = Map::new();
    doc.insert("command".into(), Value::from(command));
    doc.insert("meta".into(), meta);
    doc.insert("rows".into(), table.rows_json());
    let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).expect("values serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for &x in &[0.0, 1.0, -0.5, 1e-7, 3.25e20, std::f64::consts::PI, 1e-4, 0.1 + 0.2] {
            let s = format_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_num(1e-7), "1e-7");
        assert_eq!(format_num(0.25), "0.25");
    }

    #[test]
    fn csv_and_json_shapes() {
        let mut t = Table::new(vec!["t", "source", "n"]);
        t.push(vec![Cell::Num(0.5), Cell::Text("closed_form".into()), Cell::Int(3)]);
        let csv = String::from_utf8(t.to_csv()).unwrap();
        assert_eq!(csv, "t,source,n\n0.5,closed_form,3\n");
        let j = t.rows_json();
        assert_eq!(j[0]["source"], Value::from("closed_form"));
        assert_eq!(j[0]["n"], Value::from(3));
    }

    #[test]
    fn nan_becomes_null_in_json() {
        let mut t = Table::new(vec!["x"]);
        t.push(vec![Cell::Num(f64::NAN)]);
        assert_eq!(t.rows_json()[0]["x"], Value::Null);
    }
}
