//! Person-period panels and their delimited text format.
//!
//! Columns: `person_id, period, choice, wage, schooling, exp_blue, exp_white,
//! exp_military, lagged_choice, type`. Choices use the integer codes 1 to 5 and
//! a missing wage is an empty field.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{advance, Alternative, StatePoint};

pub const PANEL_HEADER: [&str; 10] = [
    "person_id",
    "period",
    "choice",
    "wage",
    "schooling",
    "exp_blue",
    "exp_white",
    "exp_military",
    "lagged_choice",
    "type",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub person_id: u32,
    pub state: StatePoint,
    pub choice: Alternative,
    pub wage: Option<f64>,
}

impl Observation {
    pub fn t(&self) -> u32 {
        self.state.t
    }
}

/// Rows sorted by person and period. Person ids run from 1 without gaps and
/// consecutive rows of a person follow the laws of motion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    rows: Vec<Observation>,
    persons: Vec<Range<usize>>,
}

impl Panel {
    /// Sorts and validates `rows`; `h_max` is the schooling cap of the model.
    pub fn from_rows(mut rows: Vec<Observation>, h_max: u32) -> Result<Self> {
        rows.sort_by_key(|o| (o.person_id, o.state.t));
        let mut persons: Vec<Range<usize>> = Vec::new();
        for (i, o) in rows.iter().enumerate() {
            if o.wage.is_some() && !o.choice.is_working() {
                return Err(Error::InconsistentObservation {
                    person_id: o.person_id,
                    t: o.t(),
                    reason: format!("wage recorded for non-working choice {}", o.choice),
                });
            }
            if let Some(w) = o.wage {
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::InconsistentObservation {
                        person_id: o.person_id,
                        t: o.t(),
                        reason: format!("wage must be positive and finite, got {w}"),
                    });
                }
            }
            match persons.last_mut() {
                Some(r) if rows[r.start].person_id == o.person_id => {
                    let prev = &rows[i - 1];
                    if advance(&prev.state, prev.choice, h_max) != o.state {
                        return Err(Error::TransitionInconsistency { person_id: o.person_id, t: o.t() });
                    }
                    r.end = i + 1;
                }
                _ => {
                    let expected = persons.len() as u32 + 1;
                    if o.person_id != expected {
                        return Err(Error::InconsistentObservation {
                            person_id: o.person_id,
                            t: o.t(),
                            reason: format!("person ids must be contiguous from 1, expected {expected}"),
                        });
                    }
                    persons.push(i..i + 1);
                }
            }
        }
        Ok(Self { rows, persons })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_persons(&self) -> usize {
        self.persons.len()
    }

    /// Row ranges, one per person in id order.
    pub fn person_ranges(&self) -> &[Range<usize>] {
        &self.persons
    }

    pub fn person(&self, i: usize) -> &[Observation] {
        &self.rows[self.persons[i].clone()]
    }

    /// Appends `other` with its person ids shifted past ours.
    pub fn concat(&self, other: &Panel) -> Panel {
        let offset = self.num_persons() as u32;
        let base = self.rows.len();
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().map(|o| Observation { person_id: o.person_id + offset, ..*o }));
        let mut persons = self.persons.clone();
        persons.extend(other.persons.iter().map(|r| r.start + base..r.end + base));
        Panel { rows, persons }
    }

    /// Sub-panel of the given persons (zero-based positions), renumbered from 1.
    pub fn select(&self, persons: &[usize]) -> Panel {
        let mut rows = Vec::new();
        let mut ranges = Vec::new();
        for (new_id, &i) in persons.iter().enumerate() {
            let start = rows.len();
            rows.extend(self.person(i).iter().map(|o| Observation { person_id: new_id as u32 + 1, ..*o }));
            ranges.push(start..rows.len());
        }
        Panel { rows, persons: ranges }
    }
}

pub fn write_panel<W: Write>(panel: &Panel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(PANEL_HEADER).map_err(map)?;
    for o in panel.rows() {
        let s = &o.state;
        let record = [
            o.person_id.to_string(),
            s.t.to_string(),
            o.choice.code().to_string(),
            o.wage.map(|w| w.to_string()).unwrap_or_default(),
            s.h.to_string(),
            s.k[0].to_string(),
            s.k[1].to_string(),
            s.k[2].to_string(),
            s.lagged_choice.code().to_string(),
            s.type_id.to_string(),
        ];
        w.write_record(&record).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_panel(panel: &Panel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_panel(panel, std::io::BufWriter::new(file))
}

pub fn read_panel<R: Read>(input: R, h_max: u32) -> Result<Panel> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::SchemaError { line: 1, reason: e.to_string() })?;
    if header.iter().map(str::trim).ne(PANEL_HEADER) {
        return Err(Error::SchemaError { line: 1, reason: format!("expected header {}", PANEL_HEADER.join(",")) });
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::SchemaError { line, reason: e.to_string() })?;
        rows.push(parse_row(&record, line)?);
    }
    Panel::from_rows(rows, h_max)
}

pub fn load_panel(path: &Path, h_max: u32) -> Result<Panel> {
    let file = std::fs::File::open(path)?;
    read_panel(std::io::BufReader::new(file), h_max)
}

fn parse_row(record: &csv::StringRecord, line: usize) -> Result<Observation> {
    let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
    let int = |i: usize| -> Result<u32> {
        field(i).parse().map_err(|_| Error::SchemaError {
            line,
            reason: format!("{}: expected a nonnegative integer, got `{}`", PANEL_HEADER[i], field(i)),
        })
    };
    let alt = |i: usize| -> Result<Alternative> {
        int(i).ok().and_then(|c| u8::try_from(c).ok()).and_then(Alternative::from_code).ok_or_else(|| {
            Error::SchemaError { line, reason: format!("{}: expected a code 1-5, got `{}`", PANEL_HEADER[i], field(i)) }
        })
    };
    if record.len() != PANEL_HEADER.len() {
        return Err(Error::SchemaError {
            line,
            reason: format!("expected {} fields, found {}", PANEL_HEADER.len(), record.len()),
        });
    }
    let choice = alt(2)?;
    let wage = match field(3) {
        "" => None,
        w => Some(w.parse::<f64>().ok().filter(|w| w.is_finite() && *w > 0.0).ok_or_else(|| Error::SchemaError {
            line,
            reason: format!("wage: expected a positive number, got `{w}`"),
        })?),
    };
    if wage.is_some() && !choice.is_working() {
        return Err(Error::SchemaError { line, reason: format!("wage recorded for non-working choice {choice}") });
    }
    let type_id = int(9)?;
    if type_id == 0 {
        return Err(Error::SchemaError { line, reason: "type: ids start at 1".into() });
    }
    Ok(Observation {
        person_id: int(0)?,
        state: StatePoint {
            t: int(1)?,
            h: int(4)?,
            k: [int(5)?, int(6)?, int(7)?],
            lagged_choice: alt(8)?,
            type_id,
        },
        choice,
        wage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(person_id: u32, t: u32, h: u32, k: [u32; 3], lag: Alternative, choice: Alternative, wage: Option<f64>) -> Observation {
        Observation { person_id, state: StatePoint { t, h, k, lagged_choice: lag, type_id: 1 }, choice, wage }
    }

    fn sample() -> Panel {
        use Alternative::*;
        Panel::from_rows(
            vec![
                obs(1, 16, 10, [0, 0, 0], School, School, None),
                obs(1, 17, 11, [0, 0, 0], School, Blue, Some(12_345.678)),
                obs(1, 18, 11, [1, 0, 0], Blue, Home, None),
                obs(2, 16, 10, [0, 0, 0], School, White, Some(0.1 + 0.2)),
            ],
            20,
        )
        .unwrap()
    }

    #[test]
    fn write_then_read_is_identity() {
        let p = sample();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let back = read_panel(buf.as_slice(), 20).unwrap();
        assert_eq!(back, p);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("person_id,period,choice,wage,schooling"));
        assert!(text.contains("1,16,4,,10,0,0,0,4,1\n"));
    }

    #[test]
    fn wage_on_school_row_is_a_schema_error() {
        let text = "person_id,period,choice,wage,schooling,exp_blue,exp_white,exp_military,lagged_choice,type\n\
                    1,16,4,100.0,10,0,0,0,4,1\n";
        assert!(matches!(read_panel(text.as_bytes(), 20), Err(Error::SchemaError { line: 2, .. })));
    }

    #[test]
    fn schooling_jump_is_a_transition_error() {
        let text = "person_id,period,choice,wage,schooling,exp_blue,exp_white,exp_military,lagged_choice,type\n\
                    1,16,4,,10,0,0,0,4,1\n\
                    1,17,4,,12,0,0,0,4,1\n";
        assert_eq!(
            read_panel(text.as_bytes(), 20).unwrap_err(),
            Error::TransitionInconsistency { person_id: 1, t: 17 }
        );
    }

    #[test]
    fn bad_fields_report_their_line() {
        let text = "person_id,period,choice,wage,schooling,exp_blue,exp_white,exp_military,lagged_choice,type\n\
                    1,16,4,,10,0,0,0,4,1\n\
                    2,16,9,,10,0,0,0,4,1\n";
        assert!(matches!(read_panel(text.as_bytes(), 20), Err(Error::SchemaError { line: 3, .. })));
        assert!(matches!(read_panel("a,b\n".as_bytes(), 20), Err(Error::SchemaError { line: 1, .. })));
    }

    #[test]
    fn person_ids_must_be_contiguous() {
        use Alternative::*;
        let rows = vec![obs(2, 16, 10, [0, 0, 0], School, Home, None)];
        assert!(Panel::from_rows(rows, 20).is_err());
    }

    #[test]
    fn concat_and_select_renumber() {
        let p = sample();
        let both = p.concat(&p);
        assert_eq!(both.num_persons(), 4);
        assert_eq!(both.person(3)[0].person_id, 4);
        assert_eq!(both.select(&[2, 3]), p);
        let reparsed = Panel::from_rows(both.rows().to_vec(), 20).unwrap();
        assert_eq!(reparsed, both);
    }
}
