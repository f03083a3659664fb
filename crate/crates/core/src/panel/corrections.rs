//! Audited fixes to policy start dates, kept as data rather than code.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, ColumnRole, PanelDataset};
use crate::error::{Error, Result};

/// Moves the start of a policy episode in one state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub state: String,
    pub column: String,
    pub old_start: NaiveDate,
    pub new_start: NaiveDate,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrectionSet {
    pub corrections: Vec<Correction>,
}

impl CorrectionSet {
    pub fn new(corrections: Vec<Correction>) -> Self {
        CorrectionSet { corrections }
    }

    pub fn is_empty(&self) -> bool {
        self.corrections.is_empty()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Columns: `state,column,old_start,new_start,note`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let corrections = rdr.deserialize().collect::<std::result::Result<Vec<Correction>, _>>()?;
        Ok(CorrectionSet { corrections })
    }
}

/// Rewrites each referenced policy series so it is 0 before `new_start` and 1
/// from `new_start` until the episode that was running at
/// `max(old_start, new_start)` ends. Dates from that end onward keep their
/// recorded values, as do all other cells. Applying the same set twice gives
/// the same panel as applying it once.
pub fn apply_corrections(panel: &PanelDataset, corrections: &CorrectionSet) -> Result<PanelDataset> {
    let mut out = panel.clone();
    for c in &corrections.corrections {
        let s = out.state_index(&c.state)?;
        let col = out.column(&c.column)?;
        if col.role != ColumnRole::Policy {
            return Err(Error::RoleMismatch {
                column: c.column.clone(),
                expected: "policy",
                found: col.role.name(),
            });
        }
        let span = out.states()[s].clone();
        let mut values = col.values.to_vec();
        let series = &mut values[span.rows()];

        let anchor = c.old_start.max(c.new_start);
        let scan_from = match span.index_of(anchor) {
            Some(i) => i,
            None if anchor < span.start => 0,
            None => span.len,
        };
        let end = (scan_from..span.len)
            .find(|&i| !(series[i] > 0.0))
            .unwrap_or(span.len);
        for (i, v) in series.iter_mut().enumerate().take(end) {
            *v = if span.date_at(i) >= c.new_start { 1.0 } else { 0.0 };
        }
        out.insert_column(c.column.clone(), Column::new(ColumnRole::Policy, values));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use chrono::Days;

    use super::*;
    use crate::panel::dataset::PanelBuilder;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn step_panel(state: &str, start: NaiveDate, len: usize, on: NaiveDate) -> PanelDataset {
        let values = (0..len)
            .map(|i| ((start + Days::new(i as u64)) >= on) as u8 as f64)
            .collect();
        PanelBuilder::new()
            .state(state, start, len)
            .state("Other", start, len)
            .column("bus_mask", ColumnRole::Policy, [values, vec![0.0; len]].concat())
            .column("cases", ColumnRole::Count, vec![1.0; 2 * len])
            .build()
            .unwrap()
    }

    fn value_on(p: &PanelDataset, state: &str, date: NaiveDate) -> f64 {
        let s = p.state_index(state).unwrap();
        p.values("bus_mask").unwrap()[p.row_of(s, date).unwrap()]
    }

    fn hawaii() -> CorrectionSet {
        CorrectionSet::new(vec![Correction {
            state: "Hawaii".into(),
            column: "bus_mask".into(),
            old_start: ymd(2020, 6, 11),
            new_start: ymd(2020, 4, 16),
            note: "April 16 proclamation".into(),
        }])
    }

    #[test]
    fn hawaii_start_moves_earlier() {
        let p = step_panel("Hawaii", ymd(2020, 3, 7), 150, ymd(2020, 6, 11));
        let fixed = apply_corrections(&p, &hawaii()).unwrap();
        assert_eq!(value_on(&fixed, "Hawaii", ymd(2020, 4, 15)), 0.0);
        assert_eq!(value_on(&fixed, "Hawaii", ymd(2020, 4, 16)), 1.0);
        assert_eq!(value_on(&fixed, "Hawaii", ymd(2020, 6, 20)), 1.0);
        assert_eq!(fixed.values("cases").unwrap(), p.values("cases").unwrap());
    }

    #[test]
    fn north_dakota_start_moves_later() {
        let p = step_panel("North Dakota", ymd(2020, 3, 7), 120, ymd(2020, 4, 28));
        let set = CorrectionSet::new(vec![Correction {
            state: "North Dakota".into(),
            column: "bus_mask".into(),
            old_start: ymd(2020, 4, 28),
            new_start: ymd(2020, 5, 1),
            note: String::new(),
        }]);
        let fixed = apply_corrections(&p, &set).unwrap();
        assert_eq!(value_on(&fixed, "North Dakota", ymd(2020, 4, 30)), 0.0);
        assert_eq!(value_on(&fixed, "North Dakota", ymd(2020, 5, 1)), 1.0);
        let twice = apply_corrections(&fixed, &set).unwrap();
        assert!(twice.same_cells(&fixed));
    }

    #[test]
    fn episode_end_is_kept() {
        let start = ymd(2020, 3, 7);
        let values: Vec<f64> = (0..60).map(|i| (20..40).contains(&i) as u8 as f64).collect();
        let p = PanelBuilder::new()
            .state("A", start, 60)
            .column("bus_mask", ColumnRole::Policy, values)
            .build()
            .unwrap();
        let set = CorrectionSet::new(vec![Correction {
            state: "A".into(),
            column: "bus_mask".into(),
            old_start: start + Days::new(20),
            new_start: start + Days::new(10),
            note: String::new(),
        }]);
        let fixed = apply_corrections(&p, &set).unwrap();
        let v = fixed.values("bus_mask").unwrap();
        assert!(v[..10].iter().all(|&x| x == 0.0));
        assert!(v[10..40].iter().all(|&x| x == 1.0));
        assert!(v[40..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_set_is_identity_and_idempotence_holds() {
        let p = step_panel("Hawaii", ymd(2020, 3, 7), 150, ymd(2020, 6, 11));
        assert!(apply_corrections(&p, &CorrectionSet::default()).unwrap().same_cells(&p));
        let once = apply_corrections(&p, &hawaii()).unwrap();
        let twice = apply_corrections(&once, &hawaii()).unwrap();
        assert!(once.same_cells(&twice));
    }

    #[test]
    fn unknown_state_and_column() {
        let p = step_panel("Hawaii", ymd(2020, 3, 7), 30, ymd(2020, 3, 20));
        let mut set = hawaii();
        set.corrections[0].state = "Guam".into();
        assert!(matches!(apply_corrections(&p, &set), Err(Error::UnknownState(_))));
        let mut set = hawaii();
        set.corrections[0].column = "pub_mask".into();
        assert!(matches!(apply_corrections(&p, &set), Err(Error::UnknownColumn(_))));
        let mut set = hawaii();
        set.corrections[0].column = "cases".into();
        assert!(matches!(apply_corrections(&p, &set), Err(Error::RoleMismatch { .. })));
    }

    #[test]
    fn parses_csv() {
        let text = "state,column,old_start,new_start,note\nHawaii,bus_mask,2020-06-11,2020-04-16,proclamation\n";
        let set = CorrectionSet::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(set, hawaii_with_note("proclamation"));
    }

    fn hawaii_with_note(note: &str) -> CorrectionSet {
        let mut s = hawaii();
        s.corrections[0].note = note.into();
        s
    }
}
