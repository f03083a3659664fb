//! State-by-day panel storage, CSV ingestion and validation.
//!
//! Rows are kept sorted by `(state, date)`; each state owns one contiguous
//! block of rows covering a gap-free run of days. Column values are shared
//! behind `Arc` so deriving a new dataset only copies the columns it touches.
//! Missing cells are stored as `NaN`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    /// Cumulative count (confirmed cases).
    Count,
    /// Cumulative test count.
    TestCount,
    /// Policy indicator, raw values in `[0, 1]`.
    Policy,
    /// State-level covariate.
    Covariate,
    /// Anything computed by a transform that has no better role.
    Derived,
}

impl ColumnRole {
    pub fn name(self) -> &'static str {
        match self {
            ColumnRole::Count => "count",
            ColumnRole::TestCount => "test_count",
            ColumnRole::Policy => "policy",
            ColumnRole::Covariate => "covariate",
            ColumnRole::Derived => "derived",
        }
    }

    pub fn is_cumulative(self) -> bool {
        matches!(self, ColumnRole::Count | ColumnRole::TestCount)
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub role: ColumnRole,
    pub values: Arc<[f64]>,
}

impl Column {
    pub fn new(role: ColumnRole, values: Vec<f64>) -> Self {
        Column {
            role,
            values: values.into(),
        }
    }
}

/// One state's block of rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpan {
    pub name: String,
    pub start: NaiveDate,
    pub len: usize,
    pub offset: usize,
}

impl StateSpan {
    pub fn rows(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Days::new(self.len as u64 - 1)
    }

    pub fn date_at(&self, i: usize) -> NaiveDate {
        self.start + Days::new(i as u64)
    }

    /// Position of `date` within the span, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.len).then_some(d as usize)
    }
}

/// Maps CSV column names to roles. JSON form: `{"columns": {"cases": "count", ...}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: IndexMap<String, ColumnRole>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn with(mut self, name: &str, role: ColumnRole) -> Self {
        self.columns.insert(name.to_string(), role);
        self
    }
}

#[derive(Debug, Clone)]
pub struct PanelDataset {
    states: Vec<StateSpan>,
    columns: IndexMap<String, Column>,
    n_rows: usize,
}

impl PanelDataset {
    pub fn states(&self) -> &[StateSpan] {
        &self.states
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.name.as_str())
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .binary_search_by(|s| s.name.as_str().cmp(name))
            .map_err(|_| Error::UnknownState(name.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.column(name)?.values)
    }

    pub fn role(&self, name: &str) -> Result<ColumnRole> {
        Ok(self.column(name)?.role)
    }

    /// Owning state index for every row.
    pub fn row_states(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_rows);
        for (s, span) in self.states.iter().enumerate() {
            out.extend(std::iter::repeat_n(s, span.len));
        }
        out
    }

    pub fn row_dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.n_rows);
        for span in &self.states {
            out.extend((0..span.len).map(|i| span.date_at(i)));
        }
        out
    }

    pub fn row_of(&self, state: usize, date: NaiveDate) -> Option<usize> {
        let span = &self.states[state];
        span.index_of(date).map(|i| span.offset + i)
    }

    /// Earliest and latest date across all states.
    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let lo = self.states.iter().map(|s| s.start).min()?;
        let hi = self.states.iter().map(|s| s.end()).max()?;
        Some((lo, hi))
    }

    /// Returns a copy with `name` added or replaced.
    pub fn with_column(&self, name: &str, column: Column) -> Result<Self> {
        if column.values.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                got: column.values.len(),
            });
        }
        let mut out = self.clone();
        out.columns.insert(name.to_string(), column);
        Ok(out)
    }

    pub(crate) fn insert_column(&mut self, name: String, column: Column) {
        debug_assert_eq!(column.values.len(), self.n_rows);
        self.columns.insert(name, column);
    }

    /// Keeps only the listed states (order of the panel is preserved).
    pub fn retain_states(&self, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let mut builder = PanelBuilder::new();
        let kept: Vec<&StateSpan> = self.states.iter().filter(|s| keep(&s.name)).collect();
        for span in &kept {
            builder = builder.state(&span.name, span.start, span.len);
        }
        for (name, col) in &self.columns {
            let values: Vec<f64> = kept
                .iter()
                .flat_map(|span| col.values[span.rows()].iter().copied())
                .collect();
            builder = builder.column(name, col.role, values);
        }
        builder.build_unchecked()
    }

    /// Cell-for-cell equality, treating `NaN == NaN`.
    pub fn same_cells(&self, other: &PanelDataset) -> bool {
        if self.states != other.states || self.columns.len() != other.columns.len() {
            return false;
        }
        self.columns.iter().all(|(name, col)| match other.columns.get(name) {
            Some(o) => {
                o.role == col.role
                    && col
                        .values
                        .iter()
                        .zip(o.values.iter())
                        .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
            }
            None => false,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, schema)
    }

    /// Reads a CSV with `state` and `date` columns plus every column named in
    /// `schema`. Columns not in the schema are ignored.
    pub fn from_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let state_idx = find("state")?;
        let date_idx = find("date")?;
        let col_idx: Vec<usize> = schema
            .columns
            .keys()
            .map(|c| find(c))
            .collect::<Result<_>>()?;

        let mut by_state: BTreeMap<String, Vec<(NaiveDate, Vec<f64>)>> = BTreeMap::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let state = record.get(state_idx).unwrap_or_default().to_string();
            let raw_date = record.get(date_idx).unwrap_or_default();
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| {
                Error::Parse(format!("line {}: bad date `{raw_date}`: {e}", line + 2))
            })?;
            let mut vals = Vec::with_capacity(col_idx.len());
            for (&i, name) in col_idx.iter().zip(schema.columns.keys()) {
                let cell = record.get(i).unwrap_or_default();
                vals.push(parse_cell(cell).ok_or_else(|| {
                    Error::Parse(format!("line {}: column `{name}`: bad number `{cell}`", line + 2))
                })?);
            }
            by_state.entry(state).or_default().push((date, vals));
        }

        let mut builder = PanelBuilder::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); col_idx.len()];
        for (state, mut rows) in by_state {
            rows.sort_by_key(|(d, _)| *d);
            for pair in rows.windows(2) {
                let (a, b) = (pair[0].0, pair[1].0);
                if a == b {
                    return Err(Error::DuplicateCell { state, date: a });
                }
                if (b - a).num_days() != 1 {
                    return Err(Error::GapInDates { state, after: a });
                }
            }
            builder = builder.state(&state, rows[0].0, rows.len());
            for (_, vals) in rows {
                for (c, v) in vals.into_iter().enumerate() {
                    columns[c].push(v);
                }
            }
        }
        for ((name, role), values) in schema.columns.iter().zip(columns) {
            builder = builder.column(name, *role, values);
        }
        builder.build()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["state".to_string(), "date".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        let cols: Vec<&Column> = self.columns.values().collect();
        for span in &self.states {
            for i in 0..span.len {
                let row = span.offset + i;
                let mut rec = Vec::with_capacity(header.len());
                rec.push(span.name.clone());
                rec.push(span.date_at(i).to_string());
                for c in &cols {
                    rec.push(format_cell(c.values[row]));
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Checks the role invariants: cumulative columns non-negative and
    /// non-decreasing within state, raw policy values in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (name, col) in &self.columns {
            for span in &self.states {
                let vals = &col.values[span.rows()];
                match col.role {
                    ColumnRole::Count | ColumnRole::TestCount => {
                        let mut last = f64::NEG_INFINITY;
                        for (i, &v) in vals.iter().enumerate() {
                            if v.is_nan() {
                                continue;
                            }
                            if v < 0.0 {
                                return Err(self.out_of_range(name, span, i, v, 0.0, f64::INFINITY));
                            }
                            if v < last {
                                return Err(Error::NonMonotoneCumulative {
                                    state: span.name.clone(),
                                    column: name.clone(),
                                    date: span.date_at(i),
                                });
                            }
                            last = v;
                        }
                    }
                    ColumnRole::Policy => {
                        if let Some((i, &v)) = vals
                            .iter()
                            .enumerate()
                            .find(|(_, v)| !v.is_nan() && !(0.0..=1.0).contains(*v))
                        {
                            return Err(self.out_of_range(name, span, i, v, 0.0, 1.0));
                        }
                    }
                    ColumnRole::Covariate | ColumnRole::Derived => {}
                }
            }
        }
        Ok(())
    }

    fn out_of_range(&self, column: &str, span: &StateSpan, i: usize, value: f64, lo: f64, hi: f64) -> Error {
        Error::ValueOutOfRange {
            column: column.to_string(),
            state: span.name.clone(),
            date: span.date_at(i),
            value,
            lo,
            hi,
        }
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        cell.parse().ok()
    }
}

pub(crate) fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Assembles a panel from per-state spans and row-aligned column vectors.
#[derive(Debug, Default)]
pub struct PanelBuilder {
    states: Vec<(String, NaiveDate, usize)>,
    columns: Vec<(String, ColumnRole, Vec<f64>)>,
}

impl PanelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// States must be added in the order their rows appear in column vectors.
    pub fn state(mut self, name: &str, start: NaiveDate, len: usize) -> Self {
        self.states.push((name.to_string(), start, len));
        self
    }

    pub fn column(mut self, name: &str, role: ColumnRole, values: Vec<f64>) -> Self {
        self.columns.push((name.to_string(), role, values));
        self
    }

    /// Builds and validates role invariants.
    pub fn build(self) -> Result<PanelDataset> {
        let panel = self.build_unchecked()?;
        panel.validate()?;
        Ok(panel)
    }

    /// Builds with structural checks only (sorted unique states, column lengths).
    pub fn build_unchecked(self) -> Result<PanelDataset> {
        let mut order: Vec<usize> = (0..self.states.len()).collect();
        order.sort_by(|&a, &b| self.states[a].0.cmp(&self.states[b].0));
        for w in order.windows(2) {
            if self.states[w[0]].0 == self.states[w[1]].0 {
                let (name, start, _) = &self.states[w[0]];
                return Err(Error::DuplicateCell {
                    state: name.clone(),
                    date: *start,
                });
            }
        }
        let mut src_offset = Vec::with_capacity(self.states.len());
        let mut acc = 0;
        for (_, _, len) in &self.states {
            src_offset.push(acc);
            acc += len;
        }
        let n_rows = acc;
        let sorted = order.windows(2).all(|w| w[0] < w[1]);

        let mut states = Vec::with_capacity(self.states.len());
        let mut offset = 0;
        for &i in &order {
            let (name, start, len) = &self.states[i];
            if *len == 0 {
                return Err(Error::InvalidSpec(format!("state {name} has no rows")));
            }
            states.push(StateSpan {
                name: name.clone(),
                start: *start,
                len: *len,
                offset,
            });
            offset += len;
        }

        let mut columns = IndexMap::with_capacity(self.columns.len());
        for (name, role, values) in self.columns {
            if values.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    got: values.len(),
                });
            }
            let values = if sorted {
                values
            } else {
                order
                    .iter()
                    .flat_map(|&i| {
                        let (_, _, len) = self.states[i];
                        values[src_offset[i]..src_offset[i] + len].iter().copied()
                    })
                    .collect()
            };
            if columns.insert(name.clone(), Column::new(role, values)).is_some() {
                return Err(Error::InvalidSpec(format!("column `{name}` given twice")));
            }
        }
        Ok(PanelDataset {
            states,
            columns,
            n_rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::default()
            .with("cases", ColumnRole::Count)
            .with("mask", ColumnRole::Policy)
    }

    fn csv_for(states: &[&str], days: usize) -> String {
        let mut s = String::from("state,date,cases,mask,ignored\n");
        let start = NaiveDate::from_ymd_opt(2020, 3, 7).unwrap();
        for st in states {
            for d in 0..days {
                let date = start + Days::new(d as u64);
                s.push_str(&format!("{st},{date},{},{},x\n", d * 3, (d > 4) as u8));
            }
        }
        s
    }

    #[test]
    fn loads_two_states_ten_days() {
        let p = PanelDataset::from_csv_reader(csv_for(&["B", "A"], 10).as_bytes(), &schema()).unwrap();
        assert_eq!(p.n_rows(), 20);
        assert_eq!(p.state_names().collect::<Vec<_>>(), vec!["A", "B"]);
        assert!(!p.has_column("ignored"));
        assert_eq!(p.values("cases").unwrap()[..3], [0.0, 3.0, 6.0]);
    }

    #[test]
    fn rows_are_sorted_by_date_within_state() {
        let text = "state,date,cases,mask\nA,2020-03-09,5,0\nA,2020-03-07,1,0\nA,2020-03-08,2,0\n";
        let p = PanelDataset::from_csv_reader(text.as_bytes(), &schema()).unwrap();
        assert_eq!(p.values("cases").unwrap(), &[1.0, 2.0, 5.0]);
        assert_eq!(p.states()[0].start, NaiveDate::from_ymd_opt(2020, 3, 7).unwrap());
    }

    #[test]
    fn decreasing_cumulative_is_rejected() {
        let text = "state,date,cases,mask\nA,2020-03-07,4,0\nA,2020-03-08,3,0\n";
        match PanelDataset::from_csv_reader(text.as_bytes(), &schema()) {
            Err(Error::NonMonotoneCumulative { state, column, date }) => {
                assert_eq!(state, "A");
                assert_eq!(column, "cases");
                assert_eq!(date, NaiveDate::from_ymd_opt(2020, 3, 8).unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gaps_duplicates_and_missing_columns() {
        let gap = "state,date,cases,mask\nA,2020-03-07,1,0\nA,2020-03-09,2,0\n";
        assert!(matches!(
            PanelDataset::from_csv_reader(gap.as_bytes(), &schema()),
            Err(Error::GapInDates { .. })
        ));
        let dup = "state,date,cases,mask\nA,2020-03-07,1,0\nA,2020-03-07,2,0\n";
        assert!(matches!(
            PanelDataset::from_csv_reader(dup.as_bytes(), &schema()),
            Err(Error::DuplicateCell { .. })
        ));
        let missing = "state,date,cases\nA,2020-03-07,1\n";
        assert!(matches!(
            PanelDataset::from_csv_reader(missing.as_bytes(), &schema()),
            Err(Error::MissingColumn(c)) if c == "mask"
        ));
    }

    #[test]
    fn policy_out_of_range_is_rejected() {
        let text = "state,date,cases,mask\nA,2020-03-07,1,2\n";
        assert!(matches!(
            PanelDataset::from_csv_reader(text.as_bytes(), &schema()),
            Err(Error::ValueOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_cells_round_trip_as_missing() {
        let text = "state,date,cases,mask\nA,2020-03-07,1,\nA,2020-03-08,2,1\n";
        let p = PanelDataset::from_csv_reader(text.as_bytes(), &schema()).unwrap();
        assert!(p.values("mask").unwrap()[0].is_nan());
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        let text_out = String::from_utf8(out).unwrap();
        assert_eq!(text_out, "state,date,cases,mask\nA,2020-03-07,1,\nA,2020-03-08,2,1\n");
        let back = PanelDataset::from_csv_reader(text_out.as_bytes(), &schema()).unwrap();
        assert!(p.same_cells(&back));
    }

    #[test]
    fn builder_reorders_states() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let p = PanelBuilder::new()
            .state("z", d0, 2)
            .state("a", d0, 1)
            .column("v", ColumnRole::Derived, vec![1.0, 2.0, 3.0])
            .build()
            .unwrap();
        assert_eq!(p.values("v").unwrap(), &[3.0, 1.0, 2.0]);
        assert_eq!(p.row_of(1, d0 + Days::new(1)), Some(2));
    }
}
