//! Build a small panel, fix a mis-recorded mandate date, and derive the
//! regression columns: weekly log growth, national totals, lags and the
//! employee-only mask encoding.

use chrono::NaiveDate;
use policy_panel::panel::*;

fn main() -> policy_panel::Result<()> {
    let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let days = 60;
    let mut cases = Vec::new();
    let mut employee = Vec::new();
    let mut public = Vec::new();
    for (growth, emp_on, pub_on) in [(0.08, 20, 35), (0.06, 25, 60)] {
        for t in 0..days {
            cases.push((10.0 * f64::exp(growth * t as f64)).round());
            employee.push((t >= emp_on) as u8 as f64);
            public.push((t >= pub_on) as u8 as f64);
        }
    }
    let panel = PanelBuilder::new()
        .state("Alpha", start, days)
        .state("Beta", start, days)
        .column("cases", ColumnRole::Count, cases)
        .column(MASKS_EMPLOYEES_ONLY, ColumnRole::Policy, employee)
        .column(MASKS_PUBLIC, ColumnRole::Policy, public)
        .build()?;

    // Beta's employee mandate actually began five days earlier than recorded.
    let fix = CorrectionSet::new(vec![Correction {
        state: "Beta".into(),
        column: MASKS_EMPLOYEES_ONLY.into(),
        old_start: start + chrono::Days::new(25),
        new_start: start + chrono::Days::new(20),
        note: "order signed earlier".into(),
    }]);
    let panel = apply_corrections(&panel, &fix)?;

    let pipeline = Pipeline::new(TransformSpec::default())
        .encode_masks(MASKS_EMPLOYEES_ONLY, MASKS_PUBLIC)
        .national("cases")
        .growth("cases")
        .growth(&national_name("cases"))
        .lag("cases_growth", 14)
        .lag(MASKS_EMPLOYEES_ONLY, 14);
    let derived = pipeline.run(&panel)?;
    println!("derived columns: {:?}", pipeline.downstream_of(&["cases"]));

    let growth = derived.values("cases_growth")?;
    let lagged = derived.values("cases_growth_lag14")?;
    let emp = derived.values(MASKS_EMPLOYEES_ONLY)?;
    let dates = derived.row_dates();
    let states = derived.row_states();
    println!("{:<6} {:<10} {:>10} {:>10} {:>4}", "state", "date", "growth", "lag14", "emp");
    for r in (0..derived.n_rows()).step_by(10) {
        println!(
            "{:<6} {:<10} {:>10.4} {:>10.4} {:>4}",
            derived.states()[states[r]].name, dates[r], growth[r], lagged[r], emp[r]
        );
    }
    Ok(())
}
