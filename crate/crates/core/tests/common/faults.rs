//! Manifest rows with one invariant violation injected.

use ssrl_core::screen::{manifest_bytes, plan_wells, SyntheticScreenConfig, WellRecord};

pub fn small_screen() -> SyntheticScreenConfig {
    SyntheticScreenConfig {
        n_compounds: 2,
        n_doses: 3,
        replicates_per_dose: 2,
        n_controls_per_group: 3,
        image_size: 8,
        ..Default::default()
    }
}

pub fn manifest_rows() -> Vec<Vec<String>> {
    let records: Vec<WellRecord> = plan_wells(&small_screen()).unwrap().into_iter().map(|p| p.0).collect();
    let text = String::from_utf8(manifest_bytes(&records).unwrap()).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

pub fn join(rows: &[Vec<String>]) -> String {
    rows.iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n") + "\n"
}

pub const VIOLATIONS: usize = 18;

/// Applies violation `kind` to data row `row` (1-based; 0 is the header).
pub fn inject(rows: &mut Vec<Vec<String>>, kind: usize, row: usize) {
    let treated = rows.iter().position(|r| r[2] == "TREATED").unwrap();
    let control = rows.iter().skip(1).position(|r| r[2] != "TREATED").unwrap() + 1;
    let set = |rows: &mut Vec<Vec<String>>, r: usize, k: usize, v: &str| rows[r][k] = v.to_string();
    match kind {
        0 => set(rows, 0, 4, "conc"),
        1 => {
            rows[row].pop();
        }
        2 => set(rows, row, 4, "abc"),
        3 => set(rows, row, 4, "-1"),
        4 => set(rows, row, 4, "NaN"),
        5 => set(rows, row, 5, "0"),
        6 => set(rows, row, 5, "1.5"),
        7 => set(rows, row, 2, "MAYBE"),
        8 => set(rows, treated, 3, ""),
        9 => set(rows, treated, 4, "0"),
        10 => set(rows, control, 3, "cmp9"),
        11 => set(rows, control, 4, "0.5"),
        12 => {
            let other = if row == 1 { 2 } else { 1 };
            let id = rows[other][0].clone();
            set(rows, row, 0, &id);
        }
        13 => {
            let other = if row == 1 { 2 } else { 1 };
            let mut dup = rows[other].clone();
            dup[0] = "fresh-id".into();
            dup[6] = "images/fresh.img".into();
            rows.push(dup);
        }
        14 => set(rows, row, 0, ""),
        15 => set(rows, row, 1, ""),
        16 => set(rows, row, 6, "/abs/x.img"),
        17 => set(rows, row, 6, ""),
        _ => unreachable!(),
    }
}

