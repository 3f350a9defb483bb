//! Manifest CSV with header
//! `well_id,cell_line,group,compound,concentration_um,replicate,image_path`.
//!
//! Row numbers in diagnostics count data rows from 1, so row `n` sits on
//! line `n + 1` of the file.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScreenError;

pub const HEADER: [&str; 7] = [
    "well_id",
    "cell_line",
    "group",
    "compound",
    "concentration_um",
    "replicate",
    "image_path",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "POS_CTRL")]
    PosCtrl,
    #[serde(rename = "NEG_CTRL")]
    NegCtrl,
    #[serde(rename = "TREATED")]
    Treated,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::PosCtrl => "POS_CTRL",
            Group::NegCtrl => "NEG_CTRL",
            Group::Treated => "TREATED",
        }
    }

    pub fn is_control(self) -> bool {
        self != Group::Treated
    }
}

impl std::str::FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "POS_CTRL" => Ok(Group::PosCtrl),
            "NEG_CTRL" => Ok(Group::NegCtrl),
            "TREATED" => Ok(Group::Treated),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

/// One imaged well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellRecord {
    pub well_id: String,
    pub cell_line: String,
    pub group: Group,
    /// Empty for controls.
    pub compound: String,
    pub concentration_um: f64,
    pub replicate: u32,
    /// Relative to the manifest's directory.
    pub image_path: String,
}

/// Formats with 6 significant digits, without trailing zeros.
pub fn format_concentration(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.5e}");
    let parsed: f64 = s.parse().expect("valid float");
    let mut out = format!("{parsed}");
    if out.contains('e') {
        out = s;
    }
    out
}

/// Rounds to the value a manifest round-trip would produce.
pub fn round_concentration(v: f64) -> f64 {
    format_concentration(v).parse().expect("valid float")
}

pub fn write_manifest(path: &Path, records: &[WellRecord]) -> Result<(), ScreenError> {
    std::fs::write(path, manifest_bytes(records)?).map_err(|e| ScreenError::io(path, e))
}

/// Manifest CSV contents for `records`.
pub fn manifest_bytes(records: &[WellRecord]) -> Result<Vec<u8>, ScreenError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| ScreenError::Manifest { row: 0, msg: e.to_string() };
    w.write_record(HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.well_id.as_str(),
            r.cell_line.as_str(),
            r.group.as_str(),
            r.compound.as_str(),
            &format_concentration(r.concentration_um),
            &r.replicate.to_string(),
            r.image_path.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| ScreenError::Manifest { row: 0, msg: e.to_string() })
}

/// Parses and validates manifest text. When `image_root` is given, every
/// `image_path` must exist below it.
pub fn parse_manifest(text: &str, image_root: Option<&Path>) -> Result<Vec<WellRecord>, ScreenError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = rd.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| ScreenError::Manifest { row: 0, msg: e.to_string() })?,
        None => return Err(ScreenError::Manifest { row: 0, msg: "missing header".into() }),
    };
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(ScreenError::Manifest {
            row: 0,
            msg: format!("header must be exactly {}", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut keys = HashSet::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 1;
        let fail = |msg: String| ScreenError::Manifest { row: row_no, msg };
        let row = row.map_err(|e| fail(e.to_string()))?;
        if row.len() != HEADER.len() {
            return Err(fail(format!("expected {} fields, found {}", HEADER.len(), row.len())));
        }
        let field = |k: usize| row.get(k).unwrap_or("");
        let group: Group = field(2).parse().map_err(|e| fail(format!("group: {e}")))?;
        let concentration_um: f64 = field(4)
            .parse()
            .map_err(|_| fail(format!("concentration_um: not a number: {:?}", field(4))))?;
        let replicate: u32 = field(5)
            .parse()
            .map_err(|_| fail(format!("replicate: not an integer: {:?}", field(5))))?;
        let rec = WellRecord {
            well_id: field(0).to_string(),
            cell_line: field(1).to_string(),
            group,
            compound: field(3).to_string(),
            concentration_um,
            replicate,
            image_path: field(6).to_string(),
        };
        validate_record(&rec).map_err(fail)?;
        if !ids.insert(rec.well_id.clone()) {
            return Err(fail(format!("well_id: duplicate {:?}", rec.well_id)));
        }
        let key = (
            rec.cell_line.clone(),
            rec.group,
            rec.compound.clone(),
            rec.concentration_um.to_bits(),
            rec.replicate,
        );
        if !keys.insert(key) {
            return Err(fail("duplicate (cell_line, group, compound, concentration_um, replicate)".into()));
        }
        if let Some(root) = image_root {
            if !root.join(&rec.image_path).is_file() {
                return Err(fail(format!("image_path: {:?} does not exist", rec.image_path)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

fn validate_record(r: &WellRecord) -> Result<(), String> {
    if r.well_id.is_empty() {
        return Err("well_id: empty".into());
    }
    if r.cell_line.is_empty() {
        return Err("cell_line: empty".into());
    }
    if !(r.concentration_um >= 0.0 && r.concentration_um.is_finite()) {
        return Err(format!("concentration_um: {} is not a nonnegative number", r.concentration_um));
    }
    if r.replicate == 0 {
        return Err("replicate: must be positive".into());
    }
    let treated_shape = !r.compound.is_empty() && r.concentration_um > 0.0;
    match r.group {
        Group::Treated if !treated_shape => {
            Err("group: TREATED needs a compound and concentration_um > 0".into())
        }
        Group::PosCtrl | Group::NegCtrl if !r.compound.is_empty() || r.concentration_um != 0.0 => {
            Err(format!("group: {} must have no compound and concentration 0", r.group.as_str()))
        }
        _ => Ok(()),
    }?;
    if r.image_path.is_empty() || Path::new(&r.image_path).is_absolute() {
        return Err("image_path: must be a nonempty relative path".into());
    }
    Ok(())
}

/// Loads a manifest and checks that every referenced image exists next to it.
pub fn load_manifest(path: &Path) -> Result<Vec<WellRecord>, ScreenError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScreenError::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, Some(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, group: Group, compound: &str, c: f64, rep: u32) -> WellRecord {
        WellRecord {
            well_id: id.into(),
            cell_line: "line0".into(),
            group,
            compound: compound.into(),
            concentration_um: c,
            replicate: rep,
            image_path: format!("images/{id}.img"),
        }
    }

    fn text(records: &[WellRecord]) -> String {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&p, records).unwrap();
        std::fs::read_to_string(p).unwrap()
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_manifest(&(HEADER.join(",") + "\n"), None).unwrap().is_empty());
    }

    #[test]
    fn roundtrip() {
        let rs = vec![
            rec("a", Group::PosCtrl, "", 0.0, 1),
            rec("b", Group::NegCtrl, "", 0.0, 1),
            rec("c", Group::Treated, "cmp1", round_concentration(0.316227766), 3),
        ];
        let t = text(&rs);
        assert!(t.starts_with("well_id,cell_line,group,compound,concentration_um,replicate,image_path\n"));
        assert!(t.contains(",0.316228,"));
        assert_eq!(parse_manifest(&t, None).unwrap(), rs);
    }

    #[test]
    fn treated_without_dose_is_rejected() {
        let t = text(&[rec("a", Group::PosCtrl, "", 0.0, 1), rec("b", Group::Treated, "cmp1", 0.0, 1)]);
        match parse_manifest(&t, None) {
            Err(ScreenError::Manifest { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = text(&[rec("a", Group::PosCtrl, "", 0.0, 1)]);
        assert!(parse_manifest(&t, Some(dir.path())).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_concentration(0.1), "0.1");
        assert_eq!(format_concentration(31.6227766), "31.6228");
        assert_eq!(format_concentration(1.0), "1");
        assert_eq!(format_concentration(0.0), "0");
        assert_eq!(format_concentration(1234567.0), "1234570");
    }
}
