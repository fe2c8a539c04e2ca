//! CSV ingestion.
//!
//! Every loaded table carries a stable sample id per row: the value of the
//! configured id column, or the zero-based data row position otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};
use topoproj::Dataset;

use crate::error::{Error, Result};

/// Features, optional targets and sample ids for the same rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub ids: Vec<usize>,
    pub features: Dataset,
    pub targets: Option<Dataset>,
}

impl LabeledTable {
    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn targets(&self) -> Result<&Dataset> {
        self.targets.as_ref().ok_or_else(|| Error::Config("table has no target columns".into()))
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            features: self.features.select_rows(idx),
            targets: self.targets.as_ref().map(|t| t.select_rows(idx)),
        }
    }

    /// Rows reordered by ascending sample id.
    pub fn sorted_by_id(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.n_rows()).collect();
        idx.sort_by_key(|&i| self.ids[i]);
        self.select(&idx)
    }

    pub fn without_targets(&self) -> Self {
        Self { ids: self.ids.clone(), features: self.features.clone(), targets: None }
    }
}

/// Column selection for a generic CSV file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Feature columns; `None` means every column not otherwise claimed.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default)]
    pub target_columns: Vec<String>,
    #[serde(default)]
    pub id_column: Option<String>,
    /// Columns to skip; names absent from the file are fine.
    #[serde(default)]
    pub ignore_columns: Vec<String>,
}

fn parse_cell(path: &Path, line: u64, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: format!("not a number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
            message: format!("non-finite value {raw:?}"),
        });
    }
    Ok(v)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<LabeledTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema { path: path.to_path_buf(), message: format!("missing column {name:?}") })
    };
    let targets: Vec<usize> = schema.target_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let id_col = schema.id_column.as_deref().map(find).transpose()?;
    let ignored: Vec<usize> = schema.ignore_columns.iter().filter_map(|c| header.iter().position(|h| h == c)).collect();
    let features: Vec<usize> = match &schema.feature_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => {
            (0..header.len()).filter(|i| !targets.contains(i) && Some(*i) != id_col && !ignored.contains(i)).collect()
        }
    };
    if features.is_empty() {
        return Err(Error::Schema { path: path.to_path_buf(), message: "no feature columns".into() });
    }

    let mut fvals = Vec::new();
    let mut tvals = Vec::new();
    let mut ids = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row_idx as u64 + 2, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for &j in &features {
            fvals.push(parse_cell(path, line, &header[j], &record[j])?);
        }
        for &j in &targets {
            tvals.push(parse_cell(path, line, &header[j], &record[j])?);
        }
        ids.push(match id_col {
            Some(j) => record[j].trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: header[j].clone(),
                message: format!("sample id must be a non-negative integer, got {:?}", &record[j]),
            })?,
            None => row_idx,
        });
    }
    if ids.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let names = |cols: &[usize]| cols.iter().map(|&j| header[j].clone()).collect::<Vec<_>>();
    let features = Dataset::new(names(&features), fvals)?;
    let targets = if targets.is_empty() { None } else { Some(Dataset::new(names(&targets), tvals)?) };
    Ok(LabeledTable { ids, features, targets })
}

/// Target column of the appliance-energy data set.
pub const ENERGY_TARGET: &str = "Appliances";

/// The 27 input columns of the appliance-energy data set, in file order.
pub const ENERGY_FEATURES: [&str; 27] = [
    "lights",
    "T1",
    "RH_1",
    "T2",
    "RH_2",
    "T3",
    "RH_3",
    "T4",
    "RH_4",
    "T5",
    "RH_5",
    "T6",
    "RH_6",
    "T7",
    "RH_7",
    "T8",
    "RH_8",
    "T9",
    "RH_9",
    "T_out",
    "Press_mm_hg",
    "RH_out",
    "Windspeed",
    "Visibility",
    "Tdewpoint",
    "rv1",
    "rv2",
];

pub fn energy_schema() -> Schema {
    Schema {
        feature_columns: Some(ENERGY_FEATURES.iter().map(|s| s.to_string()).collect()),
        target_columns: vec![ENERGY_TARGET.to_string()],
        id_column: None,
        ignore_columns: vec!["date".to_string()],
    }
}

/// Loads the public appliance-energy CSV (`energydata_complete.csv`).
pub fn load_energy_dataset(path: impl AsRef<Path>) -> Result<LabeledTable> {
    load_csv(path, &energy_schema())
}

/// Writes `id, features..., targets...` with a header row.
pub fn write_table_csv(table: &LabeledTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(table.features.columns().iter().cloned());
    if let Some(t) = &table.targets {
        header.extend(t.columns().iter().cloned());
    }
    w.write_record(&header)?;
    for i in 0..table.n_rows() {
        let mut rec = vec![table.ids[i].to_string()];
        rec.extend(table.features.row(i).iter().map(f64::to_string));
        if let Some(t) = &table.targets {
            rec.extend(t.row(i).iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ds.columns())?;
    for r in ds.rows() {
        w.write_record(r.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    fn energy_header() -> String {
        let mut cols = vec!["\"date\"".to_string(), format!("\"{ENERGY_TARGET}\"")];
        cols.extend(ENERGY_FEATURES.iter().map(|c| format!("\"{c}\"")));
        cols.join(",")
    }

    fn energy_row(date: &str, target: f64) -> String {
        let mut cells = vec![format!("\"{date}\""), target.to_string()];
        cells.extend((0..27).map(|j| format!("{}.5", j)));
        cells.join(",")
    }

    #[test]
    fn header_only_energy_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", &format!("{}\n", energy_header()));
        assert!(matches!(load_energy_dataset(&p), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn energy_rows_parse_into_27_features() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "{}\n{}\n{}\n",
            energy_header(),
            energy_row("2016-01-11 17:00:00", 60.0),
            energy_row("2016-01-11 17:10:00", 50.0)
        );
        let t = load_energy_dataset(write(&dir, "e.csv", &text)).unwrap();
        assert_eq!(t.features.n_cols(), 27);
        assert_eq!(t.features.columns()[0], "lights");
        assert_eq!(t.targets().unwrap().values(), &[60.0, 50.0]);
        assert_eq!(t.ids, vec![0, 1]);
    }

    #[test]
    fn non_numeric_field_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut bad = energy_row("2016-01-11 17:10:00", 50.0);
        bad = bad.replacen("3.5", "oops", 1);
        let text = format!("{}\n{}\n{}\n", energy_header(), energy_row("2016-01-11 17:00:00", 60.0), bad);
        match load_energy_dataset(write(&dir, "e.csv", &text)) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "T2");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "date,Appliances\nx,1\n");
        assert!(matches!(load_energy_dataset(&p), Err(Error::Schema { .. })));
    }

    #[test]
    fn generic_schema_with_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "id,a,b,y\n7,1,2,3\n3,4,5,6\n");
        let schema = Schema { target_columns: vec!["y".into()], id_column: Some("id".into()), ..Default::default() };
        let t = load_csv(&p, &schema).unwrap();
        assert_eq!(t.ids, vec![7, 3]);
        assert_eq!(t.features.columns(), &["a".to_string(), "b".to_string()]);
        let s = t.sorted_by_id();
        assert_eq!(s.ids, vec![3, 7]);
        assert_eq!(s.features.row(0), &[4.0, 5.0]);

        let out = dir.path().join("round.csv");
        write_table_csv(&t, &out).unwrap();
        assert_eq!(load_csv(&out, &schema).unwrap(), t);
    }
}
