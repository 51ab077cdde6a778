use std::collections::HashMap;
use std::io::{Read, Write};

use super::{AccuracyUnit, RunRecord, StoreError};

pub const CSV_HEADER: [&str; 16] = [
    "run_id",
    "model",
    "task",
    "dataset",
    "hardware",
    "gpu_count",
    "batch_size",
    "epochs",
    "data_fraction",
    "accuracy",
    "train_energy_kwh",
    "test_energy_kwh",
    "pretrain_energy_kwh",
    "gflops",
    "parameters_millions",
    "notes",
];

const OPTIONAL: [&str; 5] = [
    "test_energy_kwh",
    "pretrain_energy_kwh",
    "gflops",
    "parameters_millions",
    "notes",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the documented header followed by one row per record. Absent
/// optional values are empty cells; floats use shortest round-trip form.
pub fn export_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.run_id.clone(),
            r.model.clone(),
            r.task.clone(),
            r.dataset.clone(),
            r.hardware.clone(),
            r.gpu_count.to_string(),
            r.batch_size.to_string(),
            r.epochs.to_string(),
            r.data_fraction.to_string(),
            r.accuracy.to_string(),
            r.train_energy_kwh.to_string(),
            opt(r.test_energy_kwh),
            opt(r.pretrain_energy_kwh),
            opt(r.gflops),
            opt(r.parameters_millions),
            r.notes.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a HashMap<&'static str, usize>,
    row: usize,
}

impl Row<'_> {
    fn text(&self, column: &'static str) -> String {
        self.columns
            .get(column)
            .and_then(|&i| self.record.get(i))
            .unwrap_or("")
            .to_string()
    }

    fn err(&self, column: &str, message: impl Into<String>) -> StoreError {
        StoreError::CsvField {
            row: self.row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, column: &'static str) -> Result<T, StoreError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.text(column);
        raw.trim()
            .parse()
            .map_err(|e| self.err(column, format!("cannot parse `{raw}`: {e}")))
    }

    fn optional(&self, column: &'static str) -> Result<Option<f64>, StoreError> {
        let raw = self.text(column);
        let t = raw.trim();
        if t.is_empty() || t == "---" {
            Ok(None)
        } else {
            t.parse()
                .map(Some)
                .map_err(|e| self.err(column, format!("cannot parse `{raw}`: {e}")))
        }
    }
}

/// Reads records from a CSV document with the documented header.
///
/// Required columns must all be present; optional columns may be omitted.
/// Unknown columns are an error unless `lenient`. Empty cells and `---`
/// in optional columns mean "absent".
pub fn import_csv<R: Read>(input: R, lenient: bool, unit: AccuracyUnit) -> Result<Vec<RunRecord>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();

    let mut columns: HashMap<&'static str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        match CSV_HEADER.iter().find(|&&c| c == h.trim()) {
            Some(&c) => {
                if columns.insert(c, i).is_some() {
                    return Err(StoreError::Schema(format!("duplicate column `{c}`")));
                }
            }
            None if lenient => {}
            None => return Err(StoreError::Schema(format!("unknown column `{h}`"))),
        }
    }
    if let Some(missing) = CSV_HEADER
        .iter()
        .find(|c| !OPTIONAL.contains(c) && !columns.contains_key(*c))
    {
        return Err(StoreError::Schema(format!("missing required column `{missing}`")));
    }

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = Row {
            record: &rec,
            columns: &columns,
            row: i + 1,
        };
        let accuracy: f64 = row.parse("accuracy")?;
        let record = RunRecord {
            run_id: row.text("run_id"),
            model: row.text("model"),
            task: row.text("task"),
            dataset: row.text("dataset"),
            hardware: row.text("hardware"),
            gpu_count: row.parse("gpu_count")?,
            batch_size: row.parse("batch_size")?,
            epochs: row.parse("epochs")?,
            data_fraction: row.parse("data_fraction")?,
            accuracy: unit.normalize(accuracy),
            train_energy_kwh: row.parse("train_energy_kwh")?,
            test_energy_kwh: row.optional("test_energy_kwh")?,
            pretrain_energy_kwh: row.optional("pretrain_energy_kwh")?,
            gflops: row.optional("gflops")?,
            parameters_millions: row.optional("parameters_millions")?,
            notes: row.text("notes"),
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}
