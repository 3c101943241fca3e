//! Table ingestion and emission, and model persistence.

mod geojson;

pub use geojson::read_geojson;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, ClassifierRegistry};
use crate::error::{Error, Result};
use crate::model::{validate_table, BlockRecord, BlockTable, Imputation, Severity, N_SHARES};
use crate::morphology::ClusterModel;
use crate::sm::SmModel;

/// Input columns, in output order.
pub const COLUMNS: [&str; 13] = [
    "block_id",
    "x",
    "y",
    "share_residential",
    "share_recreation",
    "share_business",
    "share_industrial",
    "share_transport",
    "share_special",
    "share_agricultural",
    "site_area",
    "fsi",
    "gsi",
];

/// Share column names in [`crate::model::LandUse`] order.
pub fn share_columns() -> &'static [&'static str] {
    &COLUMNS[3..3 + N_SHARES]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    GeoJson,
}

impl TableFormat {
    /// `.geojson` and `.json` mean GeoJSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("geojson") | Some("json") => TableFormat::GeoJson,
            _ => TableFormat::Csv,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    let locus = e.position().map_or_else(|| "csv".to_string(), |p| format!("line {}", p.line()));
    Error::Parse { locus, message: e.to_string() }
}

/// Reads the CSV schema without validating the values.
pub fn read_csv<R: Read>(reader: R) -> Result<BlockTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let pos: Vec<Option<usize>> = COLUMNS.iter().map(|c| headers.iter().position(|h| h == *c)).collect();
    let missing: Vec<String> =
        COLUMNS.iter().zip(&pos).filter(|(_, p)| p.is_none()).map(|(c, _)| c.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(missing));
    }
    let pos: Vec<usize> = pos.into_iter().map(Option::unwrap).collect();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |c: usize| row.get(pos[c]).unwrap_or("");
        let num = |c: usize| -> Result<f64> {
            cell(c).parse::<f64>().map_err(|e| Error::Parse {
                locus: format!("line {line}, column {}", COLUMNS[c]),
                message: format!("`{}`: {e}", cell(c)),
            })
        };
        let opt = |c: usize| -> Result<Option<f64>> { if cell(c).is_empty() { Ok(None) } else { num(c).map(Some) } };
        let mut shares = [0.0; N_SHARES];
        for (s, slot) in shares.iter_mut().enumerate() {
            *slot = num(3 + s)?;
        }
        records.push(BlockRecord {
            id: cell(0).to_string(),
            centroid: (num(1)?, num(2)?),
            shares,
            site_area: num(10)?,
            fsi: opt(11)?,
            gsi: opt(12)?,
        });
    }
    Ok(BlockTable::new(records))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn record_fields(r: &BlockRecord) -> Vec<String> {
    let mut f = vec![r.id.clone(), r.centroid.0.to_string(), r.centroid.1.to_string()];
    f.extend(r.shares.iter().map(f64::to_string));
    f.push(r.site_area.to_string());
    f.push(fmt_opt(r.fsi));
    f.push(fmt_opt(r.gsi));
    f
}

/// Writes the CSV schema. Floats use the shortest round-trip form.
pub fn write_csv<W: Write>(table: &BlockTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS).map_err(csv_error)?;
    for r in table {
        w.write_record(record_fields(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Fails on hard violations; warnings go to the log.
pub fn check_table(table: &BlockTable) -> Result<()> {
    let violations = validate_table(table);
    let mut errors = Vec::new();
    for v in violations {
        match v.severity {
            Severity::Warning => log::warn!("block {}: {}: {}", v.block_id, v.field, v.message),
            Severity::Error => errors.push(format!("block {}: {}: {}", v.block_id, v.field, v.message)),
        }
    }
    if errors.is_empty() {
        return Ok(());
    }
    let n = errors.len();
    errors.truncate(5);
    let more = if n > 5 { format!(" (and {} more)", n - 5) } else { String::new() };
    Err(Error::InvalidTable(format!("{}{more}", errors.join("; "))))
}

pub fn load_table(path: &Path, format: TableFormat) -> Result<BlockTable> {
    let table = match format {
        TableFormat::Csv => read_csv(BufReader::new(File::open(path)?))?,
        TableFormat::GeoJson => read_geojson(&std::fs::read_to_string(path)?)?,
    };
    check_table(&table)?;
    Ok(table)
}

pub fn save_table(path: &Path, table: &BlockTable) -> Result<()> {
    write_csv(table, BufWriter::new(File::create(path)?))
}

/// Who produced an imputed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
}

/// Sidecar path: `<file>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Full table with imputed values filled plus `fsi_imputed_flag` and
/// `gsi_imputed_flag` columns.
pub fn write_imputed<W: Write>(table: &BlockTable, imputed: &Imputation, writer: W) -> Result<()> {
    for id in imputed.keys() {
        match table.get(id) {
            Some(r) if !r.is_complete() => {}
            Some(_) => return Err(Error::InvalidTable(format!("imputed block {id} has no missing target"))),
            None => return Err(Error::InvalidTable(format!("imputed block {id} is not in the table"))),
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.extend(["fsi_imputed_flag", "gsi_imputed_flag"]);
    w.write_record(&header).map_err(csv_error)?;
    for r in table {
        let mut out = r.clone();
        let (mut ff, mut gf) = (false, false);
        if let Some(p) = imputed.get(&r.id) {
            if r.fsi.is_none() {
                out.fsi = Some(p.fsi);
                ff = true;
            }
            if r.gsi.is_none() {
                out.gsi = Some(p.gsi);
                gf = true;
            }
        }
        let mut fields = record_fields(&out);
        fields.push(ff.to_string());
        fields.push(gf.to_string());
        w.write_record(&fields).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_imputed(path: &Path, table: &BlockTable, imputed: &Imputation, provenance: &Provenance) -> Result<()> {
    write_imputed(table, imputed, BufWriter::new(File::create(path)?))?;
    let meta = serde_json::to_string_pretty(provenance).expect("provenance serializes");
    std::fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

pub const MODEL_FORMAT: &str = "smimpute-model/1";

/// Persisted cluster model and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub clusters: ClusterModel,
    pub classifier_kind: String,
    pub classifier: serde_json::Value,
}

impl ModelDocument {
    pub fn from_model(model: &SmModel, config_hash: &str, seed: u64) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            config_hash: config_hash.into(),
            seed,
            clusters: model.clusters.clone(),
            classifier_kind: model.classifier.kind().into(),
            classifier: model.classifier.to_json(),
        }
    }

    pub fn into_model(self, config: &ClassifierConfig) -> Result<SmModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Parse { locus: "format".into(), message: format!("unsupported model format {}", self.format) });
        }
        let classifier = ClassifierRegistry::builtin(config).get(&self.classifier_kind)?.load(&self.classifier)?;
        if classifier.n_classes() != self.clusters.k {
            return Err(Error::KMismatch { proba: classifier.n_classes(), model: self.clusters.k });
        }
        Ok(SmModel { clusters: self.clusters, classifier })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| Error::Parse { locus: path.display().to_string(), message: e.to_string() })
    }
}
