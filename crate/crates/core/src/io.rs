//! File formats. Every index in a file is 1-based.
//!
//! * schema: JSON `{"entities": [{"name", "size"}], "views": [{"id", "row", "col"}]}`
//!   where `row`/`col` are entity names or ids
//! * collective matrices and observations: CSV `view,row,col,value`
//! * factors: CSV `entity,row,dim,value`
//! * plans: JSON `{"quotas", "total", "seed"}`
//! * solver config: JSON, `eta` is a number or `"auto"`
//! * solver history: CSV `iter,objective,gap,elapsed_ms`

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cmalgebra::CollectiveMatrix;
use crate::error::{Result, XmcError};
use crate::factorspace::FactorSet;
use crate::observation::{Noise, ObservationSet, SamplingPlan};
use crate::schema::{BasisIndex, CollectiveSchema, Entity, View};
use crate::solver::{IterRecord, SolverConfig};

pub const SEED_ENV: &str = "XMC_SEED";

/// Value of `XMC_SEED`, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| XmcError::Parse(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(XmcError::Parse(format!("{SEED_ENV}: {e}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum EntityRef {
    Id(usize),
    Name(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewFile {
    id: usize,
    row: EntityRef,
    col: EntityRef,
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    entities: Vec<Entity>,
    views: Vec<ViewFile>,
}

pub fn schema_from_json(text: &str) -> Result<CollectiveSchema> {
    let file: SchemaFile = serde_json::from_str(text)?;
    let resolve = |r: &EntityRef, view: usize| -> Result<usize> {
        match r {
            EntityRef::Id(0) => Err(XmcError::Parse(format!("view {view}: entity ids start at 1"))),
            EntityRef::Id(k) => Ok(k - 1),
            EntityRef::Name(name) => file
                .entities
                .iter()
                .position(|e| &e.name == name)
                .ok_or_else(|| XmcError::Parse(format!("view {view}: unknown entity {name:?}"))),
        }
    };
    let mut views: Vec<&ViewFile> = file.views.iter().collect();
    views.sort_by_key(|v| v.id);
    for (i, v) in views.iter().enumerate() {
        if v.id != i + 1 {
            return Err(XmcError::Parse(format!(
                "view ids must be 1..={} without gaps or repeats",
                views.len()
            )));
        }
    }
    let views = views
        .iter()
        .map(|v| {
            Ok(View {
                row: resolve(&v.row, v.id)?,
                col: resolve(&v.col, v.id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CollectiveSchema::new(file.entities, views)
}

pub fn schema_to_json(schema: &CollectiveSchema) -> Result<String> {
    let file = SchemaFile {
        entities: schema.entities().to_vec(),
        views: schema
            .views()
            .iter()
            .enumerate()
            .map(|(v, view)| ViewFile {
                id: v + 1,
                row: EntityRef::Name(schema.entities()[view.row].name.clone()),
                col: EntityRef::Name(schema.entities()[view.col].name.clone()),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn read_schema(path: impl AsRef<Path>) -> Result<CollectiveSchema> {
    schema_from_json(&read_to_string(path)?)
}

pub fn write_schema(schema: &CollectiveSchema, path: impl AsRef<Path>) -> Result<()> {
    write_string(path, &schema_to_json(schema)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    view: usize,
    row: usize,
    col: usize,
    value: f64,
}

fn parse_cells<R: Read>(schema: &CollectiveSchema, reader: R) -> Result<Vec<(BasisIndex, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.deserialize::<CellRecord>().enumerate() {
        let rec = rec?;
        if rec.view == 0 || rec.row == 0 || rec.col == 0 {
            return Err(XmcError::Parse(format!("record {}: indices are 1-based", line + 1)));
        }
        if !rec.value.is_finite() {
            return Err(XmcError::Parse(format!("record {}: non-finite value", line + 1)));
        }
        let idx = BasisIndex::new(rec.view - 1, rec.row - 1, rec.col - 1);
        schema.check_index(idx)?;
        out.push((idx, rec.value));
    }
    Ok(out)
}

fn write_cells<W: Write>(writer: W, cells: impl Iterator<Item = (BasisIndex, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (idx, value) in cells {
        w.serialize(CellRecord {
            view: idx.view + 1,
            row: idx.row + 1,
            col: idx.col + 1,
            value,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Missing cells read as 0; a repeated cell keeps its last value.
pub fn read_collective<R: Read>(schema: Arc<CollectiveSchema>, reader: R) -> Result<CollectiveMatrix> {
    let cells = parse_cells(&schema, reader)?;
    let mut m = CollectiveMatrix::zeros(schema);
    for (idx, v) in cells {
        m.set(idx, v);
    }
    Ok(m)
}

pub fn write_collective<W: Write>(m: &CollectiveMatrix, writer: W) -> Result<()> {
    write_cells(writer, m.schema().basis_indices().map(|idx| (idx, m.get(idx))))
}

/// Duplicates are kept as separate observations.
pub fn read_observations<R: Read>(schema: Arc<CollectiveSchema>, reader: R, noise: Noise) -> Result<ObservationSet> {
    let cells = parse_cells(&schema, reader)?;
    ObservationSet::new(schema, cells, noise)
}

pub fn write_observations<W: Write>(obs: &ObservationSet, writer: W) -> Result<()> {
    write_cells(writer, obs.entries().iter().copied())
}

#[derive(Debug, Serialize, Deserialize)]
struct FactorRecord {
    entity: usize,
    row: usize,
    dim: usize,
    value: f64,
}

/// The rank is the largest `dim` present unless given; missing entries are 0.
pub fn read_factors<R: Read>(schema: Arc<CollectiveSchema>, reader: R, rank: Option<usize>) -> Result<FactorSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let records = rdr.deserialize::<FactorRecord>().collect::<std::result::Result<Vec<_>, _>>()?;
    let r = rank.unwrap_or_else(|| records.iter().map(|r| r.dim).max().unwrap_or(0));
    if r == 0 {
        return Err(XmcError::Parse("factor file has no entries and no rank was given".into()));
    }
    let mut factors: Vec<DMatrix<f64>> = (0..schema.num_entities())
        .map(|k| DMatrix::zeros(schema.size(k), r))
        .collect();
    for (line, rec) in records.iter().enumerate() {
        let bad = rec.entity == 0
            || rec.entity > schema.num_entities()
            || rec.row == 0
            || rec.row > schema.size(rec.entity - 1)
            || rec.dim == 0
            || rec.dim > r;
        if bad {
            return Err(XmcError::IndexOutOfRange(format!(
                "factor record {}: ({}, {}, {})",
                line + 1,
                rec.entity,
                rec.row,
                rec.dim
            )));
        }
        factors[rec.entity - 1][(rec.row - 1, rec.dim - 1)] = rec.value;
    }
    FactorSet::new(schema, r, factors)
}

pub fn write_factors<W: Write>(f: &FactorSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (k, u) in f.factors().iter().enumerate() {
        for i in 0..u.nrows() {
            for d in 0..u.ncols() {
                w.serialize(FactorRecord {
                    entity: k + 1,
                    row: i + 1,
                    dim: d + 1,
                    value: u[(i, d)],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    quotas: Vec<f64>,
    total: usize,
    #[serde(default)]
    seed: u64,
}

pub fn plan_from_json(schema: Arc<CollectiveSchema>, text: &str) -> Result<SamplingPlan> {
    let p: PlanFile = serde_json::from_str(text)?;
    SamplingPlan::new(schema, p.quotas, p.total, p.seed)
}

pub fn plan_to_json(plan: &SamplingPlan) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PlanFile {
        quotas: plan.quotas().to_vec(),
        total: plan.total(),
        seed: plan.seed(),
    })?)
}

/// Solver config; `eta` may be a positive number, `"auto"`, or absent (auto).
pub fn solver_config_from_json(text: &str) -> Result<SolverConfig> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| XmcError::Parse("solver config must be a JSON object".into()))?;
    let eta = match obj.remove("eta") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s == "auto" => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(other) => {
            return Err(XmcError::Parse(format!("eta must be a number or \"auto\", got {other}")));
        }
    };
    let mut cfg: SolverConfig = serde_json::from_value(value)?;
    cfg.eta = eta;
    cfg.validate()?;
    Ok(cfg)
}

pub fn solver_config_to_json(cfg: &SolverConfig) -> Result<String> {
    let mut value = serde_json::to_value(cfg)?;
    if cfg.eta.is_none() {
        value["eta"] = Value::String("auto".into());
    }
    Ok(serde_json::to_string_pretty(&value)?)
}

#[derive(Serialize)]
struct HistoryRecord {
    iter: usize,
    objective: f64,
    gap: Option<f64>,
    elapsed_ms: f64,
}

pub fn write_history<W: Write>(history: &[IterRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for h in history {
        w.serialize(HistoryRecord {
            iter: h.iter,
            objective: h.objective,
            gap: h.gap,
            elapsed_ms: h.elapsed_ms,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes any rows with a header derived from field names.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `key,value` CSV.
pub fn write_key_values<W: Write>(rows: &[(String, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let mut s = String::new();
    File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn write_string(path: impl AsRef<Path>, s: &str) -> Result<()> {
    std::fs::write(path, s)?;
    Ok(())
}
