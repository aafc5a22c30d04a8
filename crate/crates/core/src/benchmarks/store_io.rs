//! On-disk tabular stores: a directory holding `space.json` and `data.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkDescriptor, BenchmarkError, Row, Sentinel, TableStore};
use crate::configspace::{Configuration, Domain, FidelityPoint, HyperparameterSpec, Value};

pub const SPACE_FILE: &str = "space.json";
pub const DATA_FILE: &str = "data.csv";

#[derive(Serialize, Deserialize)]
struct StoreDocument {
    #[serde(flatten)]
    descriptor: BenchmarkDescriptor,
    seeds: Vec<u64>,
    sparse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentinel: Option<Sentinel>,
}

fn format_err(m: impl Into<String>) -> BenchmarkError {
    BenchmarkError::Format(m.into())
}

pub fn write_store(store: &TableStore, dir: &Path) -> Result<(), BenchmarkError> {
    fs::create_dir_all(dir)?;
    let doc = StoreDocument {
        descriptor: store.descriptor().clone(),
        seeds: store.seeds().to_vec(),
        sparse: store.is_sparse(),
        sentinel: store.sentinel(),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| format_err(e.to_string()))?;
    fs::write(dir.join(SPACE_FILE), json + "\n")?;

    let d = store.descriptor();
    let mut w = csv::Writer::from_path(dir.join(DATA_FILE)).map_err(|e| format_err(e.to_string()))?;
    let mut header = vec!["config_id".to_string()];
    header.extend(d.space.params().iter().map(|p| p.name().to_string()));
    header.extend(d.fidelity_space.dims().iter().map(|p| p.name().to_string()));
    header.push("seed".into());
    header.extend(d.metrics.iter().cloned());
    header.push("cost".into());
    w.write_record(&header).map_err(|e| format_err(e.to_string()))?;

    for ((ci, fi, si), row) in store.rows() {
        let mut rec = vec![ci.to_string()];
        let c = &store.configs()[ci];
        rec.extend(d.space.params().iter().map(|p| c.get(p.name()).map(Value::to_string).unwrap_or_default()));
        let f = &store.fidelities()[fi];
        rec.extend(
            d.fidelity_space
                .dims()
                .iter()
                .map(|p| f.get(p.name()).map(Value::to_string).unwrap_or_default()),
        );
        rec.push(store.seeds()[si].to_string());
        rec.extend(row.metrics.iter().map(f64::to_string));
        rec.push(row.cost.to_string());
        w.write_record(&rec).map_err(|e| format_err(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_value(spec: &HyperparameterSpec, s: &str) -> Result<Value, BenchmarkError> {
    let bad = || format_err(format!("cannot parse `{s}` for `{}`", spec.name()));
    match spec.domain() {
        Domain::Continuous { .. } => s.parse::<f64>().map(Value::Float).map_err(|_| bad()),
        Domain::Integer { .. } => s.parse::<i64>().map(Value::Int).map_err(|_| bad()),
        Domain::Categorical { choices } | Domain::Ordinal { choices } => {
            choices.iter().find(|c| c.to_string() == s).cloned().ok_or_else(bad)
        }
    }
}

pub fn read_store(dir: &Path) -> Result<TableStore, BenchmarkError> {
    let text = fs::read_to_string(dir.join(SPACE_FILE))?;
    let doc: StoreDocument = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    let d = doc.descriptor;
    let sentinel = match (doc.sparse, doc.sentinel) {
        (true, s) => Some(s.unwrap_or_default()),
        (false, _) => None,
    };

    let mut r = csv::Reader::from_path(dir.join(DATA_FILE)).map_err(|e| format_err(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut expected = vec!["config_id".to_string()];
    expected.extend(d.space.params().iter().map(|p| p.name().to_string()));
    expected.extend(d.fidelity_space.dims().iter().map(|p| p.name().to_string()));
    expected.push("seed".into());
    expected.extend(d.metrics.iter().cloned());
    expected.push("cost".into());
    if header != expected {
        return Err(format_err(format!("unexpected header {header:?}, want {expected:?}")));
    }

    let np = d.space.len();
    let nf = d.fidelity_space.dims().len();
    let nm = d.metrics.len();
    let mut configs: Vec<Option<Configuration>> = Vec::new();
    let mut fidelities: Vec<FidelityPoint> = Vec::new();
    let mut raw_rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| format_err("short row"));
        let ci: usize = field(0)?.parse().map_err(|_| format_err("bad config_id"))?;
        let mut config = Configuration::new();
        for (j, p) in d.space.params().iter().enumerate() {
            config.insert(p.name(), parse_value(p, field(1 + j)?)?);
        }
        let mut fid = FidelityPoint::default();
        for (j, p) in d.fidelity_space.dims().iter().enumerate() {
            fid.insert(p.name(), parse_value(p, field(1 + np + j)?)?);
        }
        let seed: u64 = field(1 + np + nf)?.parse().map_err(|_| format_err("bad seed"))?;
        let metrics = (0..nm)
            .map(|j| field(2 + np + nf + j)?.parse::<f64>().map_err(|_| format_err("bad metric")))
            .collect::<Result<Vec<_>, _>>()?;
        let cost: f64 = field(2 + np + nf + nm)?.parse().map_err(|_| format_err("bad cost"))?;

        if configs.len() <= ci {
            configs.resize(ci + 1, None);
        }
        match &configs[ci] {
            Some(existing) if *existing != config => {
                return Err(format_err(format!("config_id {ci} has conflicting values")))
            }
            Some(_) => {}
            None => configs[ci] = Some(config),
        }
        let fi = match fidelities.iter().position(|f| *f == fid) {
            Some(i) => i,
            None => {
                fidelities.push(fid);
                fidelities.len() - 1
            }
        };
        let si = doc
            .seeds
            .iter()
            .position(|s| *s == seed)
            .ok_or(BenchmarkError::UnknownSeed(seed))?;
        raw_rows.push(((ci, fi, si), Row { metrics, cost }));
    }

    let configs = configs
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| format_err(format!("config_id {i} has no rows"))))
        .collect::<Result<Vec<_>, _>>()?;

    // fidelity indices follow the fidelity order, not first appearance
    let mut order: Vec<usize> = (0..fidelities.len()).collect();
    order.sort_by(|&a, &b| fidelities[a].compare(&fidelities[b]));
    let mut remap = vec![0; fidelities.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let fidelities: Vec<FidelityPoint> = order.iter().map(|&i| fidelities[i].clone()).collect();
    let rows = raw_rows.into_iter().map(|((c, f, s), r)| ((c, remap[f], s), r));

    TableStore::new(d, configs, fidelities, doc.seeds, rows, sentinel)
}
