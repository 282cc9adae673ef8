//! Delimited text formats for items, responses, fitted parameters and reports.
//!
//! Times are read in seconds and stored as natural logs. The infinite-α
//! sentinel is written as `inf`.

use crate::error::{OrfError, Result};
use crate::fit::{Diagnostics, FitResult, Method};
use crate::model::{
    mean_count, mean_logtime, mean_time, var_count, var_logtime, var_time, Dataset, Individual, ItemParams,
    ItemSpec, LatentPair, PopulationParams, Response,
};
use crate::mom::compute_moments;
use crate::scoring::{PredictionReport, ScoreRow, ScoreTable};
use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

pub const ITEMS_HEADER: [&str; 2] = ["item_id", "n_words"];
pub const RESPONSES_HEADER: [&str; 4] = ["individual_id", "item_id", "words_correct", "time_seconds"];
pub const FIT_HEADER: [&str; 6] = ["item_id", "n_words", "a", "b", "alpha", "beta"];
pub const POPULATION_HEADER: [&str; 3] = ["sigma2_tau", "sigma_theta_tau", "correlation"];

fn csv_err(path: &Path, e: csv::Error) -> OrfError {
    match e.kind() {
        csv::ErrorKind::Io(_) => OrfError::Io(format!("{}: {e}", path.display())),
        _ => OrfError::InvalidData(format!("{}: {e}", path.display())),
    }
}

fn open_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file);
    let found = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(OrfError::InvalidData(format!("{} is empty", path.display())));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(OrfError::InvalidData(format!(
            "{}: expected header {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(reader)
}

/// Each data row with its 1-based line number, checked for the column count.
fn rows(path: &Path, reader: &mut csv::Reader<File>, width: usize) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(OrfError::InvalidData(format!(
                "{} line {line}: expected {width} fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    rec[col].parse().map_err(|_| {
        OrfError::InvalidData(format!("{} line {line}: cannot parse {name} from {:?}", path.display(), &rec[col]))
    })
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn read_items(path: &Path) -> Result<Vec<ItemSpec>> {
    let mut reader = open_reader(path, &ITEMS_HEADER)?;
    let mut items: Vec<ItemSpec> = Vec::new();
    for (line, rec) in rows(path, &mut reader, 2)? {
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(OrfError::InvalidData(format!("{} line {line}: empty item_id", path.display())));
        }
        let n_words: u32 = field(path, line, &rec, 1, "n_words")?;
        if n_words == 0 {
            return Err(OrfError::InvalidData(format!("{} line {line}: n_words must be at least 1", path.display())));
        }
        if items.iter().any(|i| i.id == id) {
            return Err(OrfError::InvalidData(format!("{} line {line}: duplicate item_id {id}", path.display())));
        }
        items.push(ItemSpec { id, n_words });
    }
    if items.is_empty() {
        return Err(OrfError::InvalidData(format!("{} lists no items", path.display())));
    }
    Ok(items)
}

/// Individuals appear in order of their first row.
pub fn read_responses(path: &Path, items: &[ItemSpec]) -> Result<Dataset> {
    let mut reader = open_reader(path, &RESPONSES_HEADER)?;
    let index: HashMap<&str, usize> = items.iter().enumerate().map(|(k, i)| (i.id.as_str(), k)).collect();
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<Response>> = HashMap::new();
    for (line, rec) in rows(path, &mut reader, 4)? {
        let person = rec[0].to_string();
        if person.is_empty() {
            return Err(OrfError::InvalidData(format!("{} line {line}: empty individual_id", path.display())));
        }
        let item = *index.get(&rec[1]).ok_or_else(|| {
            OrfError::InvalidData(format!("{} line {line}: unknown item_id {}", path.display(), &rec[1]))
        })?;
        let count: u32 = field(path, line, &rec, 2, "words_correct")?;
        if count > items[item].n_words {
            return Err(OrfError::InvalidData(format!(
                "{} line {line}: words_correct {count} exceeds {} words of item {}",
                path.display(),
                items[item].n_words,
                items[item].id
            )));
        }
        let seconds: f64 = field(path, line, &rec, 3, "time_seconds")?;
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(OrfError::InvalidData(format!(
                "{} line {line}: time_seconds must be positive, got {seconds}",
                path.display()
            )));
        }
        let list = by_id.entry(person.clone()).or_insert_with(|| {
            order.push(person.clone());
            Vec::new()
        });
        if list.iter().any(|r| r.item == item) {
            return Err(OrfError::InvalidData(format!(
                "{} line {line}: second row for individual {person} and item {}",
                path.display(),
                items[item].id
            )));
        }
        list.push(Response { item, count, log_time: seconds.ln() });
    }
    let individuals = order
        .into_iter()
        .map(|id| {
            let responses = by_id.remove(&id).unwrap_or_default();
            Individual::new(id, responses)
        })
        .collect();
    Dataset::new(items.to_vec(), individuals)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))
}

pub fn write_items(path: &Path, items: &[ItemSpec]) -> Result<()> {
    write_rows(path, &ITEMS_HEADER, items.iter().map(|i| vec![i.id.clone(), i.n_words.to_string()]))
}

pub fn write_responses(path: &Path, data: &Dataset) -> Result<()> {
    let rows = data.individuals().iter().flat_map(|p| {
        p.responses.iter().map(move |r| {
            vec![p.id.clone(), data.items()[r.item].id.clone(), r.count.to_string(), fmt(r.log_time.exp())]
        })
    });
    write_rows(path, &RESPONSES_HEADER, rows)
}

pub fn write_latents(path: &Path, data: &Dataset, latents: &[LatentPair]) -> Result<()> {
    write_rows(
        path,
        &["individual_id", "theta", "tau"],
        data.individuals().iter().zip(latents).map(|(p, l)| vec![p.id.clone(), fmt(l.theta), fmt(l.tau)]),
    )
}

pub fn read_latents(path: &Path) -> Result<Vec<(String, LatentPair)>> {
    let mut reader = open_reader(path, &["individual_id", "theta", "tau"])?;
    rows(path, &mut reader, 3)?
        .into_iter()
        .map(|(line, rec)| {
            Ok((
                rec[0].to_string(),
                LatentPair { theta: field(path, line, &rec, 1, "theta")?, tau: field(path, line, &rec, 2, "tau")? },
            ))
        })
        .collect()
}

/// Writes `fit.csv` and `population.csv` into `dir`.
pub fn write_params(dir: &Path, item_ids: &[String], items: &[ItemParams], pop: &PopulationParams) -> Result<()> {
    write_rows(
        &dir.join("fit.csv"),
        &FIT_HEADER,
        item_ids.iter().zip(items).map(|(id, it)| {
            vec![id.clone(), it.n_words.to_string(), fmt(it.a), fmt(it.b), fmt(it.alpha), fmt(it.beta)]
        }),
    )?;
    write_rows(
        &dir.join("population.csv"),
        &POPULATION_HEADER,
        [vec![fmt(pop.sigma2_tau), fmt(pop.sigma_theta_tau), fmt(pop.correlation())]],
    )
}

/// Reads `fit.csv` and `population.csv` from `dir`. The method is taken
/// from `diagnostics.txt` when present and defaults to MCEM otherwise.
pub fn read_fit(dir: &Path) -> Result<FitResult> {
    let fit_path = dir.join("fit.csv");
    let mut reader = open_reader(&fit_path, &FIT_HEADER)?;
    let mut item_ids = Vec::new();
    let mut items = Vec::new();
    for (line, rec) in rows(&fit_path, &mut reader, 6)? {
        item_ids.push(rec[0].to_string());
        let item = ItemParams::new(
            field(&fit_path, line, &rec, 2, "a")?,
            field(&fit_path, line, &rec, 3, "b")?,
            field(&fit_path, line, &rec, 4, "alpha")?,
            field(&fit_path, line, &rec, 5, "beta")?,
            field(&fit_path, line, &rec, 1, "n_words")?,
        )
        .map_err(|e| OrfError::InvalidData(format!("{} line {line}: {e}", fit_path.display())))?;
        items.push(item);
    }
    let pop_path = dir.join("population.csv");
    let mut reader = open_reader(&pop_path, &POPULATION_HEADER)?;
    let pop_rows = rows(&pop_path, &mut reader, 3)?;
    let (line, rec) = match pop_rows.as_slice() {
        [one] => one,
        _ => return Err(OrfError::InvalidData(format!("{} must contain exactly one row", pop_path.display()))),
    };
    let pop = PopulationParams::new(
        field(&pop_path, *line, rec, 0, "sigma2_tau")?,
        field(&pop_path, *line, rec, 1, "sigma_theta_tau")?,
    )
    .map_err(|e| OrfError::InvalidData(format!("{}: {e}", pop_path.display())))?;

    let mut method = Method::Mcem;
    if let Ok(text) = std::fs::read_to_string(dir.join("diagnostics.txt")) {
        if let Some(m) = text.lines().find_map(|l| l.strip_prefix("method: ")) {
            method = m.trim().parse().map_err(OrfError::InvalidData)?;
        }
    }
    Ok(FitResult { method, item_ids, items, pop, diagnostics: Diagnostics::default() })
}

pub fn write_trace(path: &Path, fit: &FitResult) -> Result<()> {
    let mut header: Vec<String> =
        ["iteration", "draws", "observed_loglik", "q_before", "q_after", "ascent_se", "sigma2_tau", "sigma_theta_tau"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    for id in &fit.item_ids {
        for p in ["a", "b", "alpha", "beta"] {
            header.push(format!("{p}_{id}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = fit.diagnostics.trace.iter().map(|row| {
        let mut v = vec![
            row.iteration.to_string(),
            row.draws.to_string(),
            fmt(row.observed_loglik),
            fmt(row.q_before),
            fmt(row.q_after),
            fmt(row.ascent_se),
            fmt(row.pop.sigma2_tau),
            fmt(row.pop.sigma_theta_tau),
        ];
        for it in &row.items {
            v.extend([fmt(it.a), fmt(it.b), fmt(it.alpha), fmt(it.beta)]);
        }
        v
    });
    write_rows(path, &header_refs, rows)
}

pub fn write_diagnostics(path: &Path, fit: &FitResult) -> Result<()> {
    let d = &fit.diagnostics;
    let mut text = format!("method: {}\n", fit.method.as_str());
    if let Some(ll) = d.observed_loglik {
        text.push_str(&format!("observed_loglik: {ll}\n"));
    }
    if fit.method == Method::Mcem {
        text.push_str(&format!("iterations: {}\nconverged: {}\n", d.trace.len(), d.converged));
    }
    for flag in &d.flags {
        text.push_str(&format!("flag: {flag}\n"));
    }
    std::fs::write(path, text).map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))
}

pub const MOMENTS_HEADER: [&str; 16] = [
    "item_id",
    "n_words",
    "n_obs",
    "missing_rate",
    "count_mean_sample",
    "count_sd_sample",
    "count_mean_model",
    "count_sd_model",
    "time_mean_sample",
    "time_sd_sample",
    "time_mean_model",
    "time_sd_model",
    "logtime_mean_sample",
    "logtime_sd_sample",
    "logtime_mean_model",
    "logtime_sd_model",
];

/// Sample versus model-implied item moments, on the count, raw-time and
/// log-time scales.
pub fn write_moments(path: &Path, data: &Dataset, fit: &FitResult) -> Result<()> {
    let sample = compute_moments(data)?;
    let missing = data.missing_rates();
    let mut rows = Vec::new();
    for (k, spec) in data.items().iter().enumerate() {
        let times: Vec<f64> = data
            .individuals()
            .iter()
            .filter_map(|p| p.response(k).map(|r| r.log_time.exp()))
            .collect();
        let n = times.len() as f64;
        let tbar = times.iter().sum::<f64>() / n;
        let ts = (times.iter().map(|t| (t - tbar).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let m = &sample.items[k];
        let it = &fit.items[k];
        rows.push(vec![
            spec.id.clone(),
            spec.n_words.to_string(),
            m.n.to_string(),
            fmt(missing[k]),
            fmt(m.ybar),
            fmt(m.s2_y.sqrt()),
            fmt(mean_count(it)),
            fmt(var_count(it).sqrt()),
            fmt(tbar),
            fmt(ts),
            fmt(mean_time(it, &fit.pop)),
            fmt(var_time(it, &fit.pop).sqrt()),
            fmt(m.tbar),
            fmt(m.s2_t.sqrt()),
            fmt(mean_logtime(it)),
            fmt(var_logtime(it, &fit.pop).sqrt()),
        ]);
    }
    write_rows(path, &MOMENTS_HEADER, rows)
}

pub fn write_scores(path: &Path, scores: &ScoreTable) -> Result<()> {
    write_rows(
        path,
        &["individual_id", "theta_hat", "tau_hat", "m", "seed"],
        scores.rows.iter().map(|r| {
            vec![r.id.clone(), fmt(r.theta_hat), fmt(r.tau_hat), scores.m.to_string(), scores.seed.to_string()]
        }),
    )
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let mut reader = open_reader(path, &["individual_id", "theta_hat", "tau_hat", "m", "seed"])?;
    let mut table = ScoreTable { rows: Vec::new(), m: 0, seed: 0 };
    for (line, rec) in rows(path, &mut reader, 5)? {
        table.rows.push(ScoreRow {
            id: rec[0].to_string(),
            theta_hat: field(path, line, &rec, 1, "theta_hat")?,
            tau_hat: field(path, line, &rec, 2, "tau_hat")?,
        });
        table.m = field(path, line, &rec, 3, "m")?;
        table.seed = field(path, line, &rec, 4, "seed")?;
    }
    Ok(table)
}

pub fn write_predictions(path: &Path, report: &PredictionReport) -> Result<()> {
    write_rows(
        path,
        &[
            "item_id",
            "n_eval",
            "rspe0_count",
            "rspe1_count",
            "rel_decrease_count",
            "rspe0_time",
            "rspe1_time",
            "rel_decrease_time",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.item_id.clone(),
                r.n_eval.to_string(),
                fmt(r.rspe0_count),
                fmt(r.rspe1_count),
                fmt(r.rel_decrease_count()),
                fmt(r.rspe0_time),
                fmt(r.rspe1_time),
                fmt(r.rel_decrease_time()),
            ]
        }),
    )
}
