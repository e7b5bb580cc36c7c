//! CSV and JSON exchange formats for joint heat distributions.
//!
//! CSV: header `Q_1,...,Q_N,probability,Q_1_exact,...,Q_N_exact`. Heats are
//! 12-significant-digit decimals, probabilities the shortest decimal that
//! round-trips, exact columns `"num/den"`. Readers accept files without the
//! exact columns if given a spectrum to snap decimals onto.
//!
//! JSON: `{"direction", "collisions", "entries": [{"heats", "probability"}],
//! "pruned", "pruned_mass"}` with heats as exact strings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat::{Direction, HeatTuple, JointHeatDistribution};
use crate::rational::Rational;
use crate::spectrum::Spectrum;

pub const DECIMAL_DIGITS: usize = 12;
/// Largest gap between a decimal heat and the exact level difference it is
/// snapped to.
pub const SNAP_TOLERANCE: f64 = 1e-9;

pub fn write_csv<W: Write>(dist: &JointHeatDistribution, out: W) -> Result<()> {
    let n = dist.collisions();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|i| format!("Q_{i}")).collect();
    header.push("probability".into());
    header.extend((1..=n).map(|i| format!("Q_{i}_exact")));
    w.write_record(&header)?;
    for (key, p) in dist.iter() {
        let mut row: Vec<String> = key.values().iter().map(|q| q.to_decimal(DECIMAL_DIGITS)).collect();
        row.push(p.to_string());
        row.extend(key.values().iter().map(|q| q.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn snap(x: f64, candidates: &[Rational]) -> Option<Rational> {
    candidates
        .iter()
        .map(|c| (c, (c.to_f64() - x).abs()))
        .filter(|(_, d)| *d <= SNAP_TOLERANCE)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| *c)
}

/// Reads a CSV export. `snap_to` supplies the system spectrum whose level
/// differences decimal-only files are matched against.
pub fn read_csv<R: Read>(input: R, direction: Direction, snap_to: Option<&Spectrum>) -> Result<JointHeatDistribution> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let prob_col = header
        .iter()
        .position(|h| h == "probability")
        .ok_or_else(|| Error::Parse("CSV header has no `probability` column".into()))?;
    let n = prob_col;
    for (i, h) in header[..n].iter().enumerate() {
        if *h != format!("Q_{}", i + 1) {
            return Err(Error::Parse(format!("CSV column {} should be Q_{}, found {h:?}", i + 1, i + 1)));
        }
    }
    let exact = match header.len() - n - 1 {
        0 => false,
        extra if extra == n && header[n + 1..].iter().enumerate().all(|(i, h)| *h == format!("Q_{}_exact", i + 1)) => true,
        _ => return Err(Error::Parse(format!("unexpected CSV columns after `probability`: {:?}", &header[n + 1..]))),
    };
    let candidates = match (exact, snap_to) {
        (true, _) => Vec::new(),
        (false, Some(s)) => s.differences(),
        (false, None) => return Err(Error::Parse("CSV has no exact heat columns and no spectrum to snap decimals onto".into())),
    };

    let mut masses = BTreeMap::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let field = |k: usize| record.get(k).unwrap_or("");
        let heats = (0..n)
            .map(|i| {
                if exact {
                    field(n + 1 + i).parse::<Rational>()
                } else {
                    let x: f64 = field(i).parse().map_err(|_| Error::Parse(format!("row {row}: bad decimal {:?}", field(i))))?;
                    snap(x, &candidates).ok_or_else(|| Error::Parse(format!("row {row}: heat {x} is not a level difference")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let p: f64 = field(prob_col)
            .parse()
            .map_err(|_| Error::Parse(format!("row {row}: bad probability {:?}", field(prob_col))))?;
        let key = HeatTuple(heats);
        if masses.insert(key.clone(), p).is_some() {
            return Err(Error::Parse(format!("row {row}: duplicate heat tuple {key:?}")));
        }
    }
    JointHeatDistribution::from_masses(direction, n, masses)
}

#[derive(Serialize, Deserialize)]
struct JsonEntry {
    heats: Vec<String>,
    probability: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonDistribution {
    direction: Direction,
    collisions: usize,
    entries: Vec<JsonEntry>,
    #[serde(default)]
    pruned: Vec<Vec<String>>,
    #[serde(default)]
    pruned_mass: f64,
}

fn strings(key: &HeatTuple) -> Vec<String> {
    key.values().iter().map(|q| q.to_string()).collect()
}

fn parse_key(heats: &[String]) -> Result<HeatTuple> {
    Ok(HeatTuple(heats.iter().map(|s| s.parse()).collect::<Result<_>>()?))
}

pub fn write_json<W: Write>(dist: &JointHeatDistribution, mut out: W) -> Result<()> {
    let doc = JsonDistribution {
        direction: dist.direction(),
        collisions: dist.collisions(),
        entries: dist
            .iter()
            .map(|(k, p)| JsonEntry {
                heats: strings(k),
                probability: p,
            })
            .collect(),
        pruned: dist.pruned_keys().map(strings).collect(),
        pruned_mass: dist.pruned_mass(),
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<JointHeatDistribution> {
    let doc: JsonDistribution = serde_json::from_reader(input)?;
    let mut entries = BTreeMap::new();
    for e in &doc.entries {
        let key = parse_key(&e.heats)?;
        if entries.insert(key.clone(), e.probability).is_some() {
            return Err(Error::Parse(format!("duplicate heat tuple {key:?}")));
        }
    }
    let pruned = doc.pruned.iter().map(|k| parse_key(k)).collect::<Result<BTreeSet<_>>>()?;
    JointHeatDistribution::from_parts(doc.direction, doc.collisions, entries, pruned, doc.pruned_mass)
}
