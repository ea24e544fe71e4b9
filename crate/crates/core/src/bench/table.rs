//! Results table: one row per controller plus run metadata.
//!
//! CSV layout: `# key=value` metadata lines, then [`RESULTS_HEADER`] and one
//! row per controller. Floats are written in shortest round-trip form so the
//! file parses back to an equal table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{io_err, BenchError};
use crate::sim::{parse_event_log, EpisodeResult};

pub const RESULTS_HEADER: &str = "controller,episodes,reached,failures,mean_delay_pct,SR,SP,MRP,stall_ticks";

/// Keys that must agree before two tables can be merged.
const PAIRING_KEYS: [&str; 5] = ["episode_hash", "seed", "episodes", "source", "grid"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub controller: String,
    pub episodes: u32,
    pub reached: u32,
    pub failures: u32,
    /// Mean over episodes that reached the goal; `None` if none did.
    pub mean_delay: Option<f64>,
    pub sr: u64,
    pub sp: u64,
    pub mrp: u64,
    pub stall_ticks: u64,
}

impl ResultRow {
    pub fn from_results<'a>(controller: String, results: impl IntoIterator<Item = &'a EpisodeResult>) -> Self {
        let mut row = ResultRow {
            controller,
            episodes: 0,
            reached: 0,
            failures: 0,
            mean_delay: None,
            sr: 0,
            sp: 0,
            mrp: 0,
            stall_ticks: 0,
        };
        let mut delay_sum = 0.0;
        for r in results {
            row.episodes += 1;
            match r.delay {
                Some(d) if r.reached_goal => {
                    row.reached += 1;
                    delay_sum += d;
                }
                _ => row.failures += 1,
            }
            row.sr += u64::from(r.sr);
            row.sp += u64::from(r.sp);
            row.mrp += u64::from(r.mrp);
            row.stall_ticks += u64::from(r.stall_ticks);
        }
        if row.reached > 0 {
            row.mean_delay = Some(delay_sum / f64::from(row.reached));
        }
        row
    }

    pub fn collisions(&self) -> u64 {
        self.sr + self.sp + self.mrp
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(BenchError::Table(format!("metadata entry {k:?} cannot be written")));
            }
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(RESULTS_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.controller.clone(),
                r.episodes.to_string(),
                r.reached.to_string(),
                r.failures.to_string(),
                r.mean_delay.map(|d| d.to_string()).unwrap_or_default(),
                r.sr.to_string(),
                r.sp.to_string(),
                r.mrp.to_string(),
                r.stall_ticks.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Table(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| BenchError::Table(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self, BenchError> {
        let mut table = ResultsTable::default();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .trim_start()
                    .split_once('=')
                    .ok_or_else(|| BenchError::Table(format!("bad metadata line {line:?}")))?;
                table.metadata.insert(k.to_string(), v.to_string());
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != RESULTS_HEADER {
            return Err(BenchError::Table(format!("unexpected header {:?}", header.join(","))));
        }
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<u64, BenchError> {
                rec[i].parse().map_err(|_| BenchError::Table(format!("column {}: bad count {:?}", i + 1, &rec[i])))
            };
            let small = |i: usize| -> Result<u32, BenchError> {
                u32::try_from(num(i)?).map_err(|_| BenchError::Table(format!("column {}: count too large", i + 1)))
            };
            let mean_delay = match &rec[4] {
                "" => None,
                d => Some(d.parse().map_err(|_| BenchError::Table(format!("bad delay {d:?}")))?),
            };
            table.rows.push(ResultRow {
                controller: rec[0].to_string(),
                episodes: small(1)?,
                reached: small(2)?,
                failures: small(3)?,
                mean_delay,
                sr: num(5)?,
                sp: num(6)?,
                mrp: num(7)?,
                stall_ticks: num(8)?,
            });
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        Self::from_csv(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "- {k}: `{v}`");
        }
        if !self.metadata.is_empty() {
            out.push('\n');
        }
        out.push_str("| controller | episodes | reached | failures | delay % | SR | SP | MRP | stall ticks |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let delay = r.mean_delay.map(|d| format!("{d:.2}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.controller.replace('|', "\\|"),
                r.episodes,
                r.reached,
                r.failures,
                delay,
                r.sr,
                r.sp,
                r.mrp,
                r.stall_ticks
            );
        }
        out
    }

    /// Appends `other`'s rows. Both tables must describe the same episode
    /// list; other differing metadata values are joined with `;`.
    pub fn merge(&mut self, other: &ResultsTable) -> Result<(), BenchError> {
        for key in PAIRING_KEYS {
            if let (Some(a), Some(b)) = (self.metadata.get(key), other.metadata.get(key)) {
                if a != b {
                    return Err(BenchError::Table(format!("cannot merge: `{key}` differs ({a} vs {b})")));
                }
            }
        }
        for (k, v) in &other.metadata {
            match self.metadata.get_mut(k) {
                Some(mine) if mine != v => {
                    mine.push(';');
                    mine.push_str(v);
                }
                Some(_) => {}
                None => {
                    self.metadata.insert(k.clone(), v.clone());
                }
            }
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }
}

/// Recomputes a benchmark directory's single results row from its event
/// logs and checks every number.
pub fn audit_results(dir: impl AsRef<Path>) -> Result<ResultRow, BenchError> {
    let dir = dir.as_ref();
    let table = ResultsTable::load(dir.join("results.csv"))?;
    let [row] = table.rows.as_slice() else {
        return Err(BenchError::Audit(format!("expected one row, found {}", table.rows.len())));
    };
    let log_dir = dir.join("logs");
    let mut paths: Vec<_> = fs::read_dir(&log_dir)
        .map_err(|e| io_err(&log_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut results = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        results.push(parse_event_log(&text)?.result);
    }
    let recomputed = ResultRow::from_results(row.controller.clone(), &results);
    let delay_ok = match (row.mean_delay, recomputed.mean_delay) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
        (a, b) => a == b,
    };
    let counts_match = ResultRow { mean_delay: row.mean_delay, ..recomputed.clone() } == *row;
    if !delay_ok || !counts_match {
        return Err(BenchError::Audit(format!("table says {row:?}, logs give {recomputed:?}")));
    }
    Ok(recomputed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, delay: Option<f64>) -> ResultRow {
        ResultRow { controller: name.into(), episodes: 10, reached: 9, failures: 1, mean_delay: delay, sr: 1, sp: 2, mrp: 3, stall_ticks: 4 }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultsTable::default();
        assert_eq!(t.to_csv().unwrap(), format!("{RESULTS_HEADER}\n"));
        assert_eq!(ResultsTable::from_csv(&t.to_csv().unwrap()).unwrap(), t);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = ResultsTable::default();
        t.metadata.insert("seed".into(), "7".into());
        t.metadata.insert("source".into(), "synth:a=1;b=2".into());
        t.rows.push(row("dstar+forest:/tmp/a,b.bin", Some(0.1 + 0.2)));
        t.rows.push(row("dstar+perfect", None));
        let back = ResultsTable::from_csv(&t.to_csv().unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.rows[0].mean_delay.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn markdown_has_one_line_per_controller() {
        let t = ResultsTable { rows: vec![row("a", Some(1.0)), row("b", None), row("c", Some(2.5))], ..Default::default() };
        let md = t.to_markdown();
        assert_eq!(md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| controller")).count(), 3);
    }

    #[test]
    fn merge_requires_pairing() {
        let mut a = ResultsTable::default();
        a.metadata.insert("episode_hash".into(), "x".into());
        a.metadata.insert("config_hash".into(), "c1".into());
        a.rows.push(row("a", None));
        let mut b = a.clone();
        b.metadata.insert("config_hash".into(), "c2".into());
        b.rows[0].controller = "b".into();
        a.merge(&b).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.metadata["config_hash"], "c1;c2");
        b.metadata.insert("episode_hash".into(), "y".into());
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(ResultsTable::from_csv("a,b\n").is_err());
        assert!(ResultsTable::from_csv(&format!("{RESULTS_HEADER}\nx,1,1,0,zz,0,0,0,0\n")).is_err());
        assert!(ResultsTable::from_csv(&format!("#nokey\n{RESULTS_HEADER}\n")).is_err());
    }
}
