//! CSV trace files: `#` metadata lines, a fixed header, one row per traced iterate.

use std::io::{self, Read, Write};

use serde::Deserialize;
use varsmooth::solvers::{Trace, TraceRow};

pub const COLUMNS: [&str; 9] = [
    "k",
    "wall_ms",
    "objective",
    "smoothed_objective",
    "rel_objective",
    "dist_to_ref",
    "mu",
    "gamma",
    "t",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub k: usize,
    pub wall_ms: f64,
    pub objective: f64,
    pub smoothed_objective: Option<f64>,
    pub rel_objective: Option<f64>,
    pub dist_to_ref: Option<f64>,
    pub mu: Option<f64>,
    pub gamma: f64,
    pub t: Option<f64>,
}

impl CsvRow {
    /// `rel = (F − F*)/(F₀ − F*)` when a reference value is known.
    pub fn from_trace(row: &TraceRow<f64>, f0: f64, f_star: Option<f64>, timing: bool) -> Self {
        CsvRow {
            k: row.k,
            wall_ms: if timing { row.wall_ms } else { 0.0 },
            objective: row.objective,
            smoothed_objective: row.smoothed,
            rel_objective: f_star.map(|fs| (row.objective - fs) / (f0 - fs)),
            dist_to_ref: row.dist_to_ref,
            mu: row.mu,
            gamma: row.gamma,
            t: row.t,
        }
    }

    fn fields(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.k.to_string(),
            self.wall_ms.to_string(),
            self.objective.to_string(),
            opt(self.smoothed_objective),
            opt(self.rel_objective),
            opt(self.dist_to_ref),
            opt(self.mu),
            self.gamma.to_string(),
            opt(self.t),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTrace {
    /// Written as `# key=value` lines above the header.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<CsvRow>,
}

impl CsvTrace {
    pub fn from_trace(trace: &Trace<f64>, f_star: Option<f64>, timing: bool) -> Self {
        let f0 = trace.rows.first().map_or(f64::NAN, |r| r.objective);
        CsvTrace {
            metadata: Vec::new(),
            rows: trace.rows.iter().map(|r| CsvRow::from_trace(r, f0, f_star, timing)).collect(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.fields())?;
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self, csv::Error> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let metadata = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .filter_map(|l| l.trim().split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().ne(COLUMNS) {
            return Err(csv::Error::from(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
            )));
        }
        let rows = rdr.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
        Ok(CsvTrace { metadata, rows })
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, objective: f64) -> TraceRow<f64> {
        TraceRow {
            k,
            wall_ms: 1.5,
            objective,
            smoothed: Some(objective + 0.1),
            mu: Some(0.5),
            gamma: 0.25,
            t: None,
            dist_to_ref: Some(0.125),
            grad_evals: 0,
            dual_radius: None,
        }
    }

    #[test]
    fn round_trip_with_metadata() {
        let trace = Trace {
            rows: vec![row(0, 3.0), row(10, 2.0), row(20, 1.0 / 3.0)],
        };
        let mut csv = CsvTrace::from_trace(&trace, Some(1.0), true);
        csv.meta("solver", "vast");
        csv.meta("tau", 0.35);
        let bytes = csv.to_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("# solver=vast\n# tau=0.35\nk,wall_ms,objective,smoothed_objective,rel_objective,"));
        assert!(text.contains("\n10,1.5,2,2.1,0.5,0.125,0.5,0.25,\n"));
        let back = CsvTrace::read(bytes.as_slice()).unwrap();
        assert_eq!(back, csv);
        assert_eq!(back.rows[0].rel_objective, Some(1.0));
        assert_eq!(back.rows[2].objective, 1.0 / 3.0);
        assert_eq!(back.get_meta("tau"), Some("0.35"));
    }

    #[test]
    fn no_reference_and_no_timing() {
        let trace = Trace { rows: vec![row(0, 3.0)] };
        let csv = CsvTrace::from_trace(&trace, None, false);
        assert_eq!(csv.rows[0].wall_ms, 0.0);
        assert_eq!(csv.rows[0].rel_objective, None);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(CsvTrace::read("k,objective\n1,2\n".as_bytes()).is_err());
    }
}
