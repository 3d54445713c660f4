//! `roc.csv` and `energy.csv` rows. Fields are plain numbers or scheme
//! names, so no quoting is needed; floats use the shortest round-trip form.

use std::str::FromStr;

use crate::error::{Error, Result};

pub const ROC_HEADER: &str =
    "scheme,N,m,k,l,snr_tsp_db,snr_ro_db,vth,trials,tpr,fpr,precision,mean_measurements,seed";

pub const ENERGY_HEADER: &str =
    "N,m,k,l,sampling_ratio,vth_op,recall,fpr,p_conv_mw,p_prop_mw,saving";

#[derive(Clone, Debug, PartialEq)]
pub struct RocRow {
    pub scheme: String,
    pub n_sensors: usize,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub snr_tsp_db: f64,
    pub snr_ro_db: f64,
    pub vth: f64,
    pub trials: u64,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub mean_measurements: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCsvRow {
    pub n_sensors: usize,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub sampling_ratio: f64,
    pub vth_op: f64,
    pub recall: f64,
    pub fpr: f64,
    pub p_conv_mw: f64,
    pub p_prop_mw: f64,
    pub saving: f64,
}

impl RocRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.n_sensors,
            self.m,
            self.k,
            self.l,
            self.snr_tsp_db,
            self.snr_ro_db,
            self.vth,
            self.trials,
            self.tpr,
            self.fpr,
            self.precision,
            self.mean_measurements,
            self.seed
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut f = Fields::new(line, 14)?;
        Ok(RocRow {
            scheme: f.next_str().to_string(),
            n_sensors: f.next()?,
            m: f.next()?,
            k: f.next()?,
            l: f.next()?,
            snr_tsp_db: f.next()?,
            snr_ro_db: f.next()?,
            vth: f.next()?,
            trials: f.next()?,
            tpr: f.next()?,
            fpr: f.next()?,
            precision: f.next()?,
            mean_measurements: f.next()?,
            seed: f.next()?,
        })
    }
}

impl EnergyCsvRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.n_sensors,
            self.m,
            self.k,
            self.l,
            self.sampling_ratio,
            self.vth_op,
            self.recall,
            self.fpr,
            self.p_conv_mw,
            self.p_prop_mw,
            self.saving
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut f = Fields::new(line, 11)?;
        Ok(EnergyCsvRow {
            n_sensors: f.next()?,
            m: f.next()?,
            k: f.next()?,
            l: f.next()?,
            sampling_ratio: f.next()?,
            vth_op: f.next()?,
            recall: f.next()?,
            fpr: f.next()?,
            p_conv_mw: f.next()?,
            p_prop_mw: f.next()?,
            saving: f.next()?,
        })
    }
}

struct Fields<'a> {
    parts: std::str::Split<'a, char>,
    line: &'a str,
}

impl<'a> Fields<'a> {
    fn new(line: &'a str, expected: usize) -> Result<Self> {
        let got = line.split(',').count();
        if got != expected {
            return Err(Error::InvalidParams(format!(
                "expected {expected} CSV fields, got {got}: `{line}`"
            )));
        }
        Ok(Fields {
            parts: line.split(','),
            line,
        })
    }

    fn next_str(&mut self) -> &'a str {
        self.parts.next().unwrap_or("")
    }

    fn next<T: FromStr>(&mut self) -> Result<T> {
        let s = self.next_str();
        s.trim()
            .parse()
            .map_err(|_| Error::InvalidParams(format!("bad CSV field `{s}` in `{}`", self.line)))
    }
}

/// Header plus one line per row, newline-terminated.
pub fn render<'a>(header: &str, lines: impl Iterator<Item = String> + 'a) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Rows of a CSV document, header checked.
pub fn parse_csv<T>(text: &str, header: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::InvalidParams(format!(
                "unexpected CSV header {:?}",
                other.unwrap_or("")
            )))
        }
    }
    lines.filter(|l| !l.is_empty()).map(parse).collect()
}
