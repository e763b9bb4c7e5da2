//! Run reports.
//!
//! A report is UTF-8 text. The first line is [`HEADER`]; every other
//! nonblank line is either a `#` comment or `key = value`. Reals are written
//! with 17 significant digits, lists are comma separated, and all wall-clock
//! measurements live in the single `wall_times` field so that two runs with
//! the same inputs differ in that line only.
//!
//! | key | type |
//! |-----|------|
//! | `command`, `tool_version`, `dataset`, `schema`, `kernels`, `init`, `stop_reason`, `wall_times` | text |
//! | `kernel_specs` | text list, `;` separated |
//! | `n_train`, `n_test`, `seed`, `k0`, `patience`, `max_iter`, `iterations`, `nnz_beta`, `rand_vectors` | integer |
//! | `C`, `lambda`, `eps`, `objective_best`, `objective_upper`, `accuracy` | real |
//! | `beta`, `incumbent_beta`, `trace_objective` | real list |
//! | `support` | integer list (0-based kernel indices) |
//! | `cv.folds`, `cv.points`, `cv.selected` | integer |
//! | `cv.best_mean_accuracy` | real |
//! | `cv.log` | text |
//! | `warning.N` | text |
//! | `cert.levels` | text list |
//! | `cert.upper_bound`, `cert.best_lower_bound`, `cert.gap_over_upper`, `cert.gap_over_lower` | real |
//! | `cert.globally_optimal` | `true` or `false` |
//! | `cert.LEVEL.status` | `ok`, `maxiter`, `infeasible`, `unbounded`, `unavailable` or `inapplicable` |
//! | `cert.LEVEL.reason` | text |
//! | `cert.LEVEL.lower_bound`, `.primal_residual`, `.dual_residual`, `.gap_over_upper`, `.gap_over_lower` | real |
//! | `cert.LEVEL.iterations` | integer |
//!
//! `gap_over_upper` is `(F - L)/F · 100` and `gap_over_lower` is
//! `(F - L)/L · 100`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "# smkl-report v1";

pub const LEVEL_STATUSES: [&str; 6] = ["ok", "maxiter", "infeasible", "unbounded", "unavailable", "inapplicable"];

/// Seventeen significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_reals(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Int,
    Real,
    Bool,
    Reals,
    Ints,
    Status,
}

fn kind_of(key: &str) -> Option<Kind> {
    use Kind::*;
    let k = match key {
        "command" | "tool_version" | "dataset" | "schema" | "kernels" | "init" | "stop_reason" | "wall_times"
        | "kernel_specs" | "cv.log" | "cert.levels" => Text,
        "n_train" | "n_test" | "seed" | "k0" | "patience" | "max_iter" | "iterations" | "nnz_beta"
        | "rand_vectors" | "cv.folds" | "cv.points" | "cv.selected" => Int,
        "C" | "lambda" | "eps" | "objective_best" | "objective_upper" | "accuracy" | "cv.best_mean_accuracy"
        | "cert.upper_bound" | "cert.best_lower_bound" | "cert.gap_over_upper" | "cert.gap_over_lower" => Real,
        "beta" | "incumbent_beta" | "trace_objective" => Reals,
        "support" => Ints,
        "cert.globally_optimal" => Bool,
        _ => {
            if let Some(n) = key.strip_prefix("warning.") {
                return n.parse::<usize>().ok().map(|_| Text);
            }
            let rest = key.strip_prefix("cert.")?;
            let (_, field) = rest.rsplit_once('.')?;
            match field {
                "status" => Status,
                "reason" => Text,
                "lower_bound" | "primal_residual" | "dual_residual" | "gap_over_upper" | "gap_over_lower" => Real,
                "iterations" => Int,
                _ => return None,
            }
        }
    };
    Some(k)
}

/// Ordered key-value report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_real(&mut self, key: &str, v: f64) {
        self.set(key, fmt_real(v));
    }

    pub fn set_reals(&mut self, key: &str, v: &[f64]) {
        self.set(key, fmt_reals(v));
    }

    pub fn set_int(&mut self, key: &str, v: usize) {
        self.set(key, v.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Data(format!("report has no `{key}`")))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        v.parse().map_err(|_| Error::Data(format!("`{key}` is not a number: {v}")))
    }

    pub fn int(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse().map_err(|_| Error::Data(format!("`{key}` is not an integer: {v}")))
    }

    pub fn reals(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        parse_list(v).map_err(|_| Error::Data(format!("`{key}` is not a list of numbers")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == HEADER => {}
            _ => return Err(Error::format(origin, format!("first line must be `{HEADER}`"))),
        }
        let mut r = Report::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .or_else(|| line.split_once('=').map(|(k, v)| (k.trim_end(), v.trim_start())))
                .ok_or_else(|| Error::format(origin, format!("line {}: expected `key = value`", i + 1)))?;
            if r.get(k).is_some() {
                return Err(Error::format(origin, format!("line {}: duplicate key `{k}`", i + 1)));
            }
            r.entries.push((k.to_string(), v.to_string()));
        }
        r.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Checks key names, value types and the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(m));
        let mut seen = BTreeSet::new();
        for (k, v) in &self.entries {
            if !seen.insert(k.as_str()) {
                return bad(format!("duplicate key `{k}`"));
            }
            let Some(kind) = kind_of(k) else {
                return bad(format!("unknown key `{k}`"));
            };
            let ok = match kind {
                Kind::Text => !v.contains('\n'),
                Kind::Int => v.parse::<usize>().is_ok(),
                Kind::Real => v.parse::<f64>().is_ok(),
                Kind::Bool => v == "true" || v == "false",
                Kind::Reals => parse_list::<f64>(v).is_ok(),
                Kind::Ints => parse_list::<usize>(v).is_ok(),
                Kind::Status => LEVEL_STATUSES.contains(&v.as_str()),
            };
            if !ok {
                return bad(format!("`{k}` has a malformed value: {v}"));
            }
        }
        for key in ["command", "tool_version", "wall_times"] {
            self.require(key)?;
        }
        if !["train", "certify", "cv"].contains(&self.require("command")?) {
            return bad("`command` must be train, certify or cv".into());
        }

        if let Some(beta_text) = self.get("beta") {
            let beta = parse_list::<f64>(beta_text).unwrap_or_default();
            let k0 = self.int("k0")?;
            if beta.iter().any(|b| *b < 0.0) || (beta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("`beta` is not on the simplex".into());
            }
            let nz: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] > 0.0).collect();
            if nz.len() > k0 {
                return bad(format!("`beta` has {} nonzeros, k0 is {k0}", nz.len()));
            }
            if let Some(s) = self.get("support") {
                if parse_list::<usize>(s).unwrap_or_default() != nz {
                    return bad("`support` does not match `beta`".into());
                }
            }
            if let Some(specs) = self.get("kernel_specs") {
                if specs.split(';').count() != beta.len() {
                    return bad("`beta` and `kernel_specs` differ in length".into());
                }
            }
        }
        if let Some(a) = self.get("accuracy") {
            let a: f64 = a.parse().unwrap_or(f64::NAN);
            if !(0.0..=100.0).contains(&a) {
                return bad("`accuracy` is outside [0, 100]".into());
            }
        }
        if let (Some(_), Ok(k0)) = (self.get("nnz_beta"), self.int("k0")) {
            if self.int("nnz_beta")? > k0 {
                return bad("`nnz_beta` exceeds k0".into());
            }
        }
        if let Some(levels) = self.get("cert.levels") {
            let upper = self.real("cert.upper_bound")?;
            let tol = 1e-6 * (1.0 + upper.abs());
            for level in levels.split(',').filter(|l| !l.is_empty()) {
                let status = self.require(&format!("cert.{level}.status"))?;
                if status == "ok" {
                    let lb = self.real(&format!("cert.{level}.lower_bound"))?;
                    if lb > upper + tol {
                        return bad(format!("{level} lower bound exceeds the upper bound"));
                    }
                }
            }
            self.require("cert.globally_optimal")?;
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, T::Err> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse()).collect()
}
