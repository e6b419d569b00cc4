//! Layout check for every file the commands emit.

use std::path::Path;

use anyhow::{anyhow, bail, ensure, Result};

/// Column layout of one CSV kind. Columns in `text` may hold any string;
/// all others must parse as numbers (NaN allowed).
#[derive(Debug, Clone, Copy)]
pub struct Schema {
    pub columns: &'static [&'static str],
    pub text: &'static [&'static str],
}

pub const ANALYZE: Schema =
    Schema { columns: &["t", "v_star", "v_per_minus", "v_hat_per_plus", "rho_per_sq", "theta", "theta_prime"], text: &[] };
pub const PROFILE: Schema = Schema { columns: &["x", "p_sum", "p_fourier"], text: &[] };
pub const THEORY: Schema = Schema {
    columns: &["t", "regime", "p_plus_metastable", "p_plus_laplace", "transient_bound", "theta", "profile_argument"],
    text: &["regime"],
};
pub const CYCLING: Schema = Schema {
    columns: &["abs_log_sigma", "sigma", "t", "regime", "c_metastable", "c_laplace", "c_transient_bound"],
    text: &["regime"],
};
pub const VOLTERRA: Schema =
    Schema { columns: &["t", "psi", "c", "c0", "bracket_lo", "bracket_hi", "first_kind_residual"], text: &[] };
pub const SIMULATE: Schema =
    Schema { columns: &["t_lo", "t_hi", "count", "density", "ci_lo", "ci_hi", "censored_total"], text: &[] };
pub const VALIDATE: Schema = Schema {
    columns: &["id", "name", "pass", "measured", "tolerance", "detail"],
    text: &["name", "pass", "detail"],
};

/// Schema for an emitted CSV, chosen by file name.
pub fn for_file(name: &str) -> Option<Schema> {
    let stem = name.strip_suffix(".csv")?;
    Some(match stem {
        "analyze_curves" => ANALYZE,
        "profile" => PROFILE,
        "theory" => THEORY,
        "theory_cycling" => CYCLING,
        "volterra" => VOLTERRA,
        "simulate" => SIMULATE,
        "validate" => VALIDATE,
        s if s.starts_with("theory_sigma_") => THEORY,
        _ => return None,
    })
}

fn check_stamp(line: Option<&str>) -> Result<()> {
    let line = line.ok_or_else(|| anyhow!("empty file"))?;
    let rest = line.strip_prefix("# ").ok_or_else(|| anyhow!("first line is not a provenance comment"))?;
    let mut keys = Vec::new();
    for field in rest.split(", ") {
        let (k, v) = field.split_once('=').ok_or_else(|| anyhow!("malformed provenance field {field:?}"))?;
        match k {
            "scenario-sha256" => ensure!(v.len() == 64 && v.bytes().all(|b| b.is_ascii_hexdigit()), "bad hash {v:?}"),
            "seed" => {
                v.parse::<u64>().map_err(|e| anyhow!("bad seed {v:?}: {e}"))?;
            }
            "version" => ensure!(!v.is_empty(), "empty version"),
            _ => bail!("unknown provenance key {k:?}"),
        }
        keys.push(k);
    }
    ensure!(keys == ["scenario-sha256", "seed", "version"], "provenance keys out of order: {keys:?}");
    Ok(())
}

/// Checks a CSV against `schema` and returns the number of data rows.
pub fn check_csv(text: &str, schema: &Schema) -> Result<usize> {
    let (first, body) = text.split_once('\n').ok_or_else(|| anyhow!("missing header row"))?;
    check_stamp(Some(first))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    ensure!(header == schema.columns, "header {header:?} does not match {:?}", schema.columns);
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (col, field) in schema.columns.iter().zip(rec.iter()) {
            if !schema.text.contains(col) {
                field.parse::<f64>().map_err(|_| anyhow!("row {}: column {col} is not numeric: {field:?}", k + 1))?;
            }
        }
        rows += 1;
    }
    Ok(rows)
}

/// Checks a `key = value` report and returns the number of entries.
pub fn check_report(text: &str) -> Result<usize> {
    let mut lines = text.lines();
    check_stamp(lines.next())?;
    let mut entries = 0;
    let mut section = false;
    for (k, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = true;
            continue;
        }
        ensure!(section, "line {}: entry before any section", k + 2);
        let (key, value) = line.split_once(" = ").ok_or_else(|| anyhow!("line {}: expected key = value", k + 2))?;
        ensure!(!key.is_empty() && !key.contains(' '), "line {}: bad key {key:?}", k + 2);
        let quoted = value.len() >= 2 && value.starts_with('"') && value.ends_with('"');
        let literal = value == "true" || value == "false" || value.parse::<f64>().is_ok();
        ensure!(quoted || literal, "line {}: bad value {value:?}", k + 2);
        entries += 1;
    }
    Ok(entries)
}

/// Checks any emitted file by its name.
pub fn check_file(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(".txt") {
        return check_report(&text);
    }
    let schema = for_file(name).ok_or_else(|| anyhow!("no schema for {name}"))?;
    check_csv(&text, &schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STAMP: &str = "# scenario-sha256=0000000000000000000000000000000000000000000000000000000000000000, seed=1, version=0.1.0";

    #[test]
    fn accepts_well_formed() {
        let text = format!("{STAMP}\nx,p_sum,p_fourier\n0e0,1e0,NaN\n");
        assert_eq!(check_csv(&text, &PROFILE).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(check_csv("x,p_sum,p_fourier\n0,1,1\n", &PROFILE).is_err());
        let wrong_header = format!("{STAMP}\nx,p\n0,1\n");
        assert!(check_csv(&wrong_header, &PROFILE).is_err());
        let text_field = format!("{STAMP}\nx,p_sum,p_fourier\n0,one,1\n");
        assert!(check_csv(&text_field, &PROFILE).is_err());
    }

    #[test]
    fn reports() {
        let text = format!("{STAMP}\n\n[a]\nx = 1\ny = \"two\"\nz = true\n");
        assert_eq!(check_report(&text).unwrap(), 3);
        assert!(check_report(&format!("{STAMP}\nx = 1\n")).is_err());
        assert!(check_report(&format!("{STAMP}\n[a]\nx = two\n")).is_err());
    }
}
