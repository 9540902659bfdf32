//! Consolidation of a results directory into tidy series.
//!
//! `report.csv` has one row per point: `source,series,x,y,kind`. Each
//! series is also written to `series/<name>.csv` with columns `x,y,kind`.
//! Subdirectories are read too; their series names are prefixed with the
//! relative path, dots for slashes. Earlier report outputs are skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use walklab_core::profiles::ProfileTable;

use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, Table};

struct Spec {
    file: &'static str,
    x: &'static str,
    group: &'static [&'static str],
    y: &'static [&'static str],
}

const SPECS: &[Spec] = &[
    Spec {
        file: "growth.csv",
        x: "r",
        group: &[],
        y: &["volume"],
    },
    Spec {
        file: "walk.csv",
        x: "k",
        group: &["r"],
        y: &["lo", "hi", "estimate"],
    },
    Spec {
        file: "exit.csv",
        x: "k",
        group: &["r"],
        y: &["survival"],
    },
    Spec {
        file: "bound.csv",
        x: "k",
        group: &["r"],
        y: &["rhs"],
    },
    Spec {
        file: "domination.csv",
        x: "k",
        group: &["r"],
        y: &["measured_hi", "rhs"],
    },
    Spec {
        file: "transforms.csv",
        x: "n",
        group: &[],
        y: &["psi_exponent", "doubling_exponent"],
    },
    Spec {
        file: "cor17.csv",
        x: "k",
        group: &[],
        y: &["value"],
    },
    Spec {
        file: "occupation.csv",
        x: "r",
        group: &["p"],
        y: &["partial", "total"],
    },
    Spec {
        file: "counterexample.csv",
        x: "step",
        group: &[],
        y: &["mean_distance", "formula", "simulated"],
    },
];

#[derive(Default)]
struct Collected {
    rows: Vec<[String; 5]>,
    series: BTreeMap<String, Vec<[String; 3]>>,
}

impl Collected {
    fn add(&mut self, source: &str, series: String, x: String, y: String, kind: String) {
        self.series
            .entry(series.clone())
            .or_default()
            .push([x.clone(), y.clone(), kind.clone()]);
        self.rows.push([source.into(), series, x, y, kind]);
    }
}

fn stem(file: &str) -> &str {
    file.rsplit_once('.').map_or(file, |(s, _)| s)
}

/// Provenance of one value in a row whose `kind` may combine tags, as in
/// `LOWER+UPPER+MC` for an enclosure plus a sampled estimate.
fn value_kind(y: &str, row_kind: &str) -> String {
    if !row_kind.contains('+') {
        return row_kind.to_string();
    }
    let tags: Vec<&str> = row_kind.split('+').collect();
    let has = |t: &str| tags.contains(&t);
    let pick = match y {
        "estimate" | "ci_lo" | "ci_hi" if has("MC") => "MC",
        _ if has("EXACT") => "EXACT",
        "lo" if has("LOWER") => "LOWER",
        "hi" if has("UPPER") => "UPPER",
        _ => return row_kind.to_string(),
    };
    pick.to_string()
}

/// One results directory: its path, the relative prefix for sources, and the
/// prefix for series names.
struct Source {
    dir: PathBuf,
    rel: String,
    series: String,
}

fn sources(root: &Path) -> CliResult<Vec<Source>> {
    fn walk(dir: &Path, rel: &str, out: &mut Vec<Source>) -> CliResult<()> {
        let series = rel.replace('/', ".");
        out.push(Source {
            dir: dir.to_path_buf(),
            rel: rel.to_string(),
            series,
        });
        let mut subs: Vec<(String, PathBuf)> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir() && !e.path().join("report.csv").exists())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
            .collect();
        subs.sort();
        for (name, path) in subs {
            walk(&path, &format!("{rel}{name}/"), out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    Ok(out)
}

fn collect_csv(src: &Source, spec: &Spec, acc: &mut Collected) -> CliResult<bool> {
    let dir = &src.dir;
    let path = dir.join(spec.file);
    if !path.is_file() {
        return Ok(false);
    }
    let t = Table::read(&path)?;
    let col = |name: &str| {
        t.column(name).ok_or_else(|| {
            CliError::MissingInput(format!("{}: no column `{name}`", path.display()))
        })
    };
    let x = col(spec.x)?;
    let groups: Vec<(String, usize)> = spec
        .group
        .iter()
        .map(|g| Ok((g.to_string(), col(g)?)))
        .collect::<CliResult<_>>()?;
    let ys: Vec<(String, usize)> = spec
        .y
        .iter()
        .map(|y| Ok((y.to_string(), col(y)?)))
        .collect::<CliResult<_>>()?;
    let kind = t.column("kind");
    for row in &t.rows {
        let k = kind.map_or_else(String::new, |c| row[c].clone());
        for (yname, yc) in &ys {
            if row[*yc].is_empty() {
                continue;
            }
            let k = value_kind(yname, &k);
            let mut name = format!("{}{}.{yname}", src.series, stem(spec.file));
            for (g, gc) in &groups {
                name.push_str(&format!(".{g}={}", row[*gc]));
            }
            if !k.is_empty() {
                name.push_str(&format!(".{k}"));
            }
            acc.add(
                &format!("{}{}", src.rel, spec.file),
                name,
                row[x].clone(),
                row[*yc].clone(),
                k,
            );
        }
    }
    Ok(true)
}

fn collect_profile(src: &Source, acc: &mut Collected) -> CliResult<bool> {
    let path = src.dir.join("profile.json");
    if !path.is_file() {
        return Ok(false);
    }
    let bytes = std::fs::read(&path)?;
    let v: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    for key in ["phi", "lambda"] {
        let t: ProfileTable = serde_json::from_value(v[key].clone()).map_err(|e| {
            CliError::MissingInput(format!("{}: bad `{key}` table: {e}", path.display()))
        })?;
        for p in &t.points {
            let kind = serde_json::to_value(p.kind)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string();
            acc.add(
                &format!("{}profile.json", src.rel),
                format!("{}profile.{key}.{kind}", src.series),
                p.n.to_string(),
                fmt_f64(p.value),
                kind,
            );
        }
    }
    Ok(true)
}

/// Files written by the report, relative to the output directory, and the
/// input files it consumed.
pub fn report(results: &Path) -> CliResult<(Vec<(String, Vec<u8>)>, Vec<String>)> {
    if !results.is_dir() {
        return Err(CliError::MissingInput(format!(
            "{} is not a directory",
            results.display()
        )));
    }
    let mut acc = Collected::default();
    let mut found = Vec::new();
    for src in sources(results)? {
        if collect_profile(&src, &mut acc)? {
            found.push(format!("{}profile.json", src.rel));
        }
        for spec in SPECS {
            if collect_csv(&src, spec, &mut acc)? {
                found.push(format!("{}{}", src.rel, spec.file));
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::MissingInput(format!(
            "no result tables in {}",
            results.display()
        )));
    }
    let mut t = Table::new(&["source", "series", "x", "y", "kind"]);
    for r in acc.rows {
        t.push(r.to_vec());
    }
    let mut files = vec![("report.csv".to_string(), t.to_csv()?.into_bytes())];
    for (name, pts) in acc.series {
        let mut s = Table::new(&["x", "y", "kind"]);
        for p in pts {
            s.push(p.to_vec());
        }
        files.push((format!("series/{name}.csv"), s.to_csv()?.into_bytes()));
    }
    Ok((files, found))
}
