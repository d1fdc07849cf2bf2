//! JSON instance format.
//!
//! ```json
//! {"kind": "OneSidedSPLC", "n": 2,
//!  "segments": [{"i": 0, "j": 1, "u": [1.0, 0.5], "l": [0.5, 0.5]}],
//!  "c": [0.0, 0.0]}
//! ```
//!
//! Linear kinds use `utilities`; SPLC kinds list segments per pair, and pairs
//! that are not listed get a single zero-utility segment. The two-sided kind
//! adds `job_utilities[i][j]`, one value per segment of the pair. Missing `c`
//! and `d` mean zeros.

use serde::{Deserialize, Serialize};

use super::{validate, MarketInstance, ModelKind, Segment};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    kind: ModelKind,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    utilities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<SegmentEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    job_utilities: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentEntry {
    i: usize,
    j: usize,
    u: Vec<f64>,
    l: Vec<f64>,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInstance(format!("field `{field}`: {msg}"))
}

fn square(field: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n {
        return Err(field_err(field, format_args!("expected {n} rows, found {}", m.len())));
    }
    if let Some((i, r)) = m.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(field_err(field, format_args!("row {i} has {} entries, expected {n}", r.len())));
    }
    Ok(())
}

fn vector(field: &str, v: Option<Vec<f64>>, n: usize) -> Result<Vec<f64>> {
    match v {
        None => Ok(vec![0.0; n]),
        Some(v) if v.len() == n => Ok(v),
        Some(v) => Err(field_err(field, format_args!("expected {n} entries, found {}", v.len()))),
    }
}

pub(super) fn from_json_str(text: &str) -> Result<MarketInstance> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidInstance(format!("malformed JSON: {e}")))?;
    let n = file.n;
    if n == 0 {
        return Err(field_err("n", "must be positive"));
    }
    let kind = file.kind;
    let c = vector("c", file.c, n)?;
    if kind != ModelKind::TwoSidedSplc && file.d.is_some() {
        return Err(field_err("d", format_args!("not used by kind {kind}")));
    }
    let inst = match kind {
        ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
            if file.segments.is_some() {
                return Err(field_err("segments", format_args!("not used by kind {kind}")));
            }
            if file.job_utilities.is_some() {
                return Err(field_err("job_utilities", format_args!("not used by kind {kind}")));
            }
            let u = file.utilities.ok_or_else(|| field_err("utilities", "missing"))?;
            square("utilities", &u, n)?;
            if kind == ModelKind::OneSidedLinear {
                MarketInstance::one_sided_linear(u, Some(c))
            } else {
                MarketInstance::non_bipartite(u, Some(c))
            }
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            if file.utilities.is_some() {
                return Err(field_err("utilities", format_args!("not used by kind {kind}; use `segments`")));
            }
            let entries = file.segments.ok_or_else(|| field_err("segments", "missing"))?;
            let mut segs: Vec<Vec<Option<Vec<Segment>>>> = vec![vec![None; n]; n];
            for (idx, e) in entries.into_iter().enumerate() {
                let field = format!("segments[{idx}]");
                if e.i >= n || e.j >= n {
                    return Err(field_err(&field, format_args!("pair ({}, {}) out of range", e.i, e.j)));
                }
                if e.u.len() != e.l.len() || e.u.is_empty() {
                    return Err(field_err(&field, "`u` and `l` must be non-empty and of equal length"));
                }
                if segs[e.i][e.j].is_some() {
                    return Err(field_err(&field, format_args!("duplicate pair ({}, {})", e.i, e.j)));
                }
                segs[e.i][e.j] = Some(e.u.iter().zip(&e.l).map(|(&u, &l)| Segment::new(u, l)).collect());
            }
            let segs: Vec<Vec<Vec<Segment>>> = segs
                .into_iter()
                .map(|row| row.into_iter().map(|s| s.unwrap_or_else(|| vec![Segment::new(0.0, 1.0)])).collect())
                .collect();
            if kind == ModelKind::OneSidedSplc {
                if file.job_utilities.is_some() {
                    return Err(field_err("job_utilities", format_args!("not used by kind {kind}")));
                }
                MarketInstance::one_sided_splc(segs, Some(c))
            } else {
                let w = file.job_utilities.ok_or_else(|| field_err("job_utilities", "missing"))?;
                if w.len() != n || w.iter().any(|r| r.len() != n) {
                    return Err(field_err("job_utilities", format_args!("must be {n}x{n} nested arrays")));
                }
                for i in 0..n {
                    for j in 0..n {
                        if w[i][j].len() != segs[i][j].len() {
                            return Err(field_err(
                                &format!("job_utilities[{i}][{j}]"),
                                format_args!("expected {} values, one per segment", segs[i][j].len()),
                            ));
                        }
                    }
                }
                let d = vector("d", file.d, n)?;
                MarketInstance::two_sided_splc(segs, w, Some(c), Some(d))
            }
        }
    };
    let report = validate(&inst);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidInstance(v.to_string()));
    }
    Ok(inst)
}

pub(super) fn to_json_string(inst: &MarketInstance) -> Result<String> {
    let n = inst.n;
    let mut file = InstanceFile {
        kind: inst.kind,
        n,
        utilities: None,
        segments: None,
        job_utilities: None,
        c: Some(inst.c.clone()),
        d: None,
    };
    match inst.kind {
        ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
            file.utilities = Some(inst.utilities.clone());
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            let mut entries = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let segs = &inst.segments[i][j];
                    entries.push(SegmentEntry {
                        i,
                        j,
                        u: segs.iter().map(|s| s.slope).collect(),
                        l: segs.iter().map(|s| s.length).collect(),
                    });
                }
            }
            file.segments = Some(entries);
            if inst.kind == ModelKind::TwoSidedSplc {
                file.job_utilities = Some(inst.job_utilities.clone());
                file.d = Some(inst.d.clone());
            }
        }
    }
    Ok(serde_json::to_string_pretty(&file)?)
}
