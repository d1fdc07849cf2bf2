//! Market instances: data model, validation, normalization and the flat
//! coordinate layout shared by every solver.
//!
//! Four market kinds are supported. Bipartite kinds have `n` agents and `n`
//! goods (or jobs); the non-bipartite kind has `n` agents that are matched to
//! each other. Every kind is compiled into a [`Layout`]: a list of allocation
//! coordinates, each carrying its capacity and the utility it contributes to
//! at most two parties. Agents are parties `0..n`; in the two-sided kind the
//! jobs are parties `n..2n`.

mod gap;
mod generate;
mod io;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gap::{feasibility_gap, FeasibilityGap, DELTA_MAX};
pub use generate::{gen_common_value, gen_random, gen_tightness, with_endowments};

/// Tolerance used when checking that segment lengths sum to one.
pub const LENGTH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    OneSidedLinear,
    #[serde(rename = "OneSidedSPLC")]
    OneSidedSplc,
    #[serde(rename = "TwoSidedSPLC")]
    TwoSidedSplc,
    NonBipartiteLinear,
}

impl ModelKind {
    pub fn is_bipartite(self) -> bool {
        !matches!(self, ModelKind::NonBipartiteLinear)
    }

    pub fn is_splc(self) -> bool {
        matches!(self, ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::OneSidedLinear => "OneSidedLinear",
            ModelKind::OneSidedSplc => "OneSidedSPLC",
            ModelKind::TwoSidedSplc => "TwoSidedSPLC",
            ModelKind::NonBipartiteLinear => "NonBipartiteLinear",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One linear piece of a separable piecewise-linear concave utility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub length: f64,
}

impl Segment {
    pub fn new(slope: f64, length: f64) -> Self {
        Segment { slope, length }
    }
}

/// A matching market. Immutable once built; all operations are pure.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketInstance {
    pub kind: ModelKind,
    pub n: usize,
    /// `u[i][j]` for the linear kinds; empty otherwise.
    pub utilities: Vec<Vec<f64>>,
    /// Per-(agent, good) segment lists for the SPLC kinds; empty otherwise.
    pub segments: Vec<Vec<Vec<Segment>>>,
    /// `w[i][j][k]` for the two-sided kind, sharing breakpoints with `segments`.
    pub job_utilities: Vec<Vec<Vec<f64>>>,
    /// Agent disagreement utilities (all zero for the Fisher variants).
    pub c: Vec<f64>,
    /// Job disagreement utilities; only used by the two-sided kind.
    pub d: Vec<f64>,
}

impl MarketInstance {
    pub fn one_sided_linear(utilities: Vec<Vec<f64>>, c: Option<Vec<f64>>) -> Self {
        let n = utilities.len();
        MarketInstance {
            kind: ModelKind::OneSidedLinear,
            n,
            utilities,
            segments: Vec::new(),
            job_utilities: Vec::new(),
            c: c.unwrap_or_else(|| vec![0.0; n]),
            d: Vec::new(),
        }
    }

    pub fn one_sided_splc(segments: Vec<Vec<Vec<Segment>>>, c: Option<Vec<f64>>) -> Self {
        let n = segments.len();
        MarketInstance {
            kind: ModelKind::OneSidedSplc,
            n,
            utilities: Vec::new(),
            segments,
            job_utilities: Vec::new(),
            c: c.unwrap_or_else(|| vec![0.0; n]),
            d: Vec::new(),
        }
    }

    pub fn two_sided_splc(
        segments: Vec<Vec<Vec<Segment>>>,
        job_utilities: Vec<Vec<Vec<f64>>>,
        c: Option<Vec<f64>>,
        d: Option<Vec<f64>>,
    ) -> Self {
        let n = segments.len();
        MarketInstance {
            kind: ModelKind::TwoSidedSplc,
            n,
            utilities: Vec::new(),
            segments,
            job_utilities,
            c: c.unwrap_or_else(|| vec![0.0; n]),
            d: d.unwrap_or_else(|| vec![0.0; n]),
        }
    }

    pub fn non_bipartite(utilities: Vec<Vec<f64>>, c: Option<Vec<f64>>) -> Self {
        let n = utilities.len();
        MarketInstance {
            kind: ModelKind::NonBipartiteLinear,
            n,
            utilities,
            segments: Vec::new(),
            job_utilities: Vec::new(),
            c: c.unwrap_or_else(|| vec![0.0; n]),
            d: Vec::new(),
        }
    }

    /// Number of parties with a utility function: `2n` for two-sided markets, `n` otherwise.
    pub fn parties(&self) -> usize {
        match self.kind {
            ModelKind::TwoSidedSplc => 2 * self.n,
            _ => self.n,
        }
    }

    /// Disagreement utility of every party, agents first.
    pub fn disagreement(&self) -> Vec<f64> {
        let mut out = self.c.clone();
        if self.kind == ModelKind::TwoSidedSplc {
            out.extend_from_slice(&self.d);
        }
        out
    }

    /// True when every disagreement utility is zero (the Fisher variant).
    pub fn is_fisher(&self) -> bool {
        self.c.iter().chain(self.d.iter()).all(|&v| v == 0.0)
    }

    /// Largest utility entry of every party.
    fn party_max(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0f64; self.parties()];
        match self.kind {
            ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
                for (i, row) in self.utilities.iter().enumerate() {
                    for (j, &u) in row.iter().enumerate() {
                        if self.kind == ModelKind::NonBipartiteLinear && i == j {
                            continue;
                        }
                        out[i] = out[i].max(u);
                    }
                }
            }
            ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
                for i in 0..n {
                    for j in 0..n {
                        for (k, seg) in self.segments[i][j].iter().enumerate() {
                            out[i] = out[i].max(seg.slope);
                            if self.kind == ModelKind::TwoSidedSplc {
                                out[n + j] = out[n + j].max(self.job_utilities[i][j][k]);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Utility every party would collect from all of its entries in full:
    /// `Σ_j u_ij` for linear kinds and `Σ_{j,k} u_ijk l_ijk` for SPLC kinds.
    pub fn party_mass(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0f64; self.parties()];
        match self.kind {
            ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
                for (i, row) in self.utilities.iter().enumerate() {
                    out[i] = row
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| self.kind.is_bipartite() || j != i)
                        .map(|(_, &u)| u)
                        .sum();
                }
            }
            ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
                for i in 0..n {
                    for j in 0..n {
                        for (k, seg) in self.segments[i][j].iter().enumerate() {
                            out[i] += seg.slope * seg.length;
                            if self.kind == ModelKind::TwoSidedSplc {
                                out[n + j] += self.job_utilities[i][j][k] * seg.length;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `κ = max(1, 1 / min_p mass_p)`; meaningful on a normalized instance.
    pub fn kappa(&self) -> f64 {
        let min_mass = self.party_mass().into_iter().fold(f64::INFINITY, f64::min);
        if min_mass > 0.0 {
            (1.0 / min_mass).max(1.0)
        } else {
            f64::INFINITY
        }
    }

    /// Compile the instance into its coordinate layout.
    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        io::from_json_str(text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        io::to_json_string(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NonFinite { detail: String },
    Negative { detail: String },
    DegenerateAgent { party: usize },
    SegmentsNotConcave { agent: usize, good: usize },
    SegmentLengths { agent: usize, good: usize, total: f64 },
    BreakpointMismatch { agent: usize, good: usize },
    SelfUtility { agent: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { detail } => write!(f, "shape mismatch: {detail}"),
            Violation::NonFinite { detail } => write!(f, "non-finite value: {detail}"),
            Violation::Negative { detail } => write!(f, "negative value: {detail}"),
            Violation::DegenerateAgent { party } => write!(f, "degenerate agent {party}"),
            Violation::SegmentsNotConcave { agent, good } => {
                write!(f, "segments not concave for ({agent}, {good})")
            }
            Violation::SegmentLengths { agent, good, total } => {
                write!(f, "segment lengths for ({agent}, {good}) sum to {total}, expected 1")
            }
            Violation::BreakpointMismatch { agent, good } => {
                write!(f, "job segments for ({agent}, {good}) do not share the agent breakpoints")
            }
            Violation::SelfUtility { agent } => write!(f, "agent {agent} has utility for itself"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Convert a failing report into the first violation as an error.
    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(Violation::DegenerateAgent { party }) => Err(Error::DegenerateAgent(party)),
            Some(v) => Err(Error::InvalidInstance(v.to_string())),
        }
    }
}

fn check_value(out: &mut Vec<Violation>, what: impl Fn() -> String, v: f64) {
    if !v.is_finite() {
        out.push(Violation::NonFinite { detail: what() });
    } else if v < 0.0 {
        out.push(Violation::Negative { detail: what() });
    }
}

/// Check every structural and numeric invariant of the instance.
pub fn validate(inst: &MarketInstance) -> ValidationReport {
    let mut v = Vec::new();
    let n = inst.n;
    if n == 0 {
        v.push(Violation::Shape { detail: "n must be positive".into() });
        return ValidationReport { violations: v };
    }
    if inst.c.len() != n {
        v.push(Violation::Shape { detail: format!("c has length {}, expected {n}", inst.c.len()) });
    }
    for (i, &ci) in inst.c.iter().enumerate() {
        check_value(&mut v, || format!("c[{i}]"), ci);
    }
    if inst.kind == ModelKind::TwoSidedSplc {
        if inst.d.len() != n {
            v.push(Violation::Shape { detail: format!("d has length {}, expected {n}", inst.d.len()) });
        }
        for (j, &dj) in inst.d.iter().enumerate() {
            check_value(&mut v, || format!("d[{j}]"), dj);
        }
    }

    match inst.kind {
        ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
            if inst.utilities.len() != n || inst.utilities.iter().any(|r| r.len() != n) {
                v.push(Violation::Shape { detail: format!("utilities must be {n}x{n}") });
                return ValidationReport { violations: v };
            }
            for (i, row) in inst.utilities.iter().enumerate() {
                for (j, &u) in row.iter().enumerate() {
                    check_value(&mut v, || format!("utilities[{i}][{j}]"), u);
                }
                if inst.kind == ModelKind::NonBipartiteLinear && row[i] != 0.0 {
                    v.push(Violation::SelfUtility { agent: i });
                }
            }
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            if inst.segments.len() != n || inst.segments.iter().any(|r| r.len() != n) {
                v.push(Violation::Shape { detail: format!("segments must be {n}x{n}") });
                return ValidationReport { violations: v };
            }
            let two_sided = inst.kind == ModelKind::TwoSidedSplc;
            if two_sided && (inst.job_utilities.len() != n || inst.job_utilities.iter().any(|r| r.len() != n)) {
                v.push(Violation::Shape { detail: format!("job_utilities must be {n}x{n}") });
                return ValidationReport { violations: v };
            }
            for i in 0..n {
                for j in 0..n {
                    let segs = &inst.segments[i][j];
                    if segs.is_empty() {
                        v.push(Violation::Shape { detail: format!("no segments for ({i}, {j})") });
                        continue;
                    }
                    for (k, s) in segs.iter().enumerate() {
                        check_value(&mut v, || format!("segments[{i}][{j}][{k}].u"), s.slope);
                        check_value(&mut v, || format!("segments[{i}][{j}][{k}].l"), s.length);
                    }
                    if segs.windows(2).any(|w| w[1].slope > w[0].slope) {
                        v.push(Violation::SegmentsNotConcave { agent: i, good: j });
                    }
                    let total: f64 = segs.iter().map(|s| s.length).sum();
                    if (total - 1.0).abs() > LENGTH_TOL {
                        v.push(Violation::SegmentLengths { agent: i, good: j, total });
                    }
                    if two_sided {
                        let w = &inst.job_utilities[i][j];
                        if w.len() != segs.len() {
                            v.push(Violation::BreakpointMismatch { agent: i, good: j });
                            continue;
                        }
                        for (k, &wk) in w.iter().enumerate() {
                            check_value(&mut v, || format!("job_utilities[{i}][{j}][{k}]"), wk);
                        }
                        if w.windows(2).any(|p| p[1] > p[0]) {
                            v.push(Violation::SegmentsNotConcave { agent: i, good: j });
                        }
                    }
                }
            }
        }
    }

    if v.is_empty() {
        for (p, mass) in inst.party_mass().into_iter().enumerate() {
            if mass <= 0.0 {
                v.push(Violation::DegenerateAgent { party: p });
            }
        }
    }
    ValidationReport { violations: v }
}

/// Per-party normalization factors and the derived constants κ and δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    /// Multiplicative factor applied to each party's utilities and disagreement value.
    pub scale: Vec<f64>,
    pub kappa: f64,
    /// Feasibility gap, filled in once it has been computed or supplied.
    pub delta: Option<f64>,
}

/// Rescale every party so that its largest utility entry is exactly 1.
///
/// Disagreement values are divided by the same factor, so the set of optimal
/// allocations is unchanged.
pub fn normalize(inst: &MarketInstance) -> Result<(MarketInstance, ScalingInfo)> {
    validate(inst).into_result()?;
    let n = inst.n;
    let maxima = inst.party_max();
    if let Some(p) = maxima.iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateAgent(p));
    }
    let mut out = inst.clone();
    match inst.kind {
        ModelKind::OneSidedLinear | ModelKind::NonBipartiteLinear => {
            for (row, &m) in out.utilities.iter_mut().zip(&maxima) {
                for u in row.iter_mut() {
                    *u /= m;
                }
            }
        }
        ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
            for i in 0..n {
                for j in 0..n {
                    for seg in out.segments[i][j].iter_mut() {
                        seg.slope /= maxima[i];
                    }
                    if inst.kind == ModelKind::TwoSidedSplc {
                        for w in out.job_utilities[i][j].iter_mut() {
                            *w /= maxima[n + j];
                        }
                    }
                }
            }
        }
    }
    for (c, &m) in out.c.iter_mut().zip(&maxima) {
        *c /= m;
    }
    if inst.kind == ModelKind::TwoSidedSplc {
        for (d, &m) in out.d.iter_mut().zip(&maxima[n..]) {
            *d /= m;
        }
    }
    let kappa = out.kappa();
    let info = ScalingInfo { scale: maxima.iter().map(|m| 1.0 / m).collect(), kappa, delta: None };
    Ok((out, info))
}

/// One allocation variable: agent `agent` receives segment `segment` of good
/// `good` (for the non-bipartite kind, the edge `{agent, good}` with `agent < good`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coord {
    pub agent: usize,
    pub good: usize,
    pub segment: usize,
    pub cap: f64,
    pub agent_util: f64,
    /// Utility the other endpoint derives (jobs, or the partner agent); zero one-sided.
    pub partner_util: f64,
}

/// All coordinates of one (agent, good) pair, ordered by non-increasing slope.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub agent: usize,
    pub good: usize,
    pub range: Range<usize>,
}

/// Flat view of an instance used by the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub kind: ModelKind,
    pub n: usize,
    pub coords: Vec<Coord>,
    pub chains: Vec<Chain>,
    pub disagreement: Vec<f64>,
}

impl Layout {
    fn new(inst: &MarketInstance) -> Self {
        let n = inst.n;
        let mut coords = Vec::new();
        let mut chains = Vec::new();
        match inst.kind {
            ModelKind::OneSidedLinear => {
                for i in 0..n {
                    for j in 0..n {
                        chains.push(Chain { agent: i, good: j, range: coords.len()..coords.len() + 1 });
                        coords.push(Coord {
                            agent: i,
                            good: j,
                            segment: 0,
                            cap: 1.0,
                            agent_util: inst.utilities[i][j],
                            partner_util: 0.0,
                        });
                    }
                }
            }
            ModelKind::NonBipartiteLinear => {
                for i in 0..n {
                    for j in i + 1..n {
                        chains.push(Chain { agent: i, good: j, range: coords.len()..coords.len() + 1 });
                        coords.push(Coord {
                            agent: i,
                            good: j,
                            segment: 0,
                            cap: 1.0,
                            agent_util: inst.utilities[i][j],
                            partner_util: inst.utilities[j][i],
                        });
                    }
                }
            }
            ModelKind::OneSidedSplc | ModelKind::TwoSidedSplc => {
                for i in 0..n {
                    for j in 0..n {
                        let start = coords.len();
                        for (k, seg) in inst.segments[i][j].iter().enumerate() {
                            let partner_util =
                                if inst.kind == ModelKind::TwoSidedSplc { inst.job_utilities[i][j][k] } else { 0.0 };
                            coords.push(Coord {
                                agent: i,
                                good: j,
                                segment: k,
                                cap: seg.length,
                                agent_util: seg.slope,
                                partner_util,
                            });
                        }
                        chains.push(Chain { agent: i, good: j, range: start..coords.len() });
                    }
                }
            }
        }
        Layout { kind: inst.kind, n, coords, chains, disagreement: inst.disagreement() }
    }

    pub fn parties(&self) -> usize {
        self.disagreement.len()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Party that receives `partner_util` from a coordinate, if any.
    #[inline]
    pub fn partner_party(&self, c: &Coord) -> Option<usize> {
        match self.kind {
            ModelKind::OneSidedLinear | ModelKind::OneSidedSplc => None,
            ModelKind::TwoSidedSplc => Some(self.n + c.good),
            ModelKind::NonBipartiteLinear => Some(c.good),
        }
    }

    /// Utility of every party under allocation `x`.
    pub fn utilities(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.parties()];
        for (c, &v) in self.coords.iter().zip(x) {
            out[c.agent] += c.agent_util * v;
            if let Some(p) = self.partner_party(c) {
                out[p] += c.partner_util * v;
            }
        }
        out
    }

    /// Allocation mass per agent (row sums); for the non-bipartite kind, vertex degrees.
    pub fn agent_loads(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (c, &v) in self.coords.iter().zip(x) {
            out[c.agent] += v;
            if self.kind == ModelKind::NonBipartiteLinear {
                out[c.good] += v;
            }
        }
        out
    }

    /// Allocation mass per good (column sums); empty for the non-bipartite kind.
    pub fn good_loads(&self, x: &[f64]) -> Vec<f64> {
        if self.kind == ModelKind::NonBipartiteLinear {
            return Vec::new();
        }
        let mut out = vec![0.0; self.n];
        for (c, &v) in self.coords.iter().zip(x) {
            out[c.good] += v;
        }
        out
    }

    /// Per-pair totals `Σ_k x_ijk` as an `n × n` matrix (symmetric for the non-bipartite kind).
    pub fn totals(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for chain in &self.chains {
            let t: f64 = x[chain.range.clone()].iter().sum();
            out[chain.agent][chain.good] = t;
            if self.kind == ModelKind::NonBipartiteLinear {
                out[chain.good][chain.agent] = t;
            }
        }
        out
    }

    /// Index of the chain for pair `(agent, good)`.
    pub fn chain_index(&self, agent: usize, good: usize) -> Option<usize> {
        match self.kind {
            ModelKind::NonBipartiteLinear => {
                let (a, b) = if agent < good { (agent, good) } else { (good, agent) };
                if a == b || b >= self.n {
                    return None;
                }
                // Row-major upper triangle without the diagonal.
                Some(a * self.n - a * (a + 1) / 2 + (b - a - 1))
            }
            _ => (agent < self.n && good < self.n).then(|| agent * self.n + good),
        }
    }
}
