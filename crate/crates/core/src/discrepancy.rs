//! Sample estimates of the product-total-variation and grouped
//! total-variation Stein discrepancies, and the test built on them.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Result, SteinError};
use crate::operators::{retained_indices, SteinOperator};
use crate::solver::{
    build_indicator_dictionary, build_sample_indicator_dictionary, build_solution_dictionary, probe_grid,
    Dictionary, DictionaryKind, SteinSolution,
};
use crate::special::normal_quantile;
use crate::stats::MeanEstimate;
use crate::targets::{construct_diffusion_coefficients, TargetDistribution};

/// Per-entry tables are kept up to this many cells.
pub const PER_ENTRY_LIMIT: usize = 10_000;

/// Paired observations `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointSampleSet {
    xs: Vec<f64>,
    ys: Vec<f64>,
    y_countable_hint: bool,
}

impl JointSampleSet {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(SteinError::InvalidSamples(format!(
                "{} x values but {} y values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(SteinError::EmptySample);
        }
        if let Some(i) = (0..xs.len()).find(|&i| !xs[i].is_finite() || !ys[i].is_finite()) {
            return Err(SteinError::InvalidSamples(format!("row {i} is not finite")));
        }
        Ok(Self {
            xs,
            ys,
            y_countable_hint: false,
        })
    }

    /// Declare that `Y` takes countably many values even if the sample has
    /// many distinct ones.
    pub fn with_countable_hint(mut self, hint: bool) -> Self {
        self.y_countable_hint = hint;
        self
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn y_countable_hint(&self) -> bool {
        self.y_countable_hint
    }
}

/// A partition of the samples by `Y` value. Groups smaller than
/// `min_group_size` are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    labels: Vec<f64>,
    assignment: Vec<Option<usize>>,
    group_sizes: Vec<usize>,
    dropped_fraction: f64,
    min_group_size: usize,
}

impl GroupIndex {
    /// Group by exact value.
    pub fn from_values(ys: &[f64], min_group_size: usize, countable_hint: bool) -> Result<Self> {
        if ys.is_empty() {
            return Err(SteinError::EmptySample);
        }
        let mut order: Vec<usize> = (0..ys.len()).collect();
        order.sort_by(|&i, &j| ys[i].total_cmp(&ys[j]));
        let mut distinct: Vec<f64> = Vec::new();
        let mut ids = alloc::vec![0usize; ys.len()];
        for &i in &order {
            if distinct.last().map_or(true, |&l| l.total_cmp(&ys[i]).is_ne()) {
                distinct.push(ys[i]);
            }
            ids[i] = distinct.len() - 1;
        }
        let floor = min_group_size.max(1);
        if !countable_hint && distinct.len() * floor > ys.len() {
            return Err(SteinError::UncountableY {
                distinct: distinct.len(),
                limit: ys.len() / floor,
            });
        }
        Self::build(&ids, &distinct, min_group_size)
    }

    pub fn from_samples(samples: &JointSampleSet, min_group_size: usize) -> Result<Self> {
        Self::from_values(&samples.ys, min_group_size, samples.y_countable_hint)
    }

    /// An arbitrary partition: `assignment[i]` is the group of sample `i`.
    /// Group labels are the ids themselves.
    pub fn from_assignment(assignment: &[usize], min_group_size: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(SteinError::EmptySample);
        }
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        let labels: Vec<f64> = (0..k).map(|g| g as f64).collect();
        Self::build(assignment, &labels, min_group_size)
    }

    fn build(ids: &[usize], labels: &[f64], min_group_size: usize) -> Result<Self> {
        let mut sizes = alloc::vec![0usize; labels.len()];
        for &g in ids {
            sizes[g] += 1;
        }
        let mut remap = alloc::vec![None; labels.len()];
        let mut kept_labels = Vec::new();
        let mut kept_sizes = Vec::new();
        for g in 0..labels.len() {
            if sizes[g] > 0 && sizes[g] >= min_group_size {
                remap[g] = Some(kept_labels.len());
                kept_labels.push(labels[g]);
                kept_sizes.push(sizes[g]);
            }
        }
        if kept_labels.is_empty() {
            return Err(SteinError::NoRetainedGroups);
        }
        let assignment: Vec<Option<usize>> = ids.iter().map(|&g| remap[g]).collect();
        let retained: usize = kept_sizes.iter().sum();
        Ok(Self {
            labels: kept_labels,
            assignment,
            group_sizes: kept_sizes,
            dropped_fraction: 1.0 - retained as f64 / ids.len() as f64,
            min_group_size,
        })
    }

    /// Merge retained group `b` into `a`; `a` keeps its label.
    pub fn merge(&self, a: usize, b: usize) -> Result<Self> {
        let k = self.labels.len();
        if a >= k || b >= k || a == b {
            return Err(SteinError::InvalidArgument(format!("cannot merge groups {a} and {b} of {k}")));
        }
        let ids: Vec<Option<usize>> = self
            .assignment
            .iter()
            .map(|g| g.map(|g| if g == b { a } else { g }))
            .collect();
        let mut next = self.clone();
        let mut remap: Vec<usize> = (0..k).collect();
        for (g, r) in remap.iter_mut().enumerate() {
            if g > b {
                *r = g - 1;
            }
        }
        remap[b] = remap[a];
        next.assignment = ids.iter().map(|g| g.map(|g| remap[g])).collect();
        next.group_sizes[a] += self.group_sizes[b];
        next.group_sizes.remove(b);
        next.labels.remove(b);
        Ok(next)
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dropped_fraction(&self) -> f64 {
        self.dropped_fraction
    }

    pub fn min_group_size(&self) -> usize {
        self.min_group_size
    }
}

/// Which discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DiscrepancyKind {
    /// Sup over (f, k) of `|mean 𝒩f(x) k(y)|`.
    #[default]
    Ptv,
    /// Sup over f of `Σ_g w_g |mean_g 𝒩f(x)|`.
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

/// One dictionary cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntryEstimate {
    pub labels: Vec<String>,
    pub mean: f64,
    pub std_error: f64,
}

/// Summary of a dictionary used in an estimate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DictionaryInfo {
    pub kind: DictionaryKind,
    pub size: usize,
    #[cfg_attr(feature = "serde", serde(with = "crate::serde_ext::extended_f64_vec"))]
    pub endpoints: Vec<f64>,
}

impl DictionaryInfo {
    fn of(d: &Dictionary) -> Self {
        Self {
            kind: d.kind(),
            size: d.len(),
            endpoints: d.grid_spec().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscrepancyReport {
    pub kind: DiscrepancyKind,
    /// Largest absolute cell estimate; never negative.
    pub value: f64,
    /// Standard error of the maximizing cell.
    pub std_error: f64,
    pub argmax_entry: Vec<String>,
    /// Empty when the dictionaries have more than [`PER_ENTRY_LIMIT`] cells.
    pub per_entry: Vec<EntryEstimate>,
    pub n_effective: usize,
    /// Samples dropped for lying outside the support.
    pub excluded: usize,
    pub dropped_fraction: f64,
    pub groups: Option<usize>,
    /// Number of simultaneous comparisons in the verdict.
    pub cells: usize,
    pub alpha: f64,
    /// `z_{1 - alpha / cells}`.
    pub threshold: f64,
    pub verdict: Verdict,
    pub f_dictionary: DictionaryInfo,
    pub k_dictionary: Option<DictionaryInfo>,
}

impl DiscrepancyReport {
    /// Set the verdict: inconclusive below `min_n` effective samples,
    /// otherwise consistent iff `value <= z_{1 - alpha/cells} * std_error`.
    pub fn decide(&mut self, alpha: f64, min_n: usize) {
        self.alpha = alpha;
        self.threshold = normal_quantile(1.0 - alpha / self.cells.max(1) as f64);
        self.verdict = if self.n_effective < min_n {
            Verdict::Inconclusive
        } else if self.value <= self.threshold * self.std_error {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
    }

    /// `value / std_error`, infinite for a nonzero value with zero error.
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            self.value / self.std_error
        } else if self.value > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 0.01;

/// `𝒩f(x)` for each listed sample, with `f` a certified solution.
fn operator_values(op: &SteinOperator, sol: &SteinSolution, xs: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter()
        .map(|&i| {
            let x = xs[i];
            let (f, df) = sol.jet(x)?;
            op.apply_jet(x, f, df)
        })
        .collect()
}

fn solution_entries(d: &Dictionary) -> Result<&[SteinSolution]> {
    match d {
        Dictionary::Solution(s) if !s.is_empty() => Ok(s.entries()),
        Dictionary::Solution(_) => Err(SteinError::EmptyDictionary),
        _ => Err(SteinError::InvalidArgument("expected a solution dictionary".into())),
    }
}

fn pick_max(cells: &[EntryEstimate]) -> (f64, f64, Vec<String>) {
    let mut best: Option<&EntryEstimate> = None;
    for c in cells {
        if best.map_or(true, |b| c.mean.abs() > b.mean.abs()) {
            best = Some(c);
        }
    }
    let b = best.expect("nonempty cells");
    (b.mean.abs(), b.std_error, b.labels.clone())
}

/// Max over the product dictionary of `|mean_i 𝒩f(x_i) k(y_i)|`.
pub fn estimate_ptv_discrepancy(
    samples: &JointSampleSet,
    op: &SteinOperator,
    f_dict: &Dictionary,
    k_dict: &Dictionary,
) -> Result<DiscrepancyReport> {
    let fs = solution_entries(f_dict)?;
    let ks = match k_dict {
        Dictionary::Indicator(k) if !k.is_empty() => k.entries(),
        Dictionary::Indicator(_) => return Err(SteinError::EmptyDictionary),
        _ => return Err(SteinError::InvalidArgument("expected an indicator dictionary".into())),
    };
    let kept = retained_indices(&samples.xs, op.support())?;
    let n = kept.len();
    if n == 0 {
        return Err(SteinError::EmptySample);
    }
    let kvals: Vec<Vec<f64>> = ks
        .iter()
        .map(|k| kept.iter().map(|&i| k.value(samples.ys[i])).collect())
        .collect();
    let f_labels = f_dict.labels();
    let k_labels = k_dict.labels();
    let rows = crate::par::map_collect(fs, |sol| -> Result<Vec<(f64, f64)>> {
        let v = operator_values(op, sol, &samples.xs, &kept)?;
        Ok(kvals
            .iter()
            .map(|kv| {
                let m = MeanEstimate::from_iter_twice(|| v.iter().zip(kv).map(|(a, b)| a * b), n)
                    .expect("nonempty");
                (m.value, m.std_error)
            })
            .collect())
    });
    let mut cells = Vec::with_capacity(fs.len() * ks.len());
    for (fi, row) in rows.into_iter().enumerate() {
        for (ki, (mean, se)) in row?.into_iter().enumerate() {
            cells.push(EntryEstimate {
                labels: alloc::vec![f_labels[fi].clone(), k_labels[ki].clone()],
                mean,
                std_error: se,
            });
        }
    }
    let (value, std_error, argmax) = pick_max(&cells);
    let count = cells.len();
    let mut report = DiscrepancyReport {
        kind: DiscrepancyKind::Ptv,
        value,
        std_error,
        argmax_entry: argmax,
        per_entry: if count <= PER_ENTRY_LIMIT { cells } else { Vec::new() },
        n_effective: n,
        excluded: samples.n() - n,
        dropped_fraction: 0.0,
        groups: None,
        cells: count,
        alpha: DEFAULT_ALPHA,
        threshold: 0.0,
        verdict: Verdict::Inconclusive,
        f_dictionary: DictionaryInfo::of(f_dict),
        k_dictionary: Some(DictionaryInfo::of(k_dict)),
    };
    report.decide(DEFAULT_ALPHA, 1);
    Ok(report)
}

/// Max over f of `Σ_g (n_g / n) |mean over group g of 𝒩f(x_i)|`.
///
/// Two-argument dictionaries are solved at each retained group's `y`.
pub fn estimate_tv_discrepancy(
    samples: &JointSampleSet,
    op: &SteinOperator,
    f_dict: &Dictionary,
    grouping: &GroupIndex,
) -> Result<DiscrepancyReport> {
    if grouping.assignment.len() != samples.n() {
        return Err(SteinError::InvalidArgument(format!(
            "grouping covers {} samples, not {}",
            grouping.assignment.len(),
            samples.n()
        )));
    }
    if f_dict.is_empty() {
        return Err(SteinError::EmptyDictionary);
    }
    let in_support = retained_indices(&samples.xs, op.support())?;
    let k = grouping.len();
    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for &i in &in_support {
        if let Some(g) = grouping.assignment[i] {
            members[g].push(i);
        }
    }
    let n_eff: usize = members.iter().map(Vec::len).sum();
    if n_eff == 0 {
        return Err(SteinError::NoRetainedGroups);
    }
    let weights: Vec<f64> = members.iter().map(|m| m.len() as f64 / n_eff as f64).collect();

    let group_stats = |sol: &SteinSolution, g: usize| -> Result<(f64, f64)> {
        if members[g].is_empty() {
            return Ok((0.0, 0.0));
        }
        let v = operator_values(op, sol, &samples.xs, &members[g])?;
        let m = MeanEstimate::from_slice(&v).expect("nonempty");
        Ok((m.value, m.std_error))
    };
    let combine = |stats: &[(f64, f64)]| -> (f64, f64) {
        let mut value = 0.0;
        let mut var = 0.0;
        for (g, &(m, se)) in stats.iter().enumerate() {
            value += weights[g] * m.abs();
            var += weights[g] * weights[g] * se * se;
        }
        (value, var.sqrt())
    };

    let labels = f_dict.labels();
    let rows: Vec<Result<(f64, f64)>> = match f_dict {
        Dictionary::Solution(d) => crate::par::map_collect(d.entries(), |sol| {
            let stats = (0..k).map(|g| group_stats(sol, g)).collect::<Result<Vec<_>>>()?;
            Ok(combine(&stats))
        }),
        Dictionary::TwoArg(d) => {
            let probes = probe_grid(op.coefficients().map(|c| c.target()));
            crate::par::map_collect(d.entries(), |two| {
                let mut stats = Vec::with_capacity(k);
                for g in 0..k {
                    let sol = two.solve_at_with_probes(grouping.labels[g], &probes)?;
                    stats.push(group_stats(&sol, g)?);
                }
                Ok(combine(&stats))
            })
        }
        Dictionary::Indicator(_) => {
            return Err(SteinError::InvalidArgument(
                "expected a solution or two-argument dictionary".into(),
            ))
        }
    };
    let mut cells = Vec::with_capacity(rows.len());
    for (fi, r) in rows.into_iter().enumerate() {
        let (mean, se) = r?;
        cells.push(EntryEstimate {
            labels: alloc::vec![labels[fi].clone()],
            mean,
            std_error: se,
        });
    }
    let (value, std_error, argmax) = pick_max(&cells);
    let count = cells.len();
    let mut report = DiscrepancyReport {
        kind: DiscrepancyKind::Tv,
        value,
        std_error,
        argmax_entry: argmax,
        per_entry: if count <= PER_ENTRY_LIMIT { cells } else { Vec::new() },
        n_effective: n_eff,
        excluded: samples.n() - in_support.len(),
        dropped_fraction: grouping.dropped_fraction,
        groups: Some(k),
        cells: count * k,
        alpha: DEFAULT_ALPHA,
        threshold: 0.0,
        verdict: Verdict::Inconclusive,
        f_dictionary: DictionaryInfo::of(f_dict),
        k_dictionary: None,
    };
    report.decide(DEFAULT_ALPHA, 1);
    Ok(report)
}

/// Which operator [`independence_test`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OperatorChoice {
    /// Gaussian for the standard normal target, diffusion otherwise.
    #[default]
    Auto,
    Gaussian,
    Diffusion,
}

/// Settings for [`independence_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TestConfig {
    pub mode: DiscrepancyKind,
    pub alpha: f64,
    pub operator: OperatorChoice,
    pub theta: f64,
    /// Target-quantile indicator dictionary size for the `f` side.
    pub indicator_size: usize,
    /// Sample-quantile indicator dictionary size for the `k` side.
    pub y_indicator_size: usize,
    /// Largest allowed dictionary.
    pub cap: usize,
    pub min_group_size: usize,
    pub min_n: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            mode: DiscrepancyKind::Ptv,
            alpha: DEFAULT_ALPHA,
            operator: OperatorChoice::Auto,
            theta: 1.0,
            indicator_size: 4,
            y_indicator_size: 4,
            cap: 1000,
            min_group_size: 30,
            min_n: 100,
        }
    }
}

/// Build the operator and dictionaries, estimate, and decide.
pub fn independence_test(
    samples: &JointSampleSet,
    target: &TargetDistribution,
    cfg: &TestConfig,
) -> Result<DiscrepancyReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 0.5) {
        return Err(SteinError::InvalidArgument(format!("alpha must be in (0, 1/2), got {}", cfg.alpha)));
    }
    let shared = Arc::new(target.clone());
    let op = match cfg.operator {
        OperatorChoice::Gaussian => SteinOperator::gaussian(shared)?,
        OperatorChoice::Diffusion => SteinOperator::diffusion(construct_diffusion_coefficients(target, cfg.theta)?),
        OperatorChoice::Auto if target.is_standard_normal() => SteinOperator::gaussian(shared)?,
        OperatorChoice::Auto => SteinOperator::diffusion(construct_diffusion_coefficients(target, cfg.theta)?),
    };
    let indicators = build_indicator_dictionary(target, cfg.indicator_size, cfg.cap)?;
    let f_dict: Dictionary = build_solution_dictionary(&op, &indicators)?.into();
    let estimate = match cfg.mode {
        DiscrepancyKind::Ptv => build_sample_indicator_dictionary(samples.ys(), cfg.y_indicator_size, cfg.cap)
            .and_then(|k| estimate_ptv_discrepancy(samples, &op, &f_dict, &k.into())),
        DiscrepancyKind::Tv => GroupIndex::from_samples(samples, cfg.min_group_size)
            .and_then(|g| estimate_tv_discrepancy(samples, &op, &f_dict, &g)),
    };
    let mut report = match estimate {
        Ok(r) => r,
        Err(_) if samples.n() < cfg.min_n => inconclusive(cfg.mode, samples.n(), &f_dict),
        Err(e) => return Err(e),
    };
    report.decide(cfg.alpha, cfg.min_n);
    Ok(report)
}

fn inconclusive(kind: DiscrepancyKind, n: usize, f_dict: &Dictionary) -> DiscrepancyReport {
    DiscrepancyReport {
        kind,
        value: 0.0,
        std_error: 0.0,
        argmax_entry: Vec::new(),
        per_entry: Vec::new(),
        n_effective: n,
        excluded: 0,
        dropped_fraction: 0.0,
        groups: None,
        cells: 1,
        alpha: DEFAULT_ALPHA,
        threshold: 0.0,
        verdict: Verdict::Inconclusive,
        f_dictionary: DictionaryInfo::of(f_dict),
        k_dictionary: None,
    }
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

impl core::fmt::Display for DiscrepancyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            DiscrepancyKind::Ptv => "ptv",
            DiscrepancyKind::Tv => "tv",
        })
    }
}

impl core::str::FromStr for DiscrepancyKind {
    type Err = SteinError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ptv" => Ok(DiscrepancyKind::Ptv),
            "tv" => Ok(DiscrepancyKind::Tv),
            other => Err(SteinError::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}
