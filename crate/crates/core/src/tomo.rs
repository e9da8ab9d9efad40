//! Theory-agnostic tomography: seeded synthetic counts from a fragment, and
//! recovery of the GPT dimension and a best-fit fragment from counts alone.
//!
//! The fit minimizes a weighted χ² over rank-`k` factorizations
//! `p(b|x,y) ≈ s_x · e_{b|y}` by alternating constrained least squares.
//! The gauge is fixed with `u = (1,0,…,0)` and every state having first
//! coordinate 1; the last effect of each measurement is `u` minus the rest.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Map;

use crate::embed::{self, Verdict};
use crate::error::{Error, Result};
use crate::lincone;
use crate::fragment::{predict, validate, Fragment, GptVector, Measurement, StatisticsTable};
use crate::optim::qp;

pub const MIN_TRIALS: u64 = 10;
pub const MAX_ALTERNATIONS: usize = 500;
pub const RANDOM_RESTARTS: usize = 8;
pub const GAUGE_ID: &str = "unit-first";

const CONVERGENCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub preparations: Vec<String>,
    pub measurements: Vec<String>,
    pub outcomes: Vec<Vec<String>>,
    /// `counts[x][y][b]`
    pub counts: Vec<Vec<Vec<u64>>>,
    /// `trials[x][y]`
    pub trials: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CountTable {
    pub fn check(&self) -> Result<()> {
        let (nx, ny) = (self.preparations.len(), self.measurements.len());
        if nx == 0 || ny == 0 {
            return Err(Error::Invalid("count table has no cells".into()));
        }
        if self.outcomes.len() != ny || self.counts.len() != nx || self.trials.len() != nx {
            return Err(Error::Dimension("count table shape disagrees with its labels".into()));
        }
        for x in 0..nx {
            if self.counts[x].len() != ny || self.trials[x].len() != ny {
                return Err(Error::Dimension(format!("row {x} has the wrong number of cells")));
            }
            for y in 0..ny {
                let cell = &self.counts[x][y];
                if cell.len() != self.outcomes[y].len() {
                    return Err(Error::Dimension(format!("cell ({x},{y}) has the wrong outcome count")));
                }
                if self.trials[x][y] == 0 {
                    return Err(Error::Invalid(format!("cell ({x},{y}) has no trials")));
                }
                if cell.iter().sum::<u64>() != self.trials[x][y] {
                    return Err(Error::Invalid(format!(
                        "counts of cell ({x},{y}) do not add up to its trials"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frequencies(&self) -> StatisticsTable {
        StatisticsTable {
            preparations: self.preparations.clone(),
            measurements: self.measurements.clone(),
            outcomes: self.outcomes.clone(),
            p: self
                .counts
                .iter()
                .zip(&self.trials)
                .map(|(row, n)| {
                    row.iter()
                        .zip(n)
                        .map(|(cell, &t)| cell.iter().map(|&c| c as f64 / t as f64).collect())
                        .collect()
                })
                .collect(),
            counts: Some(self.counts.clone()),
            trials: Some(self.trials.clone()),
            extra: Map::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<CountTable> {
        let c: CountTable = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }
}

/// Draw `trials` samples per cell from the fragment's predictions.
pub fn synth(f: &Fragment, trials: u64, seed: u64) -> Result<CountTable> {
    if trials == 0 {
        return Err(Error::Invalid("trials per cell must be at least 1".into()));
    }
    let table = predict(f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = table
        .p
        .iter()
        .map(|row| {
            row.iter()
                .map(|cell| sample_cell(cell, trials, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountTable {
        preparations: table.preparations,
        measurements: table.measurements,
        outcomes: table.outcomes,
        counts,
        trials: vec![vec![trials; f.measurements.len()]; f.states.len()],
        seed: Some(seed),
    })
}

/// Multinomial draw as a chain of conditional binomials.
fn sample_cell(p: &[f64], n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for (b, &pb) in p.iter().enumerate() {
        let pb = pb.clamp(0.0, 1.0);
        let c = if b + 1 == p.len() {
            left
        } else if left == 0 || pb <= 0.0 {
            0
        } else {
            let q = (pb / mass).clamp(0.0, 1.0);
            Binomial::new(left, q)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng)
        };
        out.push(c);
        left -= c;
        mass = (mass - pb).max(0.0);
    }
    Ok(out)
}

/// Weighted data in fit order: rows are preparations, columns the
/// independent outcomes (all but the last of each measurement).
struct Data {
    nx: usize,
    /// `(y, b)` for each column.
    cols: Vec<(usize, usize)>,
    /// Column ranges per measurement.
    groups: Vec<std::ops::Range<usize>>,
    f: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl Data {
    fn new(t: &StatisticsTable, trials: &[Vec<u64>]) -> Data {
        let nx = t.preparations.len();
        let mut cols = Vec::new();
        let mut groups = Vec::new();
        for (y, outs) in t.outcomes.iter().enumerate() {
            let start = cols.len();
            for b in 0..outs.len().saturating_sub(1) {
                cols.push((y, b));
            }
            groups.push(start..cols.len());
        }
        let m = cols.len();
        let f = DMatrix::from_fn(nx, m, |x, j| t.p[x][cols[j].0][cols[j].1]);
        let w = DMatrix::from_fn(nx, m, |x, j| {
            let n = trials[x][cols[j].0] as f64;
            let fh = f[(x, j)];
            1.0 / (fh * (1.0 - fh) / n).max(1.0 / (n * n))
        });
        Data {
            nx,
            cols,
            groups,
            f,
            w,
        }
    }

    fn m(&self) -> usize {
        self.cols.len()
    }

    fn chi2(&self, s: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
        let p = s * e.transpose();
        let mut c = 0.0;
        for x in 0..self.nx {
            for j in 0..self.m() {
                let r = self.f[(x, j)] - p[(x, j)];
                c += self.w[(x, j)] * r * r;
            }
        }
        c
    }
}

/// Effects of one measurement with states fixed. Variables are the stacked
/// independent effects; constraints keep every outcome probability ≥ 0.
fn effect_step(d: &Data, s: &DMatrix<f64>, e: &mut DMatrix<f64>) -> Result<()> {
    let k = s.ncols();
    for g in &d.groups {
        let nb = g.len();
        if nb == 0 {
            continue;
        }
        let n = nb * k;
        let mut h = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        for (bi, j) in g.clone().enumerate() {
            for x in 0..d.nx {
                let w = d.w[(x, j)];
                for a in 0..k {
                    lin[bi * k + a] -= 2.0 * w * d.f[(x, j)] * s[(x, a)];
                    for c in 0..k {
                        h[(bi * k + a, bi * k + c)] += 2.0 * w * s[(x, a)] * s[(x, c)];
                    }
                }
            }
        }
        // -s·e_b ≤ 0 and Σ_b s·e_b ≤ 1
        let rows = d.nx * (nb + 1);
        let mut a = DMatrix::zeros(rows, n);
        let mut bvec = DVector::zeros(rows);
        for x in 0..d.nx {
            for bi in 0..nb {
                for c in 0..k {
                    a[(x * (nb + 1) + bi, bi * k + c)] = -s[(x, c)];
                    a[(x * (nb + 1) + nb, bi * k + c)] = s[(x, c)];
                }
            }
            bvec[x * (nb + 1) + nb] = 1.0;
        }
        let z0 = DVector::from_iterator(
            n,
            g.clone().flat_map(|j| (0..k).map(move |c| (j, c))).map(|(j, c)| e[(j, c)]),
        );
        let r = qp::solve(&h, &lin, &a, &bvec, &z0)?;
        for (bi, j) in g.clone().enumerate() {
            for c in 0..k {
                e[(j, c)] = r.z[bi * k + c];
            }
        }
    }
    Ok(())
}

/// Each state with effects fixed; the first coordinate stays 1.
fn state_step(d: &Data, s: &mut DMatrix<f64>, e: &DMatrix<f64>) -> Result<()> {
    let k = e.ncols();
    if k == 1 {
        return Ok(());
    }
    let n = k - 1;
    let m = d.m();
    // constraint rows: -p_j ≤ 0 per column, Σ_{b in group} p ≤ 1 per group
    let rows = m + d.groups.len();
    let mut a = DMatrix::zeros(rows, n);
    let mut base = DVector::zeros(rows);
    for j in 0..m {
        for c in 0..n {
            a[(j, c)] = -e[(j, c + 1)];
        }
        base[j] = e[(j, 0)];
    }
    for (gi, g) in d.groups.iter().enumerate() {
        let mut b0 = 1.0;
        for j in g.clone() {
            for c in 0..n {
                a[(m + gi, c)] += e[(j, c + 1)];
            }
            b0 -= e[(j, 0)];
        }
        base[m + gi] = b0;
    }
    for x in 0..d.nx {
        let mut h = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        for j in 0..m {
            let w = d.w[(x, j)];
            let resid0 = d.f[(x, j)] - e[(j, 0)];
            for a_ in 0..n {
                lin[a_] -= 2.0 * w * resid0 * e[(j, a_ + 1)];
                for c in 0..n {
                    h[(a_, c)] += 2.0 * w * e[(j, a_ + 1)] * e[(j, c + 1)];
                }
            }
        }
        let z0 = DVector::from_iterator(n, (0..n).map(|c| s[(x, c + 1)]));
        let r = qp::solve(&h, &lin, &a, &base, &z0)?;
        for c in 0..n {
            s[(x, c + 1)] = r.z[c];
        }
    }
    Ok(())
}

struct Run {
    s: DMatrix<f64>,
    e: DMatrix<f64>,
    chi2: f64,
    converged: bool,
}

fn alternate(d: &Data, mut s: DMatrix<f64>, mut e: DMatrix<f64>) -> Result<Run> {
    let mut chi2 = d.chi2(&s, &e);
    for _ in 0..MAX_ALTERNATIONS {
        effect_step(d, &s, &mut e)?;
        state_step(d, &mut s, &e)?;
        let next = d.chi2(&s, &e);
        let done = (chi2 - next).abs() <= CONVERGENCE * chi2.max(1.0);
        chi2 = next;
        if done {
            return Ok(Run {
                s,
                e,
                chi2,
                converged: true,
            });
        }
    }
    Ok(Run {
        s,
        e,
        chi2,
        converged: false,
    })
}

/// Constant effects at the mean frequencies: feasible for any states.
fn flat_effects(d: &Data, k: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(d.m(), k);
    for j in 0..d.m() {
        e[(j, 0)] = (0..d.nx).map(|x| d.f[(x, j)]).sum::<f64>() / d.nx as f64;
    }
    e
}

fn svd_states(d: &Data, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(d.nx, k);
    s.column_mut(0).fill(1.0);
    if k == 1 {
        return s;
    }
    let mut centered = d.f.clone();
    for j in 0..d.m() {
        let mean = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let Ok(svd) = lincone::svd(&centered) else {
        return s;
    };
    for c in 1..k {
        if let Some(&sv) = svd.singular_values.get(c - 1) {
            for x in 0..d.nx {
                s[(x, c)] = svd.u[(x, c - 1)] * sv;
            }
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub dimension: usize,
    pub chi2: f64,
    pub dof: i64,
    pub threshold: f64,
    pub accepted: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub dimension: usize,
    pub fragment: Fragment,
    pub chi2: f64,
    pub dof: i64,
    pub trace: Vec<DimensionFit>,
    pub gauge: String,
    /// Condition numbers of the fitted state and effect matrices.
    pub state_condition: f64,
    pub effect_condition: f64,
    pub assumptions: Vec<String>,
}

/// Free parameters minus gauge freedom, subtracted from the data count.
fn degrees_of_freedom(nx: usize, m: usize, k: usize) -> i64 {
    let data = (nx * m) as i64;
    let params = (nx * (k - 1) + m * k) as i64 - (k * (k - 1)) as i64;
    data - params
}

/// Acceptance threshold on χ²; saturated models are held to the `dof = 1`
/// threshold.
fn threshold(dof: i64) -> f64 {
    let d = dof.max(1) as f64;
    d * (1.0 + 3.0 * (2.0 / d).sqrt())
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let Ok(sv) = lincone::singular_values(m) else {
        return f64::INFINITY;
    };
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Fit counts with the smallest dimension passing the χ² rule.
pub fn fit(c: &CountTable, max_dimension: usize) -> Result<FitResult> {
    c.check()?;
    for (x, row) in c.trials.iter().enumerate() {
        for (y, &n) in row.iter().enumerate() {
            if n < MIN_TRIALS {
                return Err(Error::Invalid(format!(
                    "cell ({x},{y}) has {n} trials, need at least {MIN_TRIALS}"
                )));
            }
        }
    }
    fit_table(&c.frequencies(), &c.trials, max_dimension, c.seed.unwrap_or(0))
}

/// Fit a frequency table with given trial counts.
pub fn fit_table(
    t: &StatisticsTable,
    trials: &[Vec<u64>],
    max_dimension: usize,
    seed: u64,
) -> Result<FitResult> {
    t.check(1e-9)?;
    let d = Data::new(t, trials);
    if d.m() == 0 {
        return Err(Error::Invalid("no measurement has two outcomes".into()));
    }
    let cap = max_dimension.min(d.nx).min(d.m() + 1).max(1);
    let mut trace = Vec::new();
    let mut prev: Option<Run> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=cap {
        let mut runs = Vec::new();
        runs.push(alternate(&d, svd_states(&d, k), flat_effects(&d, k))?);
        for _ in 0..RANDOM_RESTARTS {
            let mut s = DMatrix::zeros(d.nx, k);
            s.column_mut(0).fill(1.0);
            for x in 0..d.nx {
                for c in 1..k {
                    s[(x, c)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            runs.push(alternate(&d, s, flat_effects(&d, k))?);
        }
        if let Some(p) = &prev {
            // pad the previous optimum; a small new state coordinate keeps χ²
            let mut s = DMatrix::zeros(d.nx, k);
            let mut e = DMatrix::zeros(d.m(), k);
            s.view_mut((0, 0), (d.nx, k - 1)).copy_from(&p.s);
            e.view_mut((0, 0), (d.m(), k - 1)).copy_from(&p.e);
            for x in 0..d.nx {
                s[(x, k - 1)] = 1e-3 * rng.sample::<f64, _>(StandardNormal);
            }
            runs.push(alternate(&d, s, e)?);
        }
        let converged = runs.iter().any(|r| r.converged);
        if !converged {
            return Err(Error::NonConvergence {
                dimension: k,
                alternations: MAX_ALTERNATIONS,
            });
        }
        let best = runs
            .into_iter()
            .min_by(|a, b| a.chi2.total_cmp(&b.chi2))
            .expect("at least one run");
        let dof = degrees_of_freedom(d.nx, d.m(), k);
        let thr = threshold(dof);
        let accepted = best.chi2 <= thr;
        trace.push(DimensionFit {
            dimension: k,
            chi2: best.chi2,
            dof,
            threshold: thr,
            accepted,
            converged: best.converged,
        });
        if accepted {
            let fragment = assemble(t, &d, &best.s, &best.e)?;
            return Ok(FitResult {
                dimension: k,
                fragment,
                chi2: best.chi2,
                dof,
                trace,
                gauge: GAUGE_ID.into(),
                state_condition: condition(&best.s),
                effect_condition: condition(&best.e),
                assumptions: vec!["tomographic completeness of the probed procedures".into()],
            });
        }
        prev = Some(best);
    }
    Err(Error::SelectionFailure { max_dimension: cap })
}

fn assemble(t: &StatisticsTable, d: &Data, s: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<Fragment> {
    let k = s.ncols();
    let mut unit = vec![0.0; k];
    unit[0] = 1.0;
    let states = t
        .preparations
        .iter()
        .enumerate()
        .map(|(x, l)| GptVector::new(l.clone(), s.row(x).iter().copied().collect()))
        .collect();
    let mut effects = Vec::new();
    let mut measurements = Vec::new();
    for (y, outs) in t.outcomes.iter().enumerate() {
        let g = &d.groups[y];
        let mut last = unit.clone();
        for (bi, j) in g.clone().enumerate() {
            let v: Vec<f64> = e.row(j).iter().copied().collect();
            last.iter_mut().zip(&v).for_each(|(l, x)| *l -= x);
            effects.push(GptVector::new(outs[bi].clone(), v));
        }
        if let Some(l) = outs.last() {
            effects.push(GptVector::new(l.clone(), last));
        }
        measurements.push(Measurement::new(t.measurements[y].clone(), outs.clone()));
    }
    let f = Fragment {
        name: "fitted".into(),
        dimension: k,
        unit_effect: unit,
        states,
        effects,
        measurements,
        subsystems: None,
        extra: Map::new(),
    };
    let report = validate(&f)?;
    if !report.passed {
        return Err(Error::Numerical(format!(
            "fitted fragment failed validation: {}",
            report.summary()
        )));
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub dimension: usize,
    pub chi2: f64,
    pub dof: i64,
    /// Verdict after allowing for sampling noise.
    pub verdict: String,
    /// Verdict of the exact embedding LP on the fitted fragment.
    pub strict_verdict: String,
    pub r_star: f64,
    /// Depolarizing weight attributable to sampling noise.
    pub noise_threshold: f64,
    pub accessible_dimension: usize,
    pub fit: FitResult,
}

/// `3/√N` for the smallest cell: the depolarizing weight a sampling
/// fluctuation of a few standard deviations can fake.
pub fn noise_threshold(c: &CountTable) -> f64 {
    let n = c.trials.iter().flatten().copied().min().unwrap_or(1).max(1);
    3.0 / (n as f64).sqrt()
}

/// Fit, accessibilize, test embeddability and measure robustness.
pub fn verdict_pipeline(c: &CountTable, max_dimension: usize) -> Result<PipelineReport> {
    let fit = fit(c, max_dimension)?;
    let af = embed::accessibilize(&fit.fragment)?;
    let strict = embed::test_embeddability(&af)?;
    let rob = embed::robustness(&af)?;
    let r_star = if strict.is_embeddable() { 0.0 } else { rob.r_star };
    let thr = noise_threshold(c);
    let verdict = if r_star <= thr {
        "embeddable"
    } else {
        "not_embeddable"
    };
    Ok(PipelineReport {
        dimension: fit.dimension,
        chi2: fit.chi2,
        dof: fit.dof,
        verdict: verdict.into(),
        strict_verdict: strict.name().into(),
        r_star,
        noise_threshold: thr,
        accessible_dimension: af.dimension,
        fit,
    })
}

/// Strict verdict of a fragment after an invertible gauge transform that
/// fixes the unit effect: states `s → G s`, effects `e → G⁻ᵀ e`.
pub fn verdict_under_gauge(f: &Fragment, g: &DMatrix<f64>) -> Result<Verdict> {
    let k = f.dimension;
    if g.shape() != (k, k) {
        return Err(Error::Dimension("gauge matrix has the wrong shape".into()));
    }
    let ginv_t = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("gauge matrix is singular".into()))?
        .transpose();
    let map = |m: &DMatrix<f64>, v: &[f64]| -> Vec<f64> {
        (m * DVector::from_column_slice(v)).iter().copied().collect()
    };
    let mut h = f.clone();
    for s in h.states.iter_mut() {
        s.vector = map(g, &s.vector);
    }
    for e in h.effects.iter_mut() {
        e.vector = map(&ginv_t, &e.vector);
    }
    h.unit_effect = map(&ginv_t, &f.unit_effect);
    embed::test_embeddability(&embed::accessibilize(&h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn deterministic_cell() {
        let f = scenarios::simplex(2).unwrap();
        let c = synth(&f, 100, 1).unwrap();
        assert_eq!(c.counts[0][0], vec![100, 0]);
        assert_eq!(c.counts[1][0], vec![0, 100]);
    }

    #[test]
    fn fair_coin_concentrates_and_repeats() {
        let f = scenarios::qubit_stabilizer();
        let a = synth(&f, 100_000, 42).unwrap();
        let b = synth(&f, 100_000, 42).unwrap();
        assert_eq!(a, b);
        // +x measured along Y is a fair coin
        let cell = &a.counts[0][1];
        let sigma = (100_000.0f64 * 0.25).sqrt();
        assert!((cell[0] as f64 - 50_000.0).abs() <= 3.0 * sigma);
        assert_ne!(a, synth(&f, 100_000, 43).unwrap());
    }

    #[test]
    fn impossible_outcomes_never_appear() {
        let f = scenarios::boxworld_pr();
        let c = synth(&f, 1000, 9).unwrap();
        let p = predict(&f).unwrap();
        for x in 0..4 {
            for y in 0..2 {
                for b in 0..2 {
                    if p.p[x][y][b] == 0.0 {
                        assert_eq!(c.counts[x][y][b], 0);
                    }
                }
            }
        }
    }

    #[test]
    fn too_few_trials() {
        let c = synth(&scenarios::simplex(2).unwrap(), 5, 0).unwrap();
        assert!(matches!(fit(&c, 4), Err(Error::Invalid(_))));
    }

    #[test]
    fn count_json_round_trip() {
        let c = synth(&scenarios::boxworld_pr(), 50, 2).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(CountTable::from_json(&text).unwrap(), c);
        let mut bad = c.clone();
        bad.counts[0][0][0] += 1;
        assert!(CountTable::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }

    #[test]
    fn exact_frequencies_recover_the_table() {
        for f in [scenarios::boxworld_pr(), scenarios::qubit_stabilizer()] {
            let t = predict(&f).unwrap();
            let trials = vec![vec![1_000_000u64; t.measurements.len()]; t.preparations.len()];
            let r = fit_table(&t, &trials, 6, 0).unwrap();
            assert!(r.chi2 < 1e-6, "{}", r.chi2);
            let back = predict(&r.fragment).unwrap();
            for (a, b) in back.p.iter().flatten().flatten().zip(t.p.iter().flatten().flatten()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn chi2_trace_is_monotone() {
        let c = synth(&scenarios::qubit_stabilizer(), 100_000, 5).unwrap();
        let r = fit(&c, 4).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].chi2 <= w[0].chi2 + 1e-9 * w[0].chi2.max(1.0));
        }
    }

    #[test]
    fn gauge_does_not_change_verdicts() {
        let c = synth(&scenarios::boxworld_pr(), 100_000, 8).unwrap();
        let r = fit(&c, 4).unwrap();
        let base = embed::test_embeddability(&embed::accessibilize(&r.fragment).unwrap())
            .unwrap()
            .is_embeddable();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = r.dimension;
        for _ in 0..5 {
            let mut g = DMatrix::identity(k, k);
            for a in 1..k {
                for b in 0..k {
                    g[(a, b)] += 0.4 * rng.random_range(-1.0..1.0);
                }
            }
            let v = verdict_under_gauge(&r.fragment, &g).unwrap();
            assert_eq!(v.is_embeddable(), base);
        }
    }
}
